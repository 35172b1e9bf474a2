"""Fused sequence ops: rotary embedding and the masked joint attention.

Joint attention implements the composite masking rule of the model in one
op: every query may read all text keys, text queries may NOT read motion
keys, and motion-to-motion attention is restricted to a centered band.
Motion rows are processed in fixed-size query chunks against only the keys
their band can reach, so cost and memory grow linearly with motion length
for a fixed band radius.
"""
from __future__ import annotations

import numpy as np

from ..errors import OddHeadDim, ShapeMismatch
from .tensor import Tensor, _accum, _coerce, _result


_ROPE_CACHE: dict = {}


def _rope_tables(positions: np.ndarray, dh: int, base: float, dtype):
    if dh % 2:
        raise OddHeadDim(f"rotary embedding needs an even head dim, got {dh}")
    pos = np.asarray(positions, dtype=np.float64)
    key = (pos.tobytes(), dh, float(base), np.dtype(dtype).char)
    hit = _ROPE_CACHE.get(key)
    if hit is not None:
        return hit
    half = dh // 2
    inv = base ** (-np.arange(half, dtype=np.float64) / half)
    ang = pos[:, None] * inv[None, :]
    tables = np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)
    if len(_ROPE_CACHE) > 64:
        _ROPE_CACHE.clear()
    _ROPE_CACHE[key] = tables
    return tables


def rope(x: Tensor, positions: np.ndarray, base: float = 10000.0) -> Tensor:
    """Rotate consecutive feature pairs of x (..., S, dh) by position-dependent angles."""
    x = _coerce(x)
    s, dh = x.shape[-2], x.shape[-1]
    if len(positions) != s:
        raise ShapeMismatch(f"{len(positions)} positions for sequence length {s}")
    cos, sin = _rope_tables(positions, dh, base, x.dtype)

    x1 = x.data[..., 0::2]
    x2 = x.data[..., 1::2]
    out = np.empty_like(x.data)
    out[..., 0::2] = x1 * cos - x2 * sin
    out[..., 1::2] = x1 * sin + x2 * cos

    def backward(g):
        g1 = g[..., 0::2]
        g2 = g[..., 1::2]
        gx = np.empty_like(g)
        gx[..., 0::2] = g1 * cos + g2 * sin
        gx[..., 1::2] = -g1 * sin + g2 * cos
        _accum(x, gx)

    return _result(out, (x,), backward)


_MASK_CACHE: dict = {}


def _chunk_mask(m: int, radius: int, q_off: int, nq: int, nk: int) -> np.ndarray:
    """Boolean mask for one query chunk: text keys free, band over motion keys.

    q_off is the first query's index relative to the first motion key of the
    chunk; interior chunks share one geometry, so the cache stays tiny.
    """
    key = (m, radius, q_off, nq, nk)
    hit = _MASK_CACHE.get(key)
    if hit is not None:
        return hit
    qi = (np.arange(nq) + q_off)[:, None]
    kj = np.arange(nk)[None, :]
    mask = np.concatenate([np.ones((nq, m), dtype=bool), np.abs(qi - kj) <= radius], axis=1)
    if len(_MASK_CACHE) > 256:
        _MASK_CACHE.clear()
    _MASK_CACHE[key] = mask
    return mask


def _softmax_masked(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is not None:
        logits = np.where(mask, logits, -np.inf)
    mx = logits.max(axis=-1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.exp(logits - mx)
    return e / e.sum(axis=-1, keepdims=True)


def joint_attention(q: Tensor, k: Tensor, v: Tensor, n_text: int,
                    band_radius: int, block: int = 128) -> Tensor:
    """Masked attention over a [text; motion] sequence.

    q, k, v: (H, S, dh) with the first n_text positions holding text tokens.
    Allowed key sets: text rows -> text keys only; motion row i -> all text
    keys plus motion keys j with |i - j| <= band_radius.
    """
    q, k, v = _coerce(q), _coerce(k), _coerce(v)
    if q.shape != k.shape or q.shape != v.shape or q.ndim != 3:
        raise ShapeMismatch(f"q/k/v must share shape (H, S, dh): {q.shape}, {k.shape}, {v.shape}")
    h, s, dh = q.shape
    m = n_text
    n = s - m
    if m < 1 or n < 0:
        raise ShapeMismatch(f"invalid n_text={n_text} for sequence length {s}")
    scale = 1.0 / np.sqrt(dh)

    qd, kd, vd = q.data, k.data, v.data
    out = np.empty_like(qd)

    # Text rows attend within the text block only.
    lt = (qd[:, :m] @ np.swapaxes(kd[:, :m], -1, -2)) * scale
    pt = _softmax_masked(lt, None)
    out[:, :m] = pt @ vd[:, :m]

    # Motion rows, processed in query chunks against reachable keys.
    chunks: list[tuple[int, int, int, int, np.ndarray]] = []
    for cs in range(0, n, block):
        ce = min(n, cs + block)
        ks = max(0, cs - band_radius)
        ke = min(n, ce + band_radius)
        qb = qd[:, m + cs:m + ce]
        kb = np.concatenate([kd[:, :m], kd[:, m + ks:m + ke]], axis=1)
        logits = (qb @ np.swapaxes(kb, -1, -2)) * scale
        mask = _chunk_mask(m, band_radius, cs - ks, ce - cs, ke - ks)
        pb = _softmax_masked(logits, mask)
        vb = np.concatenate([vd[:, :m], vd[:, m + ks:m + ke]], axis=1)
        out[:, m + cs:m + ce] = pb @ vb
        chunks.append((cs, ce, ks, ke, pb))

    def backward(g):
        gq = np.zeros_like(qd)
        gk = np.zeros_like(kd)
        gv = np.zeros_like(vd)

        gt = g[:, :m]
        gv[:, :m] += np.swapaxes(pt, -1, -2) @ gt
        dpt = gt @ np.swapaxes(vd[:, :m], -1, -2)
        dlt = pt * (dpt - (dpt * pt).sum(axis=-1, keepdims=True))
        gq[:, :m] += (dlt @ kd[:, :m]) * scale
        gk[:, :m] += (np.swapaxes(dlt, -1, -2) @ qd[:, :m]) * scale

        for cs, ce, ks, ke, pb in chunks:
            gb = g[:, m + cs:m + ce]
            kb = np.concatenate([kd[:, :m], kd[:, m + ks:m + ke]], axis=1)
            vb = np.concatenate([vd[:, :m], vd[:, m + ks:m + ke]], axis=1)
            dv = np.swapaxes(pb, -1, -2) @ gb
            gv[:, :m] += dv[:, :m]
            gv[:, m + ks:m + ke] += dv[:, m:]
            dpb = gb @ np.swapaxes(vb, -1, -2)
            dlb = pb * (dpb - (dpb * pb).sum(axis=-1, keepdims=True))
            gq[:, m + cs:m + ce] += (dlb @ kb) * scale
            dk = (np.swapaxes(dlb, -1, -2) @ qd[:, m + cs:m + ce]) * scale
            gk[:, :m] += dk[:, :m]
            gk[:, m + ks:m + ke] += dk[:, m:]

        _accum(q, gq)
        _accum(k, gk)
        _accum(v, gv)

    return _result(out, (q, k, v), backward)
