"""Velocity-prediction transformer over joint text+motion sequences.

Architecture: per-frame motion tokens and refined text tokens flow through
dual-stream blocks (separate projections/MLPs, one joint attention) and then
single-stream blocks (unified sequence, parallel token-axis and channel-axis
attention). Timestep + pooled-text conditioning enters through per-block
adaptive layer norm whose gates start at zero, so every block is the
identity at init and the freshly initialized model outputs its output bias.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import (
    Tensor, add, affine, concat, default_dtype, embedding_lookup,
    joint_attention, layer_norm, load_checkpoint, matmul, mean, mul, narrow,
    no_grad, reshape, rope, save_checkpoint, silu, softmax, tensor, transpose,
)
from ..errors import CheckpointMismatch, ConfigInvalid, ShapeMismatch, UnknownToken
from .config import ModelConfig, manifest


@dataclass
class Conditioning:
    """Model conditioning: token ids, diffusion time, optional pooled-text override."""

    text_tokens: np.ndarray
    timestep: float
    global_embed: np.ndarray | None = None


@dataclass
class TextState:
    refined: Tensor        # (m, d)
    global_vec: Tensor     # (1, d)


def apply_rope(q: Tensor, k: Tensor, positions: np.ndarray,
               base: float = 10000.0) -> tuple[Tensor, Tensor]:
    """Rotate a query/key pair by shared unified-sequence positions."""
    return rope(q, positions, base), rope(k, positions, base)


def sinusoidal_embedding(t: float, dim: int, scale: float = 1000.0) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = scale * float(t) * freqs
    return np.concatenate([np.cos(ang), np.sin(ang)]).astype(default_dtype())


def init_weights(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Seeded init: normal(0, 0.02) weights, zero biases, ones LN gains.

    Modulation output layers and the motion output projection start at zero
    so the deep path is inert at init.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in manifest(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.endswith(("mod.w2", "mod.b2")) or name in ("motion_out.w", "motion_out.b"):
            data = np.zeros(shape)
        elif leaf == "g":
            data = np.ones(shape)
        elif leaf.startswith("b"):
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, 0.02, size=shape)
        params[name] = tensor(data, requires_grad=True)
    return params


class MotionDiT:
    """The velocity model v(x_t, text, t)."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor]):
        expected = manifest(cfg)
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        if missing or extra:
            raise CheckpointMismatch(f"weight names disagree with manifest: missing={sorted(missing)[:4]} extra={sorted(extra)[:4]}")
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise CheckpointMismatch(f"{name}: shape {params[name].shape} != manifest {shape}")
        self.cfg = cfg
        self.p = params

    @classmethod
    def create(cls, cfg: ModelConfig, seed: int = 0) -> "MotionDiT":
        return cls(cfg, init_weights(cfg, seed))

    # -- parameter plumbing ------------------------------------------------
    def parameters(self) -> dict[str, Tensor]:
        return self.p

    def n_params(self) -> int:
        return sum(t.size for t in self.p.values())

    def set_trainable(self, flag: bool) -> None:
        for t in self.p.values():
            t.requires_grad = flag

    def copy(self) -> "MotionDiT":
        params = {k: tensor(t.data.copy(), requires_grad=t.requires_grad) for k, t in self.p.items()}
        return MotionDiT(self.cfg, params)

    def save(self, path, extra_tensors: dict[str, np.ndarray] | None = None,
             meta: dict | None = None) -> None:
        tensors = {k: t.data for k, t in self.p.items()}
        for k, v in (extra_tensors or {}).items():
            tensors["extra." + k] = v
        full_meta = {"model_config": self.cfg.to_dict()}
        full_meta.update(meta or {})
        save_checkpoint(path, tensors, full_meta)

    @classmethod
    def load(cls, path) -> tuple["MotionDiT", dict, dict[str, np.ndarray]]:
        tensors, meta = load_checkpoint(path)
        if "model_config" not in meta:
            raise CheckpointMismatch(f"{path} has no model_config in its header")
        cfg = ModelConfig.from_dict(meta["model_config"])
        params = {}
        for name, shape in manifest(cfg).items():
            if name not in tensors:
                raise CheckpointMismatch(f"checkpoint is missing weight {name}")
            arr = tensors[name]
            if tuple(arr.shape) != shape:
                raise CheckpointMismatch(f"{name}: stored shape {arr.shape} != manifest {shape}")
            params[name] = Tensor(arr.astype(default_dtype()), requires_grad=True)
        extra = {k[len("extra."):]: v for k, v in tensors.items() if k.startswith("extra.")}
        return cls(cfg, params), meta, extra

    # -- small layers -------------------------------------------------------
    def _lin(self, x: Tensor, w: str, b: str) -> Tensor:
        return affine(x, self.p[w], self.p[b])

    def _heads(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        return transpose(reshape(x, (n, self.cfg.n_heads, self.cfg.head_dim)), (1, 0, 2))

    def _merge(self, x: Tensor) -> Tensor:
        return reshape(transpose(x, (1, 0, 2)), (x.shape[1], self.cfg.d_model))

    def _ln_affine(self, x: Tensor, prefix: str) -> Tensor:
        return add(mul(layer_norm(x), self.p[prefix + ".g"]), self.p[prefix + ".b"])

    def _mlp(self, x: Tensor, prefix: str) -> Tensor:
        h = silu(affine(x, self.p[prefix + ".w1"], self.p[prefix + ".b1"]))
        return affine(h, self.p[prefix + ".w2"], self.p[prefix + ".b2"])

    def _modulation(self, prefix: str, cond_vec: Tensor, n_chunks: int) -> list[Tensor]:
        h = silu(affine(cond_vec, self.p[prefix + "mod.w1"], self.p[prefix + "mod.b1"]))
        out = affine(h, self.p[prefix + "mod.w2"], self.p[prefix + "mod.b2"])
        d = self.cfg.d_model
        return [narrow(out, 1, i * d, d) for i in range(n_chunks)]

    @staticmethod
    def _modulate(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
        return add(mul(layer_norm(x), add(scale, 1.0)), shift)

    # -- public sub-ops ------------------------------------------------------
    def embed_motion(self, frames) -> Tensor:
        """Linear projection of (n, 201) frame vectors to motion tokens."""
        x = frames if isinstance(frames, Tensor) else tensor(frames)
        if x.ndim != 2 or x.shape[1] != self.cfg.motion_dim:
            raise ShapeMismatch(f"expected (n, {self.cfg.motion_dim}), got {x.shape}")
        return self._lin(x, "motion_in.w", "motion_in.b")

    def refine_text(self, token_ids: np.ndarray) -> Tensor:
        """Embedding lookup + bidirectional refiner. Returns (m, d) tokens."""
        ids = np.asarray(token_ids)
        if ids.ndim != 1 or ids.size < 1:
            raise ShapeMismatch("need a non-empty 1-d id array")
        if ids.size > self.cfg.max_text_tokens:
            raise ShapeMismatch(f"{ids.size} tokens exceeds max_text_tokens={self.cfg.max_text_tokens}")
        if ids.min() < 0 or ids.max() >= self.cfg.vocab_size:
            raise UnknownToken(f"token ids outside vocab of size {self.cfg.vocab_size}")
        h = embedding_lookup(self.p["token_emb"], ids)
        pos = np.arange(ids.size)
        for i in range(self.cfg.n_refiner_blocks):
            pfx = f"refiner.{i}."
            a = self._ln_affine(h, pfx + "ln1")
            q = rope(self._heads(self._lin(a, pfx + "wq", pfx + "bq")), pos, self.cfg.rope_base)
            k = rope(self._heads(self._lin(a, pfx + "wk", pfx + "bk")), pos, self.cfg.rope_base)
            v = self._heads(self._lin(a, pfx + "wv", pfx + "bv"))
            att = self._merge(joint_attention(q, k, v, ids.size, 0))
            h = add(h, self._lin(att, pfx + "wo", pfx + "bo"))
            h = add(h, self._mlp(self._ln_affine(h, pfx + "ln2"), pfx + "mlp"))
        return h

    def encode_text(self, token_ids: np.ndarray) -> TextState:
        refined = self.refine_text(token_ids)
        pooled = mean(refined, axis=0, keepdims=True)
        global_vec = self._lin(pooled, "text_pool.w", "text_pool.b")
        return TextState(refined=refined, global_vec=global_vec)

    def time_embed(self, t: float) -> Tensor:
        emb = tensor(sinusoidal_embedding(t, self.cfg.time_embed_dim)[None, :])
        h = silu(affine(emb, self.p["time_mlp.w1"], self.p["time_mlp.b1"]))
        return affine(h, self.p["time_mlp.w2"], self.p["time_mlp.b2"])

    def cond_vector(self, t: float, global_vec: Tensor) -> Tensor:
        # normalize both signals so the zero-initialized modulation layers see
        # O(1) inputs; otherwise the conditioning path opens glacially
        if not 0.0 <= t <= 1.0:
            raise ConfigInvalid(f"timestep must lie in [0, 1], got {t}")
        return concat([layer_norm(self.time_embed(t)), layer_norm(global_vec)], axis=1)

    def adaln(self, h: Tensor, t: float, global_embed: np.ndarray, block: str = "dual.0.") -> Tensor:
        """Attention-side modulation of `h` under the given conditioning."""
        g = tensor(np.asarray(global_embed).reshape(1, self.cfg.d_model))
        cond_vec = self.cond_vector(t, g)
        mods = self._modulation(block, cond_vec, 6)
        return mul(self._modulate(h, mods[0], mods[1]), mods[2])

    # -- blocks ---------------------------------------------------------------
    def _dual_block(self, i: int, h_m: Tensor, h_t: Tensor, cond_vec: Tensor) -> tuple[Tensor, Tensor]:
        pfx = f"dual.{i}."
        m, n = h_t.shape[0], h_m.shape[0]
        pos_t = np.arange(m)
        pos_m = m + np.arange(n)
        s_a, sh_a, g_a, s_m, sh_m, g_m = self._modulation(pfx, cond_vec, 6)

        m_in = self._modulate(h_m, s_a, sh_a)
        t_in = self._ln_affine(h_t, pfx + "text.ln1")
        base = self.cfg.rope_base
        q = concat([
            rope(self._heads(self._lin(t_in, pfx + "text.wq", pfx + "text.bq")), pos_t, base),
            rope(self._heads(self._lin(m_in, pfx + "motion.wq", pfx + "motion.bq")), pos_m, base),
        ], axis=1)
        k = concat([
            rope(self._heads(self._lin(t_in, pfx + "text.wk", pfx + "text.bk")), pos_t, base),
            rope(self._heads(self._lin(m_in, pfx + "motion.wk", pfx + "motion.bk")), pos_m, base),
        ], axis=1)
        v = concat([
            self._heads(self._lin(t_in, pfx + "text.wv", pfx + "text.bv")),
            self._heads(self._lin(m_in, pfx + "motion.wv", pfx + "motion.bv")),
        ], axis=1)
        att = joint_attention(q, k, v, m, self.cfg.band_radius)
        att_t = self._merge(narrow(att, 1, 0, m))
        att_m = self._merge(narrow(att, 1, m, n))
        h_t = add(h_t, self._lin(att_t, pfx + "text.wo", pfx + "text.bo"))
        h_m = add(h_m, mul(self._lin(att_m, pfx + "motion.wo", pfx + "motion.bo"), g_a))
        h_t = add(h_t, self._mlp(self._ln_affine(h_t, pfx + "text.ln2"), pfx + "text.mlp"))
        h_m = add(h_m, mul(self._mlp(self._modulate(h_m, s_m, sh_m), pfx + "motion.mlp"), g_m))
        return h_m, h_t

    def _channel_attention(self, x_in: Tensor, pfx: str) -> Tensor:
        s = x_in.shape[0]
        g = self.cfg.n_channel_groups
        dg = self.cfg.d_model // g
        qc = reshape(self._lin(x_in, pfx + "wcq", pfx + "bcq"), (s, g, dg))
        kc = reshape(self._lin(x_in, pfx + "wck", pfx + "bck"), (s, g, dg))
        vc = reshape(self._lin(x_in, pfx + "wcv", pfx + "bcv"), (s, g, dg))
        logits = mul(matmul(qc, transpose(kc)), 1.0 / np.sqrt(dg))
        probs = softmax(logits, axis=-1)
        mixed = reshape(matmul(probs, vc), (s, self.cfg.d_model))
        return self._lin(mixed, pfx + "wco", pfx + "bco")

    def _single_block(self, i: int, seq: Tensor, cond_vec: Tensor, m: int) -> Tensor:
        pfx = f"single.{i}."
        s = seq.shape[0]
        pos = np.arange(s)
        s_a, sh_a, g_a, s_m, sh_m, g_m = self._modulation(pfx, cond_vec, 6)

        x_in = self._modulate(seq, s_a, sh_a)
        base = self.cfg.rope_base
        q = rope(self._heads(self._lin(x_in, pfx + "wq", pfx + "bq")), pos, base)
        k = rope(self._heads(self._lin(x_in, pfx + "wk", pfx + "bk")), pos, base)
        v = self._heads(self._lin(x_in, pfx + "wv", pfx + "bv"))
        spatial = self._lin(self._merge(joint_attention(q, k, v, m, self.cfg.band_radius)),
                            pfx + "wo", pfx + "bo")
        channel = self._channel_attention(x_in, pfx)
        seq = add(seq, mul(add(spatial, channel), g_a))
        seq = add(seq, mul(self._mlp(self._modulate(seq, s_m, sh_m), pfx + "mlp"), g_m))
        return seq

    # -- full forward -----------------------------------------------------------
    def forward_core(self, x, t: float, state: TextState,
                     global_override: Tensor | None = None) -> Tensor:
        h_m = self.embed_motion(x)
        g = state.global_vec if global_override is None else global_override
        cond_vec = self.cond_vector(t, g)
        h_t = state.refined
        for i in range(self.cfg.n_dual_blocks):
            h_m, h_t = self._dual_block(i, h_m, h_t, cond_vec)
        m, n = h_t.shape[0], h_m.shape[0]
        seq = concat([h_t, h_m], axis=0)
        for i in range(self.cfg.n_single_blocks):
            seq = self._single_block(i, seq, cond_vec, m)
        h = narrow(seq, 0, m, n)
        sc, sh = self._modulation("final.", cond_vec, 2)
        h = self._modulate(h, sc, sh)
        return self._lin(h, "motion_out.w", "motion_out.b")

    def forward(self, x_t, cond: Conditioning) -> Tensor:
        """Predict velocity (n, 201) for noisy frames x_t at time cond.timestep."""
        state = self.encode_text(cond.text_tokens)
        override = None
        if cond.global_embed is not None:
            override = tensor(np.asarray(cond.global_embed).reshape(1, self.cfg.d_model))
        return self.forward_core(x_t, cond.timestep, state, override)

    def velocity_fn(self, text_tokens: np.ndarray, global_embed: np.ndarray | None = None):
        """Inference-time closure (x_np, t) -> v_np with the text encoded once."""
        with no_grad():
            state = self.encode_text(text_tokens)
        override = None
        if global_embed is not None:
            override = tensor(np.asarray(global_embed).reshape(1, self.cfg.d_model))

        def fn(x_np: np.ndarray, t: float) -> np.ndarray:
            with no_grad():
                return self.forward_core(tensor(x_np), t, state, override).data

        return fn
