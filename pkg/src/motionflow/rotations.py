"""Rotation math: continuous 6D encoding, matrices, quaternions, slerp.

The 6D encoding stores the first two columns of a rotation matrix,
flattened column by column: ``[c0x, c0y, c0z, c1x, c1y, c1z]``. Decoding
Gram-Schmidts the pair back into a proper rotation, so the encoding is
invariant to positive scaling of the first column. All functions accept
arbitrary leading batch dimensions.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateInput, NotARotation

_EPS = 1e-8


def rot6d_to_matrix(r6: np.ndarray) -> np.ndarray:
    """Decode 6D rotations (..., 6) into rotation matrices (..., 3, 3)."""
    r6 = np.asarray(r6, dtype=np.float64)
    if r6.shape[-1] != 6:
        raise DegenerateInput(f"expected trailing dim 6, got {r6.shape}")
    if not np.isfinite(r6).all():
        raise DegenerateInput("non-finite entries in 6D rotation")
    a = r6[..., 0:3]
    b = r6[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < _EPS):
        raise DegenerateInput("first column norm below 1e-8")
    x = a / na
    b_orth = b - np.sum(x * b, axis=-1, keepdims=True) * x
    nb = np.linalg.norm(b_orth, axis=-1, keepdims=True)
    if np.any(nb < _EPS):
        raise DegenerateInput("columns parallel within 1e-8")
    y = b_orth / nb
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=-1)


def matrix_to_rot6d(m: np.ndarray) -> np.ndarray:
    """Encode rotation matrices (..., 3, 3) as 6D (..., 6); validates input."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise NotARotation(f"expected (..., 3, 3), got {m.shape}")
    ident = np.eye(3)
    err = np.abs(np.swapaxes(m, -1, -2) @ m - ident).max()
    if err > 1e-4 or np.any(np.linalg.det(m) < 0):
        raise NotARotation(f"orthonormality error {err:.2e} exceeds 1e-4")
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def identity_rot6d(shape: tuple[int, ...] = ()) -> np.ndarray:
    """6D encoding of the identity rotation, broadcast to ``shape + (6,)``."""
    base = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    return np.broadcast_to(base, shape + (6,)).copy()


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) to unit quaternions (..., 4), w first."""
    m = np.asarray(m, dtype=np.float64)
    t = np.einsum("...ii->...", m)
    q = np.empty(m.shape[:-2] + (4,))
    # Shepperd's method, branch on the largest diagonal term for stability.
    cand = np.stack([t, m[..., 0, 0], m[..., 1, 1], m[..., 2, 2]], axis=-1)
    case = np.argmax(cand, axis=-1)

    w = np.sqrt(np.maximum(1.0 + t, 0.0)) / 2.0
    denom_w = np.where(w > 1e-12, 4.0 * w, 1.0)
    q_w = np.stack([
        w,
        (m[..., 2, 1] - m[..., 1, 2]) / denom_w,
        (m[..., 0, 2] - m[..., 2, 0]) / denom_w,
        (m[..., 1, 0] - m[..., 0, 1]) / denom_w,
    ], axis=-1)

    def axis_case(i, j, k):
        s = np.sqrt(np.maximum(1.0 + m[..., i, i] - m[..., j, j] - m[..., k, k], 0.0)) * 2.0
        s_safe = np.where(s > 1e-12, s, 1.0)
        out = np.empty(m.shape[:-2] + (4,))
        out[..., 0] = (m[..., k, j] - m[..., j, k]) / s_safe
        out[..., 1 + i] = s / 4.0
        out[..., 1 + j] = (m[..., j, i] + m[..., i, j]) / s_safe
        out[..., 1 + k] = (m[..., k, i] + m[..., i, k]) / s_safe
        return out

    cases = [q_w, axis_case(0, 1, 2), axis_case(1, 2, 0), axis_case(2, 0, 1)]
    for idx in range(4):
        sel = case == idx
        if np.any(sel):
            q[sel] = cases[idx][sel]
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..., 4), w first, to rotation matrices (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def slerp(q0: np.ndarray, q1: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Spherical interpolation between quaternion arrays at fractions u."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)[..., None]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0, -q1, q1)
    dot = np.abs(dot)
    dot = np.clip(dot, -1.0, 1.0)
    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    small = sin_theta < 1e-6
    w0 = np.where(small, 1.0 - u, np.sin((1.0 - u) * theta) / np.where(small, 1.0, sin_theta))
    w1 = np.where(small, u, np.sin(u * theta) / np.where(small, 1.0, sin_theta))
    out = w0 * q0 + w1 * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix about a (3,) axis by ``angle`` radians (Rodrigues)."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    cc = 1.0 - c
    return np.array([
        [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
        [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
        [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
    ])


def rot_y(angle: float) -> np.ndarray:
    """Rotation matrix about the world Y (up) axis."""
    return axis_angle_matrix(np.array([0.0, 1.0, 0.0]), angle)


def rot_x(angle: float) -> np.ndarray:
    """Rotation matrix about the X axis."""
    return axis_angle_matrix(np.array([1.0, 0.0, 0.0]), angle)


def rot_z(angle: float) -> np.ndarray:
    """Rotation matrix about the Z axis."""
    return axis_angle_matrix(np.array([0.0, 0.0, 1.0]), angle)


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform random rotation matrices via normalized quaternions."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_to_matrix(q)


def rotation_angle(m: np.ndarray) -> np.ndarray:
    """Rotation angle in radians of matrices (..., 3, 3)."""
    t = np.einsum("...ii->...", np.asarray(m, dtype=np.float64))
    return np.arccos(np.clip((t - 1.0) / 2.0, -1.0, 1.0))
