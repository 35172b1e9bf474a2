"""Motion clip representation and the canonical-frame preprocessing ops.

Each frame is a 201-float vector laid out as:

    [0:3)     root translation (meters, world)
    [3:9)     root orientation, 6D
    [9:135)   21 local joint rotations, 6D each (joints 1..21)
    [135:201) 22 joint positions (meters, relative to the root joint)

A clip is an (n, 201) array plus an fps stamp and free-form metadata.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, DegenerateFacing, IoError, NonFinite, TooShort
from .rotations import matrix_to_quat, matrix_to_rot6d, quat_to_matrix, rot6d_to_matrix, rot_y, slerp
from .skeleton import L_HIP, N_JOINTS, R_HIP, Skeleton, fk_positions

FRAME_DIM = 201
TRANS = slice(0, 3)
ROOT_ROT = slice(3, 9)
JOINT_ROT = slice(9, 135)
JOINT_POS = slice(135, 201)

CLIP_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Frame:
    """Single-frame view of the 201-dim layout."""

    root_translation: np.ndarray   # (3,)
    root_orientation: np.ndarray   # (6,)
    joint_rotations: np.ndarray    # (21, 6)
    joint_positions: np.ndarray    # (22, 3)

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "Frame":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (FRAME_DIM,):
            raise ConfigInvalid(f"frame vector must have length {FRAME_DIM}, got {v.shape}")
        return cls(
            root_translation=v[TRANS].copy(),
            root_orientation=v[ROOT_ROT].copy(),
            joint_rotations=v[JOINT_ROT].reshape(21, 6).copy(),
            joint_positions=v[JOINT_POS].reshape(22, 3).copy(),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.root_translation,
            self.root_orientation,
            self.joint_rotations.reshape(-1),
            self.joint_positions.reshape(-1),
        ])


@dataclass(frozen=True)
class MotionClip:
    """fps-stamped sequence of 201-dim frames."""

    fps: float
    frames: np.ndarray            # (n, 201) float64
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != FRAME_DIM:
            raise ConfigInvalid(f"frames must be (n, {FRAME_DIM}), got {frames.shape}")
        if frames.shape[0] < 2:
            raise TooShort(f"clip needs at least 2 frames, got {frames.shape[0]}")
        if not self.fps > 0:
            raise ConfigInvalid(f"fps must be positive, got {self.fps}")
        if not np.isfinite(frames).all():
            raise NonFinite("clip contains non-finite values")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps

    def translations(self) -> np.ndarray:
        return self.frames[:, TRANS].copy()

    def root_rot6d(self) -> np.ndarray:
        return self.frames[:, ROOT_ROT].copy()

    def joint_rot6d(self) -> np.ndarray:
        return self.frames[:, JOINT_ROT].reshape(self.n_frames, 21, 6).copy()

    def joint_positions(self) -> np.ndarray:
        """Root-relative joint positions, (n, 22, 3)."""
        return self.frames[:, JOINT_POS].reshape(self.n_frames, 22, 3).copy()

    def world_positions(self) -> np.ndarray:
        """World-frame joint positions, (n, 22, 3)."""
        return self.frames[:, TRANS][:, None, :] + self.joint_positions()

    def frame(self, i: int) -> Frame:
        return Frame.from_vector(self.frames[i])

    def with_frames(self, frames: np.ndarray, fps: float | None = None) -> "MotionClip":
        return MotionClip(fps=self.fps if fps is None else fps, frames=frames, meta=dict(self.meta))


def assemble_frames(translations, root_rot6d, joint_rot6d, joint_positions) -> np.ndarray:
    """Pack per-component arrays into (n, 201) frame vectors."""
    n = len(translations)
    out = np.empty((n, FRAME_DIM))
    out[:, TRANS] = translations
    out[:, ROOT_ROT] = root_rot6d
    out[:, JOINT_ROT] = np.asarray(joint_rot6d).reshape(n, 126)
    out[:, JOINT_POS] = np.asarray(joint_positions).reshape(n, 66)
    return out


def forward_kinematics(f: Frame, s: Skeleton) -> np.ndarray:
    """Joint positions (22, 3) of a single frame, relative to the root joint."""
    return fk_positions(f.root_orientation, f.joint_rotations, s)


def recompute_positions(clip: MotionClip, s: Skeleton) -> MotionClip:
    """Overwrite stored joint positions with FK of the stored rotations.

    Rotations are treated as authoritative; the position channel is derived.
    """
    pos = fk_positions(clip.root_rot6d(), clip.joint_rot6d(), s)
    frames = clip.frames.copy()
    frames[:, JOINT_POS] = pos.reshape(clip.n_frames, 66)
    return clip.with_frames(frames)


def _facing_rotation(clip_frames: np.ndarray) -> np.ndarray:
    """Y-rotation that maps the frame-0 heading onto +Z.

    Heading = cross(left_hip - right_hip, world up), projected to XZ.
    """
    pos0 = clip_frames[0, JOINT_POS].reshape(N_JOINTS, 3)
    d = pos0[L_HIP] - pos0[R_HIP]
    up = np.array([0.0, 1.0, 0.0])
    fwd = np.cross(d, up)
    fwd[1] = 0.0
    norm = np.linalg.norm(fwd)
    if norm < 1e-6:
        raise DegenerateFacing("heading direction is within 1e-6 of vertical")
    fwd /= norm
    theta = np.arctan2(fwd[0], fwd[2])
    return rot_y(-theta)


def canonicalize(c: MotionClip, s: Skeleton) -> MotionClip:
    """Normalize a clip to the canonical frame.

    Frame-0 root lands at XZ = (0, 0); the lowest joint over the whole clip
    touches Y = 0; the frame-0 heading points along +Z. Only a rigid
    XZ-translation plus Y-rotation is applied, so all inter-frame relative
    transforms are preserved.
    """
    frames = c.frames.copy()
    n = c.n_frames
    rot = _facing_rotation(frames)

    trans = frames[:, TRANS]
    t0 = trans[0].copy()
    t0[1] = 0.0
    trans = (trans - t0) @ rot.T

    root_mats = rot6d_to_matrix(frames[:, ROOT_ROT])
    root_mats = rot[None] @ root_mats
    positions = frames[:, JOINT_POS].reshape(n, N_JOINTS, 3) @ rot.T

    min_y = (trans[:, None, 1] + positions[:, :, 1]).min()
    trans = trans - np.array([0.0, min_y, 0.0])

    frames[:, TRANS] = trans
    frames[:, ROOT_ROT] = matrix_to_rot6d(root_mats)
    frames[:, JOINT_POS] = positions.reshape(n, 66)
    return c.with_frames(frames)


def resample(c: MotionClip, target_fps: float = 30.0) -> MotionClip:
    """Resample to target_fps: linear positions, slerp rotations."""
    if not target_fps > 0:
        raise ConfigInvalid(f"target_fps must be positive, got {target_fps}")
    n = c.n_frames
    if target_fps == c.fps:
        return c.with_frames(c.frames.copy())
    m = int(round((n - 1) * target_fps / c.fps)) + 1
    if m < 2:
        raise TooShort(f"resampling to {target_fps} fps would leave {m} frame(s)")

    src = np.arange(m) * (c.fps / target_fps)
    src = np.clip(src, 0.0, n - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    u = src - lo

    frames = c.frames
    out = np.empty((m, FRAME_DIM))
    for sl in (TRANS, JOINT_POS):
        out[:, sl] = frames[lo, sl] * (1.0 - u[:, None]) + frames[hi, sl] * u[:, None]

    rot_all = np.concatenate(
        [frames[:, ROOT_ROT].reshape(n, 1, 6), frames[:, JOINT_ROT].reshape(n, 21, 6)], axis=1
    )
    q = matrix_to_quat(rot6d_to_matrix(rot_all))      # (n, 22, 4)
    q_interp = slerp(q[lo], q[hi], np.broadcast_to(u[:, None], (m, 22)))
    r6 = matrix_to_rot6d(quat_to_matrix(q_interp))    # (m, 22, 6)
    out[:, ROOT_ROT] = r6[:, 0]
    out[:, JOINT_ROT] = r6[:, 1:].reshape(m, 126)
    return c.with_frames(out, fps=target_fps)


def segment(c: MotionClip, max_seconds: float = 12.0, s: Skeleton | None = None,
            recanonicalize: bool = True) -> list[MotionClip]:
    """Split a clip into chunks of at most max_seconds each.

    The raw chunks concatenate back to the input frame-exactly. With
    recanonicalize=True each chunk is then normalized to the canonical frame
    (requires a skeleton only for the heading convention, which lives in the
    frame data itself).
    """
    if not max_seconds > 0:
        raise ConfigInvalid(f"max_seconds must be positive, got {max_seconds}")
    max_len = max(int(round(max_seconds * c.fps)), 2)
    n = c.n_frames
    bounds = list(range(0, n, max_len)) + [n]
    if n - bounds[-2] == 1:
        # Never emit a single-frame tail; borrow one frame from the previous chunk.
        bounds[-2] -= 1
    chunks = [c.with_frames(c.frames[a:b].copy()) for a, b in zip(bounds, bounds[1:])]
    if recanonicalize:
        skel = s  # canonicalize reads heading from stored hip positions only
        chunks = [canonicalize(ch, skel) for ch in chunks]
    return chunks


def save_clip(clip: MotionClip, path: str | os.PathLike) -> None:
    """Write a clip as schema-versioned JSON."""
    obj = {
        "version": CLIP_SCHEMA_VERSION,
        "fps": clip.fps,
        "frames": clip.frames.tolist(),
        "meta": clip.meta,
    }
    try:
        with open(path, "w") as f:
            json.dump(obj, f, sort_keys=True)
    except OSError as e:
        raise IoError(f"cannot write clip to {path}: {e}") from e


def load_clip(path: str | os.PathLike) -> MotionClip:
    """Read a clip written by save_clip."""
    try:
        with open(path) as f:
            obj = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read clip from {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoError(f"malformed clip file {path}: {e}") from e
    if obj.get("version") != CLIP_SCHEMA_VERSION:
        raise IoError(f"unsupported clip schema version {obj.get('version')} in {path}")
    return MotionClip(fps=obj["fps"], frames=np.array(obj["frames"]), meta=obj.get("meta", {}))
