"""Frozen motion classifier standing in for a learned retrieval scorer.

Hand-crafted kinematic statistics (root travel, heading change, limb
amplitudes, contact patterns) over the whole clip and both halves feed a
multinomial logistic regression. Anything exposing `classes` and
`class_probs(clip)` can replace it wherever a semantic score is consumed.
"""
from __future__ import annotations

import numpy as np

from .clip import MotionClip
from .rotations import rot6d_to_matrix
from .skeleton import (
    FOOT_JOINTS, HEAD, L_ANKLE, L_SHOULDER, L_WRIST, R_ANKLE, R_SHOULDER, R_WRIST,
)

FEATURE_VERSION = 1


def _heading(clip_frames_rot6: np.ndarray) -> np.ndarray:
    """Facing angle per frame from the root orientation."""
    mats = rot6d_to_matrix(clip_frames_rot6)
    fwd = mats @ np.array([0.0, 0.0, 1.0])
    return np.unwrap(np.arctan2(fwd[:, 0], fwd[:, 2]))


def _window_features(world: np.ndarray, trans: np.ndarray, heading: np.ndarray,
                     fps: float) -> np.ndarray:
    n = world.shape[0]
    dt = 1.0 / fps
    dur = max((n - 1) * dt, 1e-6)

    root_xz = trans[:, [0, 2]]
    root_speed = np.linalg.norm(np.diff(root_xz, axis=0), axis=1) / dt if n > 1 else np.zeros(1)
    root_y = trans[:, 1]
    vy = np.diff(root_y) / dt if n > 1 else np.zeros(1)

    wrists = world[:, [L_WRIST, R_WRIST]]
    shoulders = world[:, [L_SHOULDER, R_SHOULDER]]
    wrist_rel_y = wrists[..., 1] - shoulders[..., 1]          # (n, 2)
    ankles_y = world[:, [L_ANKLE, R_ANKLE], 1]
    feet_y = world[:, FOOT_JOINTS, 1]
    airborne = float(np.mean(feet_y.min(axis=1) > 0.08))

    joint_speed = (np.linalg.norm(np.diff(world, axis=0), axis=-1) / dt).mean() if n > 1 else 0.0

    feats = [
        np.linalg.norm(root_xz[-1] - root_xz[0]) / dur,     # net planar travel rate
        (root_xz[-1, 1] - root_xz[0, 1]) / dur,             # forward component
        root_speed.mean(), root_speed.max(),
        root_y.mean(), root_y.min(), root_y.max(), root_y.std(),
        np.abs(vy).max(), vy.max(),
        (heading[-1] - heading[0]) / dur,                   # signed yaw rate
        abs(heading[-1] - heading[0]),
        wrist_rel_y[:, 0].mean(), wrist_rel_y[:, 0].max(), wrist_rel_y[:, 0].std(),
        wrist_rel_y[:, 1].mean(), wrist_rel_y[:, 1].max(), wrist_rel_y[:, 1].std(),
        wrists[:, 0, :].std(axis=0).mean(),                 # left wrist wobble
        wrists[:, 1, :].std(axis=0).mean(),
        ankles_y.max(), ankles_y.std(),
        airborne,
        joint_speed,
    ]
    return np.asarray(feats, dtype=np.float64)


def clip_features(clip: MotionClip) -> np.ndarray:
    """Feature vector over the whole clip plus its first and second halves."""
    world = clip.world_positions()
    trans = clip.frames[:, 0:3]
    heading = _heading(clip.frames[:, 3:9])
    n = clip.n_frames
    half = max(n // 2, 2)
    parts = [
        _window_features(world, trans, heading, clip.fps),
        _window_features(world[:half], trans[:half], heading[:half], clip.fps),
        _window_features(world[half:], trans[half:], heading[half:], clip.fps),
    ]
    return np.concatenate(parts)


class SemanticOracle:
    """Multinomial logistic regression over clip features."""

    def __init__(self, classes: list[str], mean: np.ndarray, std: np.ndarray,
                 weights: np.ndarray, bias: np.ndarray):
        self.classes = list(classes)
        self.mean = mean
        self.std = std
        self.weights = weights     # (d, C)
        self.bias = bias           # (C,)

    def class_probs(self, clip: MotionClip) -> np.ndarray:
        f = (clip_features(clip) - self.mean) / self.std
        logits = f @ self.weights + self.bias
        logits -= logits.max()
        e = np.exp(logits)
        return e / e.sum()

    def prob_of(self, clip: MotionClip, class_id: str) -> float:
        return float(self.class_probs(clip)[self.classes.index(class_id)])

    def predict(self, clip: MotionClip) -> str:
        return self.classes[int(np.argmax(self.class_probs(clip)))]

    def save(self, path) -> None:
        from .engine import save_checkpoint
        save_checkpoint(path, {"mean": self.mean, "std": self.std,
                               "weights": self.weights, "bias": self.bias},
                        meta={"classes": self.classes})

    @classmethod
    def load(cls, path) -> "SemanticOracle":
        from .engine import load_checkpoint
        tensors, meta = load_checkpoint(path)
        return cls(meta["classes"], tensors["mean"], tensors["std"],
                   tensors["weights"], tensors["bias"])


class UniformOracle:
    """Stub scorer: equal probability for every class."""

    def __init__(self, classes: list[str]):
        self.classes = list(classes)

    def class_probs(self, clip: MotionClip) -> np.ndarray:
        return np.full(len(self.classes), 1.0 / len(self.classes))

    def prob_of(self, clip: MotionClip, class_id: str) -> float:
        return 1.0 / len(self.classes)


def train_oracle(clips: list[MotionClip], labels: list[str], classes: list[str],
                 l2: float = 1e-4, iters: int = 600, lr: float = 0.15) -> SemanticOracle:
    """Fit the softmax regression with full-batch Adam. Deterministic."""
    feats = np.stack([clip_features(c) for c in clips])
    mean = feats.mean(axis=0)
    std = feats.std(axis=0) + 1e-8
    x = (feats - mean) / std
    y = np.array([classes.index(lb) for lb in labels])
    n, d = x.shape
    c = len(classes)
    w = np.zeros((d, c))
    b = np.zeros(c)
    onehot = np.eye(c)[y]

    mw = np.zeros_like(w); vw = np.zeros_like(w)
    mb = np.zeros_like(b); vb = np.zeros_like(b)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for it in range(1, iters + 1):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        p = e / e.sum(axis=1, keepdims=True)
        gl = (p - onehot) / n
        gw = x.T @ gl + l2 * w
        gb = gl.sum(axis=0)
        mw = b1 * mw + (1 - b1) * gw; vw = b2 * vw + (1 - b2) * gw * gw
        mb = b1 * mb + (1 - b1) * gb; vb = b2 * vb + (1 - b2) * gb * gb
        w -= lr * (mw / (1 - b1**it)) / (np.sqrt(vw / (1 - b2**it)) + eps)
        b -= lr * (mb / (1 - b1**it)) / (np.sqrt(vb / (1 - b2**it)) + eps)
    return SemanticOracle(classes, mean, std, w, b)
