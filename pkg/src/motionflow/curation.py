"""Low-quality-motion filters with machine-readable rejection reports.

Filter battery: duplicate removal, abnormal-pose bounds, joint velocity
outliers, anomalous root displacement, static-clip pruning, and foot-slide
scoring. Every filter is evaluated for every clip, so verdicts do not depend
on filter order; the report lists each triggered filter with the offending
frame range, the measured value, and the threshold it crossed.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .clip import MotionClip
from .errors import ConfigInvalid, IoError
from .rotations import rot6d_to_matrix, rotation_angle
from .skeleton import FOOT_JOINTS

DEFAULT_CONTACT_HEIGHT = 0.05
FILTER_ORDER = ("duplicate", "pose", "velocity", "displacement", "static", "slide")


@dataclass(frozen=True)
class FilterConfig:
    vel_max: float = 10.0              # m/s per joint
    disp_max: float = 0.2              # m per frame, root
    static_eps: float = 0.02           # m
    static_min_fraction: float = 0.9
    slide_max: float = 0.3             # accumulated meters of grounded foot travel
    dedupe_dist: float = 0.01
    pose_limit_deg: float = 170.0      # max swing of any joint from its rest pose
    contact_height: float = DEFAULT_CONTACT_HEIGHT

    def validate(self) -> None:
        for name in ("vel_max", "disp_max", "static_eps", "slide_max",
                     "dedupe_dist", "pose_limit_deg", "contact_height"):
            if not getattr(self, name) > 0:
                raise ConfigInvalid(f"{name} must be positive")
        if not 0.0 < self.static_min_fraction <= 1.0:
            raise ConfigInvalid("static_min_fraction must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        return cls(**d)


@dataclass
class TriggeredFilter:
    name: str
    frame_start: int
    frame_end: int
    value: float
    threshold: float
    detail: str = ""


@dataclass
class FilterReport:
    clip_id: str
    verdict: str                      # kept | rejected
    triggered: list[TriggeredFilter] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"clip_id": self.clip_id, "verdict": self.verdict,
                "triggered": [asdict(t) for t in self.triggered]}


def velocity_outliers(c: MotionClip, vel_max: float) -> list[tuple[int, int]]:
    """(joint, frame) pairs whose finite-difference speed exceeds vel_max."""
    pos = c.world_positions()
    speeds = np.linalg.norm(np.diff(pos, axis=0), axis=-1) * c.fps   # (n-1, 22)
    frames, joints = np.nonzero(speeds > vel_max)
    return [(int(j), int(t)) for t, j in zip(frames, joints)]


def detect_static(c: MotionClip, static_eps: float, static_min_fraction: float) -> bool:
    """True when most frames barely move any joint away from frame 0."""
    pos = c.world_positions()
    disp = np.linalg.norm(pos - pos[0], axis=-1).max(axis=1)    # (n,)
    return float(np.mean(disp < static_eps)) > static_min_fraction


def foot_slide_score(c: MotionClip, contact_height: float = DEFAULT_CONTACT_HEIGHT) -> float:
    """Accumulated horizontal foot travel (meters) while the foot is grounded.

    Averaged over the two foot joints; a step counts as sliding only when the
    foot is below contact_height on both of its endpoint frames.
    """
    pos = c.world_positions()[:, FOOT_JOINTS, :]                # (n, 2, 3)
    grounded = (pos[:-1, :, 1] < contact_height) & (pos[1:, :, 1] < contact_height)
    dxz = np.linalg.norm(np.diff(pos[:, :, [0, 2]], axis=0), axis=-1)   # (n-1, 2)
    return float((dxz * grounded).sum(axis=0).mean())


def displacement_anomaly(c: MotionClip, disp_max: float) -> list[int]:
    """Frames whose root translation jumps more than disp_max in one step."""
    delta = np.linalg.norm(np.diff(c.translations(), axis=0), axis=-1)
    return [int(t) for t in np.nonzero(delta > disp_max)[0]]


def pose_violations(c: MotionClip, pose_limit_deg: float) -> list[tuple[int, int]]:
    """(joint, frame) pairs whose local rotation swings past the rest-pose bound."""
    mats = rot6d_to_matrix(c.joint_rot6d())                     # (n, 21, 3, 3)
    ang = np.degrees(rotation_angle(mats))
    frames, joints = np.nonzero(ang > pose_limit_deg)
    return [(int(j) + 1, int(t)) for t, j in zip(frames, joints)]


def _length_match(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linearly time-resample the longer frame array down to the shorter one."""
    if len(a) == len(b):
        return a, b
    short, long_ = (a, b) if len(a) < len(b) else (b, a)
    src = np.linspace(0, len(long_) - 1, len(short))
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, len(long_) - 1)
    u = (src - lo)[:, None]
    resampled = long_[lo] * (1 - u) + long_[hi] * u
    return (a, resampled) if len(a) < len(b) else (resampled, b)


def clip_distance(a: MotionClip, b: MotionClip) -> float:
    """Mean per-frame L2 over aligned, length-matched flattened frames."""
    fa, fb = _length_match(a.frames, b.frames)
    return float(np.linalg.norm(fa - fb, axis=1).mean())


def _coarse_signature(c: MotionClip, k: int = 24) -> np.ndarray:
    src = np.linspace(0, c.n_frames - 1, k)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, c.n_frames - 1)
    u = (src - lo)[:, None]
    return c.frames[lo] * (1 - u) + c.frames[hi] * u


def dedupe(clips: list[MotionClip], dedupe_dist: float
           ) -> tuple[list[int], dict[int, int]]:
    """Greedy near-duplicate removal; keeps the first of each duplicate group.

    Returns (kept indices, {duplicate index -> kept index it matched}).
    A coarse fixed-length signature prunes the exact distance computations.
    """
    kept: list[int] = []
    dup_of: dict[int, int] = {}
    sigs = [_coarse_signature(c) for c in clips]
    for i, c in enumerate(clips):
        match = None
        for j in kept:
            coarse = float(np.linalg.norm(sigs[i] - sigs[j], axis=1).mean())
            if coarse > 10.0 * dedupe_dist:
                continue
            if clip_distance(c, clips[j]) < dedupe_dist:
                match = j
                break
        if match is None:
            kept.append(i)
        else:
            dup_of[i] = match
    return kept, dup_of


def _clip_id(c: MotionClip, idx: int) -> str:
    return str(c.meta.get("id", c.meta.get("clip_id", idx)))


def run_pipeline(clips: list[MotionClip], cfg: FilterConfig
                 ) -> tuple[list[MotionClip], list[FilterReport]]:
    """Evaluate the full filter battery over a corpus.

    Every filter runs on every clip; a clip is kept only if none trigger.
    The static stage also checks the time-reversed clip so that frozen
    suffixes register as static content.
    """
    cfg.validate()
    kept_idx, dup_of = dedupe(clips, cfg.dedupe_dist)
    dup_set = set(dup_of)

    reports: list[FilterReport] = []
    kept_clips: list[MotionClip] = []
    for i, c in enumerate(clips):
        triggered: list[TriggeredFilter] = []
        n = c.n_frames

        if i in dup_set:
            j = dup_of[i]
            triggered.append(TriggeredFilter(
                "duplicate", 0, n - 1, clip_distance(c, clips[j]), cfg.dedupe_dist,
                detail=f"duplicate of {_clip_id(clips[j], j)}"))

        pv = pose_violations(c, cfg.pose_limit_deg)
        if pv:
            frames = [t for _, t in pv]
            mats = rot6d_to_matrix(c.joint_rot6d())
            worst = float(np.degrees(rotation_angle(mats)).max())
            triggered.append(TriggeredFilter(
                "pose", min(frames), max(frames), worst, cfg.pose_limit_deg))

        vo = velocity_outliers(c, cfg.vel_max)
        if vo:
            frames = [t for _, t in vo]
            pos = c.world_positions()
            worst = float((np.linalg.norm(np.diff(pos, axis=0), axis=-1) * c.fps).max())
            triggered.append(TriggeredFilter(
                "velocity", min(frames), max(frames), worst, cfg.vel_max))

        da = displacement_anomaly(c, cfg.disp_max)
        if da:
            worst = float(np.linalg.norm(np.diff(c.translations(), axis=0), axis=-1).max())
            triggered.append(TriggeredFilter(
                "displacement", min(da), max(da), worst, cfg.disp_max))

        forward_static = detect_static(c, cfg.static_eps, cfg.static_min_fraction)
        reversed_clip = c.with_frames(c.frames[::-1].copy())
        if forward_static or detect_static(reversed_clip, cfg.static_eps, cfg.static_min_fraction):
            pos = c.world_positions()
            ref = pos[0] if forward_static else pos[-1]
            disp = np.linalg.norm(pos - ref, axis=-1).max(axis=1)
            frac = float(np.mean(disp < cfg.static_eps))
            triggered.append(TriggeredFilter("static", 0, n - 1, frac, cfg.static_min_fraction))

        slide = foot_slide_score(c, cfg.contact_height)
        if slide > cfg.slide_max:
            triggered.append(TriggeredFilter("slide", 0, n - 1, slide, cfg.slide_max))

        order = {name: k for k, name in enumerate(FILTER_ORDER)}
        triggered.sort(key=lambda tf: order[tf.name])
        if triggered:
            reports.append(FilterReport(_clip_id(c, i), "rejected", triggered))
        else:
            reports.append(FilterReport(_clip_id(c, i), "kept"))
            kept_clips.append(c)
    return kept_clips, reports


def save_reports(reports: list[FilterReport], path: str | os.PathLike) -> None:
    """One JSON object per line."""
    try:
        with open(path, "w") as f:
            for r in reports:
                f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    except OSError as e:
        raise IoError(f"cannot write reports to {path}: {e}") from e


def load_reports(path: str | os.PathLike) -> list[FilterReport]:
    try:
        with open(path) as f:
            lines = [json.loads(line) for line in f if line.strip()]
    except OSError as e:
        raise IoError(f"cannot read reports from {path}: {e}") from e
    return [
        FilterReport(d["clip_id"], d["verdict"],
                     [TriggeredFilter(**t) for t in d["triggered"]])
        for d in lines
    ]
