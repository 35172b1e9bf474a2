"""Procedural generator of labeled motion clips with templated captions.

Each action class is a deterministic kinematic program on the 22-joint
skeleton: root trajectory + joint rotation tracks, with legs solved by a
two-link IK so stance feet stay planted in world space. Joint positions are
always recomputed from the rotations via FK, so generated clips satisfy the
rotation/position consistency contract by construction.

Also hosts the defect injector used as curation/preference test fixtures and
the table-driven duration predictor / prompt normalizer.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .clip import JOINT_POS, MotionClip, assemble_frames, canonicalize
from .errors import EmptyPrompt, InvalidSpec, UnknownAction
from .rotations import matrix_to_quat, matrix_to_rot6d, quat_to_matrix, rot_x, rot_y, rot_z, slerp
from .skeleton import (
    HEAD, L_ANKLE, L_COLLAR, L_ELBOW, L_FOOT, L_HIP, L_KNEE, L_SHOULDER, L_WRIST,
    NECK, R_ANKLE, R_COLLAR, R_ELBOW, R_FOOT, R_HIP, R_KNEE, R_SHOULDER, R_WRIST,
    SPINE1, SPINE2, SPINE3, Skeleton, fk_positions, load_default_skeleton,
)

FPS = 30.0
STAND_HEIGHT = 0.86     # pelvis height of the relaxed stance
ANKLE_H = 0.05          # ankle height with the foot flat on the ground
HIP_X = 0.09
L_THIGH, L_SHIN = 0.38, 0.40


@dataclass(frozen=True)
class ActionClass:
    name: str
    duration: float                 # default seconds for the duration table
    category: str                   # locomotion | fitness | daily | combo
    in_place: bool
    templates: tuple[str, ...]      # training caption paraphrases
    heldout: tuple[str, ...]        # paraphrases reserved for evaluation
    parts: tuple[str, str] | None = None   # sequential composition


_SPEED_ADVERBS = {"slow": "slowly", "normal": "at a steady pace", "fast": "quickly"}

TAXONOMY: dict[str, ActionClass] = {c.name: c for c in [
    ActionClass(
        "idle", 3.0, "daily", True,
        ("a person stands still",
         "someone stands idle, barely moving",
         "a man remains stationary in place"),
        ("standing quietly without moving",)),
    ActionClass(
        "walk", 4.0, "locomotion", False,
        ("a person walks forward {speed}",
         "someone strolls straight ahead {speed}",
         "a man walks in a straight line {speed}"),
        ("walking forward {speed}, a person crosses the room",)),
    ActionClass(
        "run", 3.0, "locomotion", False,
        ("a person runs forward {speed}",
         "someone jogs straight ahead {speed}",
         "a man sprints in a straight line"),
        ("running forward, a person crosses the area",)),
    ActionClass(
        "jump", 1.5, "fitness", True,
        ("a person jumps once in place",
         "someone hops straight up",
         "a man leaps upward and lands"),
        ("a single vertical jump on the spot",)),
    ActionClass(
        "squat", 2.5, "fitness", True,
        ("a person squats down and stands back up",
         "someone performs one deep squat",
         "a man crouches low then rises"),
        ("one slow bodyweight squat",)),
    ActionClass(
        "turn", 2.0, "locomotion", True,
        ("a person turns around to the {side}",
         "someone rotates a quarter turn to the {side}",
         "a man spins ninety degrees to the {side}"),
        ("turning to the {side}, a person changes heading",)),
    ActionClass(
        "wave_left", 3.0, "daily", True,
        ("a person waves their left hand",
         "someone raises the left arm and waves",
         "a man greets by waving his left hand"),
        ("a friendly wave with the left hand",)),
    ActionClass(
        "wave_right", 3.0, "daily", True,
        ("a person waves their right hand",
         "someone raises the right arm and waves",
         "a man greets by waving his right hand"),
        ("a friendly wave with the right hand",)),
    ActionClass(
        "walk_then_jump", 5.0, "combo", False,
        ("a person walks forward then jumps",
         "someone strolls ahead and then hops once",
         "a man walks then leaps upward"),
        ("after walking forward, a person jumps",),
        parts=("walk", "jump")),
    ActionClass(
        "walk_then_wave_left", 6.0, "combo", False,
        ("a person walks forward then waves their left hand",
         "someone walks ahead and then waves the left arm",
         "a man strolls forward then waves his left hand"),
        ("after walking forward, a person waves the left hand",),
        parts=("walk", "wave_left")),
    ActionClass(
        "walk_then_wave_right", 6.0, "combo", False,
        ("a person walks forward then waves their right hand",
         "someone walks ahead and then waves the right arm",
         "a man strolls forward then waves his right hand"),
        ("after walking forward, a person waves the right hand",),
        parts=("walk", "wave_right")),
    ActionClass(
        "squat_then_jump", 3.5, "fitness", True,
        ("a person squats then jumps",
         "someone crouches low and then hops up",
         "a man does a squat followed by a jump"),
        ("after one squat, a person jumps",),
        parts=("squat", "jump")),
]}

CLASS_NAMES = list(TAXONOMY)
DEFAULT_PROMPT_SECONDS = 4.0


@dataclass
class ActionSpec:
    class_id: str
    duration: float | None = None    # None: use the class default
    seed: int = 0
    params: dict = field(default_factory=dict)

    def resolved_duration(self) -> float:
        d = TAXONOMY[self.class_id].duration if self.duration is None else float(self.duration)
        return d


# ---------------------------------------------------------------------------
# leg inverse kinematics
# ---------------------------------------------------------------------------

def _rx_batch(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = 1
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def _rz_batch(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 2, 2] = 1
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _leg_ik(d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hip/knee/ankle rotation matrices reaching hip->ankle targets d (n, 3).

    Targets are in the root frame. The hip rolls the leg plane sideways, the
    pitch pair solves the planar two-link reach, and the ankle counters the
    leg pitch so the foot stays flat.
    """
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    roll = np.arctan2(dx, -dy)
    h = np.hypot(dx, dy)
    r = np.clip(np.hypot(h, dz), 0.06, L_THIGH + L_SHIN - 0.003)
    alpha = np.arctan2(dz, h)
    beta = np.arccos(np.clip((L_THIGH**2 + r**2 - L_SHIN**2) / (2 * L_THIGH * r), -1.0, 1.0))
    inner = np.arccos(np.clip((L_THIGH**2 + L_SHIN**2 - r**2) / (2 * L_THIGH * L_SHIN), -1.0, 1.0))
    hip_pitch = -(alpha + beta)
    knee_pitch = np.pi - inner
    ankle_pitch = -(hip_pitch + knee_pitch)
    hip = _rz_batch(roll) @ _rx_batch(hip_pitch)
    return hip, _rx_batch(knee_pitch), _rx_batch(ankle_pitch)


def _smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _swing_profiles(s: np.ndarray, lift: float) -> tuple[np.ndarray, np.ndarray]:
    """(horizontal progress, height) over swing fraction s in [0, 1].

    Horizontal travel happens only in the middle of the swing, after the
    foot has lifted clear of the contact band, so grounded frames never move.
    """
    s = np.clip(s, 0.0, 1.0)
    z_prog = _smoothstep((s - 0.12) / 0.76)
    y = lift * np.sin(np.pi * s)
    return z_prog, y


def _gait_ankle_track(t: np.ndarray, v: float, cycle: float, duty: float,
                      lift: float, phase0: float, x_anchor: float) -> np.ndarray:
    """World ankle targets (n, 3) for one leg of a straight-line gait."""
    ph = (t / cycle + phase0) % 1.0
    cyc = np.floor(t / cycle + phase0)
    stride = v * cycle
    anchor_z = v * cycle * (cyc + duty / 2.0 - phase0)
    z_prog, y_sw = _swing_profiles((ph - duty) / (1.0 - duty), lift)
    z = np.where(ph < duty, anchor_z, anchor_z + stride * z_prog)
    y = np.where(ph < duty, ANKLE_H, ANKLE_H + y_sw)
    x = np.full_like(t, x_anchor)
    return np.stack([x, y, z], axis=1)


# ---------------------------------------------------------------------------
# body pose assembly
# ---------------------------------------------------------------------------

class _Pose:
    """Per-frame rotation tracks for the 21 non-root joints."""

    def __init__(self, n: int):
        self.n = n
        self.mats = np.tile(np.eye(3), (n, 21, 1, 1))

    def set(self, joint: int, mats: np.ndarray) -> None:
        self.mats[:, joint - 1] = mats

    def hang_arms(self, swing_l: np.ndarray | None = None, swing_r: np.ndarray | None = None):
        n = self.n
        zero = np.zeros(n)
        sl = zero if swing_l is None else swing_l
        sr = zero if swing_r is None else swing_r
        self.set(L_SHOULDER, _rz_batch(np.full(n, -1.30)) @ _rx_batch(sl))
        self.set(R_SHOULDER, _rz_batch(np.full(n, 1.30)) @ _rx_batch(sr))
        self.set(L_ELBOW, _rz_batch(np.full(n, -0.15)))
        self.set(R_ELBOW, _rz_batch(np.full(n, 0.15)))


def _solve_legs(pose: _Pose, trans: np.ndarray, yaw: np.ndarray,
                ankle_l: np.ndarray, ankle_r: np.ndarray) -> None:
    """Fill leg rotations so ankle joints land on the given world targets."""
    n = pose.n
    yaw_mats = _ry_batch(yaw)
    for side, target, hip_j, knee_j, ankle_j in (
        (1.0, ankle_l, L_HIP, L_KNEE, L_ANKLE),
        (-1.0, ankle_r, R_HIP, R_KNEE, R_ANKLE),
    ):
        hip_offset = np.array([side * HIP_X, -0.05, 0.0])
        hip_world = trans + yaw_mats @ hip_offset
        d_world = target - hip_world
        d_root = np.einsum("nij,nj->ni", yaw_mats.transpose(0, 2, 1), d_world)
        hip, knee, ankle = _leg_ik(d_root)
        pose.set(hip_j, hip)
        pose.set(knee_j, knee)
        pose.set(ankle_j, ankle)


def _ry_batch(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 1, 1] = 1
    out[..., 0, 0] = c
    out[..., 0, 2] = s
    out[..., 2, 0] = -s
    out[..., 2, 2] = c
    return out


def _standing_anchors(n: int) -> tuple[np.ndarray, np.ndarray]:
    left = np.tile(np.array([HIP_X, ANKLE_H, 0.0]), (n, 1))
    right = np.tile(np.array([-HIP_X, ANKLE_H, 0.0]), (n, 1))
    return left, right


def _locomotion_program(n, t, rng, running: bool, params: dict | None = None):
    params = params or {}
    v_lo, v_hi = (2.0, 2.5) if running else (1.0, 1.45)
    v = float(params.get("v", rng.uniform(v_lo, v_hi)))
    stride = min(0.78, 0.30 + 0.22 * v)
    cycle = stride / v
    duty = float(rng.uniform(0.34, 0.42)) if running else float(rng.uniform(0.50, 0.58))
    lift = float(rng.uniform(0.14, 0.18)) if running else float(rng.uniform(0.11, 0.15))
    bob = float(rng.uniform(0.028, 0.042)) if running else float(rng.uniform(0.014, 0.026))
    base_h = float(rng.uniform(0.72, 0.75)) if running else float(rng.uniform(0.78, 0.82))
    sway = float(rng.uniform(0.008, 0.016))

    trans = np.stack([
        sway * np.sin(2 * np.pi * t / cycle),
        base_h + bob * np.sin(4 * np.pi * t / cycle),
        v * t,
    ], axis=1)
    yaw = np.zeros(n)
    pose = _Pose(n)
    arm_amp = float(rng.uniform(0.45, 0.65)) if running else float(rng.uniform(0.28, 0.42))
    swing = arm_amp * np.sin(2 * np.pi * t / cycle)
    pose.hang_arms(swing_l=swing, swing_r=-swing)
    pose.set(SPINE2, _rx_batch(np.full(n, -0.05)))
    ankle_l = _gait_ankle_track(t, v, cycle, duty, lift, 0.0, HIP_X)
    ankle_r = _gait_ankle_track(t, v, cycle, duty, lift, 0.5, -HIP_X)
    _solve_legs(pose, trans, yaw, ankle_l, ankle_r)
    speed = "slow" if v < (2.15 if running else 1.15) else ("fast" if v > (2.35 if running else 1.32) else "normal")
    return trans, yaw, pose, {"v": v, "speed": speed}


def _idle_program(n, t, rng):
    f = float(rng.uniform(0.25, 0.4))
    ax = float(rng.uniform(0.004, 0.008))
    ay = float(rng.uniform(0.002, 0.006))
    ph = float(rng.uniform(0, 2 * np.pi))
    trans = np.stack([
        ax * np.sin(2 * np.pi * f * t + ph),
        STAND_HEIGHT + ay * np.sin(2 * np.pi * 0.5 * f * t + 1.0),
        np.zeros(n),
    ], axis=1)
    yaw = np.zeros(n)
    pose = _Pose(n)
    breathe = float(rng.uniform(0.010, 0.020)) * np.sin(2 * np.pi * f * t + ph)
    pose.hang_arms(swing_l=breathe, swing_r=breathe)
    ankle_l, ankle_r = _standing_anchors(n)
    _solve_legs(pose, trans, yaw, ankle_l, ankle_r)
    return trans, yaw, pose, {}


def _wave_program(n, t, rng, side: str):
    f = float(rng.uniform(1.5, 2.4))
    amp = float(rng.uniform(0.35, 0.55))
    lift_angle = float(rng.uniform(0.95, 1.18))
    trans = np.stack([
        float(rng.uniform(0.005, 0.010)) * np.sin(2 * np.pi * 0.4 * t),
        np.full(n, STAND_HEIGHT),
        np.zeros(n),
    ], axis=1)
    yaw = np.zeros(n)
    pose = _Pose(n)
    raise_prof = _smoothstep(t / 0.45)            # arm comes up in ~half a second
    osc = amp * np.sin(2 * np.pi * f * t) * raise_prof
    if side == "left":
        pose.set(L_SHOULDER, _rz_batch(lift_angle * raise_prof) @ _rx_batch(np.zeros(n)))
        pose.set(L_ELBOW, _rz_batch(0.55 * raise_prof + osc))
        pose.set(R_SHOULDER, _rz_batch(np.full(n, 1.30)))
        pose.set(R_ELBOW, _rz_batch(np.full(n, 0.15)))
    else:
        pose.set(R_SHOULDER, _rz_batch(-lift_angle * raise_prof))
        pose.set(R_ELBOW, _rz_batch(-0.55 * raise_prof - osc))
        pose.set(L_SHOULDER, _rz_batch(np.full(n, -1.30)))
        pose.set(L_ELBOW, _rz_batch(np.full(n, -0.15)))
    ankle_l, ankle_r = _standing_anchors(n)
    _solve_legs(pose, trans, yaw, ankle_l, ankle_r)
    return trans, yaw, pose, {"side": side}


def _squat_program(n, t, rng):
    depth = float(rng.uniform(0.24, 0.34))
    warp = float(rng.uniform(0.8, 1.25))
    arm_fwd = float(rng.uniform(0.9, 1.3))
    dur = t[-1] if n > 1 else 1.0
    u = np.clip(t / max(dur, 1e-6), 0, 1) ** warp
    prof = 0.5 - 0.5 * np.cos(2 * np.pi * u)  # down then up, asymmetric timing
    trans = np.stack([
        np.zeros(n),
        STAND_HEIGHT - depth * prof,
        np.zeros(n),
    ], axis=1)
    yaw = np.zeros(n)
    pose = _Pose(n)
    # arms swing forward for balance as the hips drop
    fwd = -arm_fwd * prof
    pose.set(L_SHOULDER, _rz_batch(np.full(n, -1.30)) @ _rx_batch(fwd))
    pose.set(R_SHOULDER, _rz_batch(np.full(n, 1.30)) @ _rx_batch(fwd))
    pose.set(SPINE1, _rx_batch(-0.25 * prof))
    ankle_l, ankle_r = _standing_anchors(n)
    _solve_legs(pose, trans, yaw, ankle_l, ankle_r)
    return trans, yaw, pose, {"depth": depth}


def _jump_program(n, t, rng):
    height = float(rng.uniform(0.18, 0.30))
    crouch_depth = float(rng.uniform(0.14, 0.22))
    arm_amp = float(rng.uniform(0.45, 0.70))
    dur = max(t[-1], 1e-6)
    u = t / dur                    # normalized progress
    y = np.full(n, STAND_HEIGHT)
    crouch = STAND_HEIGHT - crouch_depth

    down = u < 0.30                 # crouch
    push = (u >= 0.30) & (u < 0.42)
    flight = (u >= 0.42) & (u < 0.72)
    land = (u >= 0.72) & (u < 0.86)

    y[down] = STAND_HEIGHT + (crouch - STAND_HEIGHT) * _smoothstep(u[down] / 0.30)
    y[push] = crouch + (STAND_HEIGHT + 0.02 - crouch) * _smoothstep((u[push] - 0.30) / 0.12)
    fu = (u[flight] - 0.42) / 0.30
    y[flight] = STAND_HEIGHT + 0.02 + height * 4.0 * fu * (1.0 - fu)
    y[land] = STAND_HEIGHT + 0.02 + (crouch + 0.06 - STAND_HEIGHT - 0.02) * _smoothstep((u[land] - 0.72) / 0.14)
    rec = u >= 0.86
    y[rec] = crouch + 0.06 + (STAND_HEIGHT - crouch - 0.06) * _smoothstep((u[rec] - 0.86) / 0.14)

    trans = np.stack([np.zeros(n), y, np.zeros(n)], axis=1)
    yaw = np.zeros(n)
    pose = _Pose(n)
    arm_sw = np.zeros(n)
    arm_sw[down] = arm_amp * _smoothstep(u[down] / 0.30)
    arm_sw[~down] = arm_amp - (arm_amp + 0.8) * _smoothstep((u[~down] - 0.30) / 0.5)
    pose.hang_arms(swing_l=arm_sw, swing_r=arm_sw)

    ankle_l, ankle_r = _standing_anchors(n)
    in_air = flight.copy()
    # Airborne: feet travel with the body, slightly tucked.
    for ank, sgn in ((ankle_l, 1.0), (ankle_r, -1.0)):
        ank[in_air, 0] = sgn * HIP_X
        ank[in_air, 1] = y[in_air] - 0.62
        ank[in_air, 2] = 0.0
    _solve_legs(pose, trans, yaw, ankle_l, ankle_r)
    return trans, yaw, pose, {"height": height}


def _turn_program(n, t, rng, side: str):
    sgn = 1.0 if side == "left" else -1.0
    angle = float(rng.uniform(1.25, 1.85))
    base_h = float(rng.uniform(0.82, 0.86))
    dur = max(t[-1], 1e-6)
    yaw = sgn * angle * _smoothstep(t / dur)
    trans = np.stack([np.zeros(n), np.full(n, base_h), np.zeros(n)], axis=1)
    pose = _Pose(n)
    breathe = 0.02 * np.sin(2 * np.pi * float(rng.uniform(0.8, 1.4)) * t)
    pose.hang_arms(swing_l=breathe, swing_r=-breathe)

    cycle, duty, lift = float(rng.uniform(0.44, 0.56)), 0.55, 0.13
    yaw_m = _ry_batch(yaw)
    anchors = []
    for hip_sgn in (1.0, -1.0):
        phase0 = 0.0 if hip_sgn > 0 else 0.5
        ph = (t / cycle + phase0) % 1.0
        cyc = np.floor(t / cycle + phase0)
        t_mid = cycle * (cyc + duty / 2.0 - phase0)
        yaw_mid = sgn * angle * _smoothstep(np.clip(t_mid, 0, dur) / dur)
        base = np.stack([hip_sgn * HIP_X * np.cos(yaw_mid), np.full(n, ANKLE_H),
                         -hip_sgn * HIP_X * np.sin(yaw_mid)], axis=1)
        # during swing, slide the anchor toward the next mid-stance heading
        t_mid_next = t_mid + cycle
        yaw_next = sgn * angle * _smoothstep(np.clip(t_mid_next, 0, dur) / dur)
        nxt = np.stack([hip_sgn * HIP_X * np.cos(yaw_next), np.full(n, ANKLE_H),
                        -hip_sgn * HIP_X * np.sin(yaw_next)], axis=1)
        z_prog, y_sw = _swing_profiles((ph - duty) / (1.0 - duty), lift)
        pos = np.where((ph < duty)[:, None], base, base + (nxt - base) * z_prog[:, None])
        pos[:, 1] = np.where(ph < duty, ANKLE_H, ANKLE_H + y_sw)
        anchors.append(pos)
    _solve_legs(pose, trans, yaw, anchors[0], anchors[1])
    return trans, yaw, pose, {"side": side}


_ATOMIC_PROGRAMS = {
    "idle": lambda n, t, rng, p: _idle_program(n, t, rng),
    "walk": lambda n, t, rng, p: _locomotion_program(n, t, rng, running=False, params=p),
    "run": lambda n, t, rng, p: _locomotion_program(n, t, rng, running=True, params=p),
    "jump": lambda n, t, rng, p: _jump_program(n, t, rng),
    "squat": lambda n, t, rng, p: _squat_program(n, t, rng),
    "wave_left": lambda n, t, rng, p: _wave_program(n, t, rng, "left"),
    "wave_right": lambda n, t, rng, p: _wave_program(n, t, rng, "right"),
}


def _run_atomic(class_id: str, duration: float, rng: np.random.Generator,
                params: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    n = max(int(round(duration * FPS)), 8)
    t = np.arange(n) / FPS
    if class_id == "turn":
        side = params.get("side") or ("left" if rng.uniform() < 0.5 else "right")
        trans, yaw, pose, info = _turn_program(n, t, rng, side)
    else:
        trans, yaw, pose, info = _ATOMIC_PROGRAMS[class_id](n, t, rng, params)
    return trans, yaw, pose.mats, info


def _blend_window(rot_mats: np.ndarray, center: int, half: int) -> np.ndarray:
    """Slerp the rotation tracks across [center-half, center+half]."""
    n = rot_mats.shape[0]
    a, b = max(center - half, 0), min(center + half, n - 1)
    if b - a < 2:
        return rot_mats
    qa = matrix_to_quat(rot_mats[a])
    qb = matrix_to_quat(rot_mats[b])
    for i in range(a + 1, b):
        u = (i - a) / (b - a)
        q = slerp(qa, qb, np.full(qa.shape[0], u))
        rot_mats[i] = quat_to_matrix(q)
    return rot_mats


def _bridge_segment(ta: np.ndarray, ya: np.ndarray, ma: np.ndarray,
                    skeleton: Skeleton, nb: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Transition to a stance at the end-of-A ground position.

    Each foot takes one shuffle step (left in the first half, right in the
    second) from wherever part A left it to the standing anchor, using the
    lifted swing profile so grounded frames never translate.
    """
    nb = max(nb, 8)
    end_rel = fk_positions(matrix_to_rot6d(_ry_batch(ya[-1:]))[0],
                           matrix_to_rot6d(ma[-1]), skeleton)
    end_world = end_rel + ta[-1]

    trans = np.tile(ta[-1], (nb, 1))
    ease = _smoothstep(np.arange(nb) / (nb - 1))
    trans[:, 1] = ta[-1, 1] + (STAND_HEIGHT - ta[-1, 1]) * ease
    yaw = np.full(nb, ya[-1])
    yaw_m = _ry_batch(yaw[:1])[0]

    pose = _Pose(nb)
    pose.hang_arms()
    anchors = []
    for idx, (ankle_j, hip_sgn, lo, hi) in enumerate(
            ((L_ANKLE, 1.0, 0.0, 0.5), (R_ANKLE, -1.0, 0.5, 1.0))):
        start = end_world[ankle_j].copy()
        target = ta[-1] * np.array([1.0, 0.0, 1.0]) + yaw_m @ np.array([hip_sgn * HIP_X, ANKLE_H, 0.0])
        s = np.clip((np.arange(nb) / (nb - 1) - lo) / (hi - lo), 0.0, 1.0)
        z_prog, y_sw = _swing_profiles(s, 0.10)
        pos = start[None, :] + (target - start)[None, :] * z_prog[:, None]
        pos[:, 1] = start[1] + (ANKLE_H - start[1]) * z_prog + y_sw
        anchors.append(pos)
    _solve_legs(pose, trans, yaw, anchors[0], anchors[1])
    return trans, yaw, pose.mats


def generate_clip(spec: ActionSpec, skeleton: Skeleton | None = None
                  ) -> tuple[MotionClip, str, float]:
    """Synthesize one labeled clip. Deterministic per (spec, seed)."""
    if spec.class_id not in TAXONOMY:
        raise InvalidSpec(f"unknown action class {spec.class_id!r}")
    duration = spec.resolved_duration()
    if not 1.0 <= duration <= 12.0:
        raise InvalidSpec(f"duration {duration} outside [1, 12] seconds")
    skeleton = skeleton or load_default_skeleton()
    rng = np.random.default_rng(spec.seed)
    cls = TAXONOMY[spec.class_id]

    if cls.parts is None:
        trans, yaw, mats, info = _run_atomic(spec.class_id, duration, rng, spec.params)
    else:
        bridge = 0.4
        d_a = (duration - bridge) * (TAXONOMY[cls.parts[0]].duration /
                                     (TAXONOMY[cls.parts[0]].duration + TAXONOMY[cls.parts[1]].duration))
        d_b = duration - bridge - d_a
        ta, ya, ma, info_a = _run_atomic(cls.parts[0], d_a, rng, spec.params)
        tb, yb, mb, info_b = _run_atomic(cls.parts[1], d_b, rng, spec.params)
        tbr, ybr, mbr = _bridge_segment(ta, ya, ma, skeleton, int(round(bridge * FPS)))
        # part B continues from the end-of-A ground position
        tb = tb + np.array([ta[-1, 0], 0.0, ta[-1, 2]])
        yb = yb + ya[-1]
        trans = np.concatenate([ta, tbr, tb])
        yaw = np.concatenate([ya, ybr, yb])
        mats = np.concatenate([ma, mbr, mb])
        mats = _blend_window(mats, len(ta), 3)
        mats = _blend_window(mats, len(ta) + len(tbr), 3)
        info = {**info_a, **info_b}

    root_mats = _ry_batch(yaw)
    positions = fk_positions(matrix_to_rot6d(root_mats), matrix_to_rot6d(mats), skeleton)
    frames = assemble_frames(trans, matrix_to_rot6d(root_mats), matrix_to_rot6d(mats), positions)

    caption = _render_caption(cls, rng, info)
    meta = {"class": spec.class_id, "seed": spec.seed, "caption": caption,
            "duration": duration, "category": cls.category}
    clip = canonicalize(MotionClip(fps=FPS, frames=frames, meta=meta), skeleton)
    return clip, caption, duration


def _render_caption(cls: ActionClass, rng: np.random.Generator, info: dict) -> str:
    template = cls.templates[int(rng.integers(len(cls.templates)))]
    return render_template(template, info)


def render_template(template: str, info: dict) -> str:
    out = template
    if "{speed}" in out:
        out = out.replace("{speed}", _SPEED_ADVERBS.get(info.get("speed", "normal"), ""))
    if "{side}" in out:
        out = out.replace("{side}", info.get("side", "left"))
    return re.sub(r"\s+", " ", out).strip()


def heldout_prompts(class_id: str) -> list[str]:
    """Evaluation paraphrases never used as training captions."""
    cls = TAXONOMY[class_id]
    outs = []
    for tpl in cls.heldout:
        if "{side}" in tpl:
            outs.append(render_template(tpl, {"side": "left"}))
            outs.append(render_template(tpl, {"side": "right"}))
        elif "{speed}" in tpl:
            for speed in ("slow", "normal", "fast"):
                outs.append(render_template(tpl, {"speed": speed}))
        else:
            outs.append(render_template(tpl, {}))
    return outs


def all_training_captions() -> list[str]:
    """Every renderable training caption: the tokenizer vocabulary source."""
    outs = []
    for cls in TAXONOMY.values():
        for tpl in cls.templates + cls.heldout:
            for speed in ("slow", "normal", "fast"):
                for side in ("left", "right"):
                    outs.append(render_template(tpl, {"speed": speed, "side": side}))
    return sorted(set(outs))


# ---------------------------------------------------------------------------
# defect injection
# ---------------------------------------------------------------------------

DEFECT_KINDS = ("jitter", "slide", "teleport", "freeze")


def plant_defect(c: MotionClip, kind: str, magnitude: float, seed: int = 0) -> MotionClip:
    """Deterministically corrupt a clip; the corruption grows with magnitude."""
    if kind not in DEFECT_KINDS:
        raise InvalidSpec(f"unknown defect kind {kind!r}")
    if magnitude < 0:
        raise InvalidSpec("magnitude must be >= 0")
    rng = np.random.default_rng(seed)
    frames = c.frames.copy()
    n = c.n_frames

    if kind == "jitter":
        pos_noise = rng.standard_normal((n, 22, 3)) * 0.05
        rot_noise = rng.standard_normal((n, 126)) * 0.10
        frames[:, JOINT_POS] += (magnitude * pos_noise).reshape(n, 66)
        frames[:, 9:135] += magnitude * rot_noise
    elif kind == "slide":
        ang = rng.uniform(0, 2 * np.pi)
        direction = np.array([np.sin(ang), 0.0, np.cos(ang)])
        drift = np.linspace(0.0, magnitude, n)[:, None] * direction[None, :]
        frames[:, 0:3] += drift
        # pin the feet to ground height so the drift reads as sliding contact
        pos = frames[:, JOINT_POS].reshape(n, 22, 3)
        for j in (10, 11):
            pos[:, j, 1] = 0.01 - frames[:, 1]
        frames[:, JOINT_POS] = pos.reshape(n, 66)
    elif kind == "teleport":
        at = n // 2
        ang = rng.uniform(0, 2 * np.pi)
        direction = np.array([np.sin(ang), 0.0, np.cos(ang)])
        frames[at:, 0:3] += magnitude * direction
    elif kind == "freeze":
        frac = min(magnitude, 1.0)
        start = max(1, n - int(round(frac * (n - 1))) - 1)
        frames[start:] = frames[start]

    meta = dict(c.meta)
    meta["defect"] = {"kind": kind, "magnitude": magnitude, "seed": seed}
    return MotionClip(fps=c.fps, frames=frames, meta=meta)


# ---------------------------------------------------------------------------
# duration prediction and prompt normalization
# ---------------------------------------------------------------------------

_SYNONYMS = {
    "strolls": "walk", "stroll": "walk", "strolling": "walk", "walks": "walk",
    "walking": "walk", "walk": "walk",
    "jogs": "run", "jog": "run", "jogging": "run", "sprints": "run",
    "sprint": "run", "sprinting": "run", "runs": "run", "running": "run", "run": "run",
    "hops": "jump", "hop": "jump", "hopping": "jump", "leaps": "jump",
    "leap": "jump", "leaping": "jump", "jumps": "jump", "jumping": "jump", "jump": "jump",
    "crouches": "squat", "crouch": "squat", "crouching": "squat",
    "squats": "squat", "squatting": "squat", "squat": "squat",
    "spins": "turn", "spin": "turn", "rotates": "turn", "rotate": "turn",
    "turns": "turn", "turning": "turn", "turn": "turn",
    "waves": "wave", "wave": "wave", "waving": "wave", "greets": "wave",
    "stands": "idle", "standing": "idle", "stationary": "idle",
    "idle": "idle", "still": "idle", "motionless": "idle",
}

_FILLERS = ("please", "can you", "could you", "i want", "make", "show me")

_DURATION_RE = re.compile(r"for\s+(\d+(?:\.\d+)?)\s*s(?:ec(?:ond)?s?)?\b")
_SPLIT_RE = re.compile(r"\b(?:then|and then|followed by|after that)\b")


@dataclass
class NormalizedPrompt:
    text: str                    # cleaned, canonical-vocabulary prompt
    class_id: str | None         # resolved taxonomy class; None if unmatched
    explicit_duration: float | None
    low_confidence: bool


def _resolve_atomic(segment: str) -> str | None:
    toks = re.findall(r"[a-z']+", segment)
    action = None
    for tok in toks:
        if tok in _SYNONYMS:
            action = _SYNONYMS[tok]
            break
    if action is None:
        return None
    if action == "wave":
        side = "left" if "left" in toks else ("right" if "right" in toks else "left")
        return f"wave_{side}"
    return action


def normalize_prompt(prompt: str) -> NormalizedPrompt:
    """Lowercase, strip fillers, map synonyms onto the taxonomy vocabulary."""
    if not prompt or not prompt.strip():
        raise EmptyPrompt("prompt is empty")
    text = prompt.lower().strip()
    for filler in _FILLERS:
        text = text.replace(filler, " ")
    dur_match = _DURATION_RE.search(text)
    explicit = float(dur_match.group(1)) if dur_match else None
    core = _DURATION_RE.sub(" ", text)

    parts = [p for p in _SPLIT_RE.split(core) if p.strip()]
    resolved = [_resolve_atomic(p) for p in parts]
    class_id: str | None = None
    if len(resolved) >= 2 and resolved[0] and resolved[1]:
        candidate = f"{resolved[0]}_then_{resolved[1]}"
        if candidate in TAXONOMY:
            class_id = candidate
    if class_id is None and resolved and resolved[0]:
        first = resolved[0]
        class_id = first if first in TAXONOMY else None

    low_conf = class_id is None
    canon = TAXONOMY[class_id].templates[0] if class_id else re.sub(r"\s+", " ", core).strip()
    canon = render_template(canon, {"side": "right" if "right" in core else "left",
                                    "speed": "normal"})
    return NormalizedPrompt(text=canon, class_id=class_id,
                            explicit_duration=explicit, low_confidence=low_conf)


def predict_duration(prompt: str) -> tuple[float, bool]:
    """Seconds for a prompt via the per-class duration table.

    Explicit durations in the prompt override the table. Returns (seconds,
    low_confidence).
    """
    norm = normalize_prompt(prompt)
    if norm.explicit_duration is not None:
        return float(np.clip(norm.explicit_duration, 1.0, 12.0)), norm.low_confidence
    if norm.class_id is None:
        return DEFAULT_PROMPT_SECONDS, True
    return TAXONOMY[norm.class_id].duration, False
