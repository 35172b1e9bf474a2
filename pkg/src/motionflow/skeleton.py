"""22-joint skeleton definition and forward kinematics.

The default skeleton ships as a JSON asset: a hand-tuned 22-joint body with
the conventional pelvis-first joint order (left/right hips, knees, ankles,
feet, spine chain, collars, shoulders, elbows, wrists). The rig is T-posed:
arms along +/-X, legs down -Y, character facing +Z with +X on its left.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigInvalid
from .rotations import rot6d_to_matrix

N_JOINTS = 22

PELVIS, L_HIP, R_HIP, SPINE1 = 0, 1, 2, 3
L_KNEE, R_KNEE, SPINE2 = 4, 5, 6
L_ANKLE, R_ANKLE, SPINE3 = 7, 8, 9
L_FOOT, R_FOOT, NECK = 10, 11, 12
L_COLLAR, R_COLLAR, HEAD = 13, 14, 15
L_SHOULDER, R_SHOULDER = 16, 17
L_ELBOW, R_ELBOW, L_WRIST, R_WRIST = 18, 19, 20, 21

FOOT_JOINTS = (L_FOOT, R_FOOT)


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy: parent indices, rest-pose offsets, joint names."""

    parents: np.ndarray        # (22,) int, -1 for the root
    rest_offsets: np.ndarray   # (22, 3) meters, child offset in parent frame
    names: tuple[str, ...]

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.rest_offsets, dtype=np.float64)
        if parents.shape != (N_JOINTS,) or offsets.shape != (N_JOINTS, 3):
            raise ConfigInvalid("skeleton must have exactly 22 joints")
        if parents[0] != -1 or np.any(parents[1:] < 0):
            raise ConfigInvalid("joint 0 must be the single root")
        if np.any(parents[1:] >= np.arange(1, N_JOINTS)):
            raise ConfigInvalid("parents must be topologically ordered (parents[j] < j)")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest_offsets", offsets)
        object.__setattr__(self, "names", tuple(self.names))

    def index(self, name: str) -> int:
        return self.names.index(name)

    def rest_positions(self) -> np.ndarray:
        """Cumulative rest offsets: joint positions of the rest pose, root at origin."""
        pos = np.zeros((N_JOINTS, 3))
        for j in range(1, N_JOINTS):
            pos[j] = pos[self.parents[j]] + self.rest_offsets[j]
        return pos


def load_default_skeleton() -> Skeleton:
    """Load the packaged 22-joint skeleton asset."""
    raw = resources.files("motionflow.data").joinpath("skeleton22.json").read_text()
    obj = json.loads(raw)
    return Skeleton(
        parents=np.array(obj["parents"]),
        rest_offsets=np.array(obj["rest_offsets"]),
        names=tuple(obj["names"]),
    )


def fk_positions(root_rot6d: np.ndarray, joint_rot6d: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Forward kinematics for a batch of poses.

    root_rot6d: (..., 6) root orientation; joint_rot6d: (..., 21, 6) local
    rotations of joints 1..21. Returns (..., 22, 3) joint positions relative
    to the root joint (root translation is NOT applied; root sits at the
    origin, rotated by the root orientation).
    """
    root_rot6d = np.asarray(root_rot6d, dtype=np.float64)
    joint_rot6d = np.asarray(joint_rot6d, dtype=np.float64)
    batch = root_rot6d.shape[:-1]
    r_root = rot6d_to_matrix(root_rot6d)                       # (..., 3, 3)
    r_local = rot6d_to_matrix(joint_rot6d)                     # (..., 21, 3, 3)

    glob = np.empty(batch + (N_JOINTS, 3, 3))
    pos = np.zeros(batch + (N_JOINTS, 3))
    glob[..., 0, :, :] = r_root
    for j in range(1, N_JOINTS):
        p = skeleton.parents[j]
        offset = skeleton.rest_offsets[j]
        pos[..., j, :] = pos[..., p, :] + np.einsum("...ij,j->...i", glob[..., p, :, :], offset)
        glob[..., j, :, :] = glob[..., p, :, :] @ r_local[..., j - 1, :, :]
    return pos


def fk_global_rotations(root_rot6d: np.ndarray, joint_rot6d: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Global rotation matrices (..., 22, 3, 3) for each joint."""
    r_root = rot6d_to_matrix(np.asarray(root_rot6d, dtype=np.float64))
    r_local = rot6d_to_matrix(np.asarray(joint_rot6d, dtype=np.float64))
    batch = r_root.shape[:-2]
    glob = np.empty(batch + (N_JOINTS, 3, 3))
    glob[..., 0, :, :] = r_root
    for j in range(1, N_JOINTS):
        glob[..., j, :, :] = glob[..., skeleton.parents[j], :, :] @ r_local[..., j - 1, :, :]
    return glob
