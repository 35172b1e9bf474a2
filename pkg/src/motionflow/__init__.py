"""Desk-scale text-to-motion generation.

Motion representation and curation, a flow-matching diffusion transformer
over joint text+motion sequences, stochastic/deterministic samplers, and a
two-phase preference-alignment stage, all exercised on procedurally
generated motion/caption data.
"""

__version__ = "0.1.0"

from .clip import Frame, MotionClip, canonicalize, forward_kinematics, load_clip, resample, save_clip, segment
from .rotations import matrix_to_rot6d, rot6d_to_matrix
from .skeleton import Skeleton, load_default_skeleton

__all__ = [
    "Frame", "MotionClip", "Skeleton", "__version__", "canonicalize",
    "forward_kinematics", "load_clip", "load_default_skeleton",
    "matrix_to_rot6d", "resample", "rot6d_to_matrix", "save_clip", "segment",
]
