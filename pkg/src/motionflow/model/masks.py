"""Attention mask construction for the joint text+motion sequence."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigInvalid


def build_mask(n_text: int, n_motion: int, band_radius: int) -> np.ndarray:
    """Boolean (S, S) mask over the [text; motion] sequence, True = may attend.

    Motion queries read all text keys and motion keys within the centered
    band |i - j| <= band_radius. Text queries read text keys only: noisy
    motion states never propagate back into the text representation.
    """
    if n_text < 1 or n_motion < 1:
        raise ConfigInvalid("need at least one text and one motion token")
    if band_radius < 0:
        raise ConfigInvalid("band_radius must be >= 0")
    s = n_text + n_motion
    mask = np.zeros((s, s), dtype=bool)
    mask[:n_text, :n_text] = True
    mask[n_text:, :n_text] = True
    idx = np.arange(n_motion)
    mask[n_text:, n_text:] = np.abs(idx[:, None] - idx[None, :]) <= band_radius
    return mask


def receptive_field(n_attention_layers: int, band_radius: int) -> int:
    """Max |i - j| over which motion token j can influence output i."""
    return n_attention_layers * band_radius
