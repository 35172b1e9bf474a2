"""Motion DiT: config, masks, tokenizer, and the velocity model."""
from .config import ModelConfig, manifest, small_config, tiny_config
from .dit import Conditioning, MotionDiT, TextState, apply_rope, init_weights, sinusoidal_embedding
from .masks import build_mask, receptive_field
from .tokenizer import Tokenizer

__all__ = [
    "Conditioning", "ModelConfig", "MotionDiT", "TextState", "Tokenizer", "apply_rope",
    "build_mask", "init_weights", "manifest", "receptive_field",
    "sinusoidal_embedding", "small_config", "tiny_config",
]
