"""Architecture hyperparameters and the weight-shape manifest."""
from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigInvalid


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 128
    n_heads: int = 4
    n_dual_blocks: int = 3
    n_single_blocks: int = 3
    band_radius: int = 60           # centered window: 2*60 + 1 = 121 frames
    max_text_tokens: int = 16
    vocab_size: int = 256
    rope_base: float = 10000.0
    time_embed_dim: int = 128
    n_refiner_blocks: int = 2
    mlp_ratio: float = 2.0
    n_channel_groups: int = 4
    motion_dim: int = 201

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigInvalid("d_model must be divisible by n_heads")
        if (self.d_model // self.n_heads) % 2:
            raise ConfigInvalid("head dim must be even for rotary embedding")
        if self.band_radius < 0:
            raise ConfigInvalid("band_radius must be >= 0")
        if self.d_model % self.n_channel_groups:
            raise ConfigInvalid("d_model must be divisible by n_channel_groups")
        if self.time_embed_dim % 2:
            raise ConfigInvalid("time_embed_dim must be even")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def mlp_dim(self) -> int:
        return int(self.d_model * self.mlp_ratio)

    @property
    def cond_dim(self) -> int:
        # concat(time embedding, pooled text embedding)
        return self.time_embed_dim + self.d_model

    @property
    def mod_hidden(self) -> int:
        return max(self.d_model // 2, 8)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def tiny_config(**overrides) -> ModelConfig:
    """~2M-parameter config for unit tests and quick experiments."""
    base = dict(d_model=128, n_heads=4, n_dual_blocks=3, n_single_blocks=3,
                time_embed_dim=128)
    base.update(overrides)
    return ModelConfig(**base)


def small_config(**overrides) -> ModelConfig:
    """Workstation-scale config used by the end-to-end runs."""
    base = dict(d_model=384, n_heads=6, n_dual_blocks=6, n_single_blocks=6,
                time_embed_dim=256)
    base.update(overrides)
    return ModelConfig(**base)


def manifest(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every weight name and shape, in creation order."""
    d = cfg.d_model
    dm = cfg.mlp_dim
    mh = cfg.mod_hidden
    shapes: dict[str, tuple[int, ...]] = {}

    shapes["motion_in.w"] = (cfg.motion_dim, d)
    shapes["motion_in.b"] = (d,)
    shapes["token_emb"] = (cfg.vocab_size, d)

    for i in range(cfg.n_refiner_blocks):
        p = f"refiner.{i}."
        shapes[p + "ln1.g"] = (d,)
        shapes[p + "ln1.b"] = (d,)
        for nm in ("wq", "wk", "wv", "wo"):
            shapes[p + nm] = (d, d)
            shapes[p + nm.replace("w", "b")] = (d,)
        shapes[p + "ln2.g"] = (d,)
        shapes[p + "ln2.b"] = (d,)
        shapes[p + "mlp.w1"] = (d, dm)
        shapes[p + "mlp.b1"] = (dm,)
        shapes[p + "mlp.w2"] = (dm, d)
        shapes[p + "mlp.b2"] = (d,)

    shapes["text_pool.w"] = (d, d)
    shapes["text_pool.b"] = (d,)
    shapes["time_mlp.w1"] = (cfg.time_embed_dim, cfg.time_embed_dim)
    shapes["time_mlp.b1"] = (cfg.time_embed_dim,)
    shapes["time_mlp.w2"] = (cfg.time_embed_dim, cfg.time_embed_dim)
    shapes["time_mlp.b2"] = (cfg.time_embed_dim,)

    def mod(prefix: str, n_out: int):
        shapes[prefix + "mod.w1"] = (cfg.cond_dim, mh)
        shapes[prefix + "mod.b1"] = (mh,)
        shapes[prefix + "mod.w2"] = (mh, n_out * d)
        shapes[prefix + "mod.b2"] = (n_out * d,)

    for i in range(cfg.n_dual_blocks):
        p = f"dual.{i}."
        mod(p, 6)
        for stream in ("motion", "text"):
            sp = p + stream + "."
            for nm in ("wq", "wk", "wv", "wo"):
                shapes[sp + nm] = (d, d)
                shapes[sp + nm.replace("w", "b")] = (d,)
            shapes[sp + "mlp.w1"] = (d, dm)
            shapes[sp + "mlp.b1"] = (dm,)
            shapes[sp + "mlp.w2"] = (dm, d)
            shapes[sp + "mlp.b2"] = (d,)
        shapes[p + "text.ln1.g"] = (d,)
        shapes[p + "text.ln1.b"] = (d,)
        shapes[p + "text.ln2.g"] = (d,)
        shapes[p + "text.ln2.b"] = (d,)

    for i in range(cfg.n_single_blocks):
        p = f"single.{i}."
        mod(p, 6)
        for nm in ("wq", "wk", "wv", "wo", "wcq", "wck", "wcv", "wco"):
            shapes[p + nm] = (d, d)
            shapes[p + "b" + nm[1:]] = (d,)
        shapes[p + "mlp.w1"] = (d, dm)
        shapes[p + "mlp.b1"] = (dm,)
        shapes[p + "mlp.w2"] = (dm, d)
        shapes[p + "mlp.b2"] = (d,)

    mod("final.", 2)
    shapes["motion_out.w"] = (d, cfg.motion_dim)
    shapes["motion_out.b"] = (cfg.motion_dim,)
    return shapes
