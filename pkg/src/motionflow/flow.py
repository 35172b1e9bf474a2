"""Flow-matching objective and the two-stage supervised training loop.

Training regresses the velocity of the straight noise-to-data path: draw
t ~ U[0,1] and x0 ~ N(0, I), form x_t = (1-t) x0 + t x1, and minimize the
MSE between the model output and the constant target x1 - x0. The curriculum
runs a pretraining stage at a constant learning rate, then fine-tunes from
its checkpoint at one tenth of that rate.
"""
from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import AdamW, Tensor, default_dtype, mse, tensor
from .errors import ConfigInvalid, NonFinite, ShapeMismatch
from .model import Conditioning, MotionDiT

STAGES = ("pretrain", "finetune")
FINETUNE_LR_FACTOR = 0.1


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "pretrain"
    lr: float = 1e-3
    batch_size: int = 8
    steps: int = 500
    seed: int = 0
    t_sampling: str = "uniform"
    weight_decay: float = 0.0
    log_every: int = 10
    checkpoint_every: int = 0      # 0: only the final checkpoint

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigInvalid(f"stage must be one of {STAGES}")
        if not self.lr > 0:
            raise ConfigInvalid("lr must be positive")
        if self.batch_size < 1 or self.steps < 1:
            raise ConfigInvalid("batch_size and steps must be >= 1")
        if self.t_sampling != "uniform":
            raise ConfigInvalid("only uniform t sampling is supported")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainExample:
    frames: np.ndarray          # (n, 201), already normalized
    tokens: np.ndarray          # (m,) int ids
    caption: str = ""
    class_id: str | None = None


class Normalizer:
    """Per-dimension zero-mean/unit-variance scaling of the 201-dim frames."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if self.mean.shape != (201,) or self.std.shape != (201,):
            raise ShapeMismatch("normalizer stats must have shape (201,)")

    @classmethod
    def fit(cls, frame_arrays: list[np.ndarray], std_floor: float = 1e-4) -> "Normalizer":
        stacked = np.concatenate(frame_arrays, axis=0)
        mean = stacked.mean(axis=0)
        std = np.maximum(stacked.std(axis=0), std_floor)
        return cls(mean, std)

    def apply(self, frames: np.ndarray) -> np.ndarray:
        return ((frames - self.mean) / self.std).astype(default_dtype())

    def invert(self, frames: np.ndarray) -> np.ndarray:
        return frames.astype(np.float64) * self.std + self.mean

    def state(self) -> dict[str, np.ndarray]:
        return {"norm.mean": self.mean, "norm.std": self.std}

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "Normalizer":
        return cls(state["norm.mean"], state["norm.std"])


def interpolate(x0: np.ndarray, x1: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Point on the straight path and its constant velocity target."""
    x0 = np.asarray(x0)
    x1 = np.asarray(x1)
    if x0.shape != x1.shape:
        raise ShapeMismatch(f"endpoint shapes disagree: {x0.shape} vs {x1.shape}")
    if not 0.0 <= t <= 1.0:
        raise ConfigInvalid(f"t must lie in [0, 1], got {t}")
    return (1.0 - t) * x0 + t * x1, x1 - x0


def fm_loss_at(model: MotionDiT, x1: np.ndarray, tokens: np.ndarray,
               t: float, x0: np.ndarray) -> Tensor:
    """Velocity-matching MSE at a fixed (t, x0) draw."""
    x_t, v_target = interpolate(x0, x1, t)
    v = model.forward(tensor(x_t), Conditioning(text_tokens=tokens, timestep=t))
    return mse(v, tensor(v_target))


def fm_loss(model: MotionDiT, x1: np.ndarray, cond: Conditioning,
            rng: np.random.Generator) -> Tensor:
    """Velocity-matching MSE with (t, x0) drawn from rng.

    cond.timestep is ignored; the objective draws its own t.
    """
    t = float(rng.uniform())
    x0 = rng.standard_normal(np.asarray(x1).shape)
    return fm_loss_at(model, x1, cond.text_tokens, t, x0)


def train(model: MotionDiT, dataset: list[TrainExample], cfg: TrainConfig,
          run_dir: str | os.PathLike | None = None,
          extra_ckpt_tensors: dict[str, np.ndarray] | None = None,
          ckpt_meta: dict | None = None) -> list[tuple[int, float]]:
    """Optimize the flow-matching objective; returns the (step, loss) curve.

    Deterministic for a fixed seed: shuffling, t draws, and noise all come
    from one generator. A NonFinite beyond any op aborts with the step index.
    """
    if not dataset:
        raise ConfigInvalid("dataset is empty")
    for ex in dataset:
        if ex.frames.shape[0] > 360:
            raise ConfigInvalid("clips must be at most 360 frames")
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    order: list[int] = []
    curve: list[tuple[int, float]] = []
    running: list[float] = []

    for step in range(1, cfg.steps + 1):
        batch = []
        for _ in range(cfg.batch_size):
            if not order:
                order = list(rng.permutation(len(dataset)))
            batch.append(dataset[order.pop()])
        opt.zero_grad()
        total = 0.0
        try:
            for ex in batch:
                loss = fm_loss(model, ex.frames, Conditioning(ex.tokens, 0.0), rng)
                total += loss.item()
                (loss * (1.0 / cfg.batch_size)).backward()
        except NonFinite as e:
            raise NonFinite(f"non-finite loss at step {step}: {e}") from e
        opt.step()
        running.append(total / cfg.batch_size)
        if step % cfg.log_every == 0 or step == cfg.steps:
            curve.append((step, float(np.mean(running))))
            running = []
        if run_dir and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            model.save(os.path.join(run_dir, f"step_{step:06d}.ckpt"),
                       extra_tensors=extra_ckpt_tensors, meta=ckpt_meta)

    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "loss.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss"])
            writer.writerows(curve)
    return curve
