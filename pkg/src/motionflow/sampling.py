"""Euler ODE sampler and its stochastic (SDE) variant with recorded kernels.

Generation integrates dx/dt = v(x, t) from t=0 (noise) to t=1 (data) in
normalized frame space. The SDE variant perturbs each Euler mean with
Gaussian noise of std sde_noise * sqrt(dt) and records every transition
(state, mean, sigma, draw) so the exact log-density of the trajectory can be
evaluated later under any weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clip import FRAME_DIM, JOINT_POS, MotionClip, assemble_frames
from .errors import ConfigInvalid, NonFinite
from .flow import Normalizer
from .model import MotionDiT
from .skeleton import Skeleton, fk_positions

FPS_OUT = 30.0


@dataclass(frozen=True)
class SamplerConfig:
    n_steps: int = 32
    mode: str = "ode"            # ode | sde
    sde_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigInvalid("n_steps must be >= 1")
        if self.mode not in ("ode", "sde"):
            raise ConfigInvalid("mode must be 'ode' or 'sde'")
        if self.sde_noise < 0:
            raise ConfigInvalid("sde_noise must be >= 0")


@dataclass
class SdeStep:
    t: float
    state: np.ndarray       # x_k (normalized space)
    mean: np.ndarray        # x_k + dt * v(x_k, t_k)
    sigma: float
    drawn: np.ndarray       # x_{k+1}


@dataclass
class SdeTrajectory:
    x_init: np.ndarray
    steps: list[SdeStep] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.steps[-1].drawn if self.steps else self.x_init

    def replay(self) -> np.ndarray:
        """Re-walk the recorded transitions, checking chain consistency."""
        x = self.x_init
        for k, s in enumerate(self.steps):
            if not np.array_equal(s.state, x):
                raise NonFinite(f"trajectory record broken at step {k}")
            x = s.drawn
        return x


def _velocity_fn(model, tokens: np.ndarray | None):
    if callable(model) and not isinstance(model, MotionDiT):
        return model
    return model.velocity_fn(tokens)


def _to_clip(x_norm: np.ndarray, normalizer: Normalizer | None,
             skeleton: Skeleton | None, meta: dict) -> MotionClip:
    frames = normalizer.invert(x_norm) if normalizer is not None else np.asarray(x_norm, dtype=np.float64)
    if skeleton is not None:
        # rotations are authoritative: rebuild the position channel via FK
        n = frames.shape[0]
        pos = fk_positions(frames[:, 3:9], frames[:, 9:135].reshape(n, 21, 6), skeleton)
        frames = frames.copy()
        frames[:, JOINT_POS] = pos.reshape(n, 66)
    return MotionClip(fps=FPS_OUT, frames=frames, meta=meta)


def sample_ode(model, tokens: np.ndarray | None, n_frames: int, cfg: SamplerConfig,
               normalizer: Normalizer | None = None,
               skeleton: Skeleton | None = None, meta: dict | None = None) -> MotionClip:
    """Integrate the learned velocity field with uniform Euler steps.

    `model` is a MotionDiT or a raw velocity callable (x, t) -> v.
    """
    if not 2 <= n_frames <= 360:
        raise ConfigInvalid(f"n_frames must lie in [2, 360], got {n_frames}")
    rng = np.random.default_rng(cfg.seed)
    v_fn = _velocity_fn(model, tokens)
    x = rng.standard_normal((n_frames, FRAME_DIM)).astype(np.float32)
    dt = 1.0 / cfg.n_steps
    for k in range(cfg.n_steps):
        v = v_fn(x, k * dt)
        x = x + dt * np.asarray(v, dtype=x.dtype)
        if not np.isfinite(x).all():
            raise NonFinite(f"sampler state diverged at step {k}")
    return _to_clip(x, normalizer, skeleton, dict(meta or {}, sampler="ode", seed=cfg.seed))


def sample_sde(model, tokens: np.ndarray | None, n_frames: int, cfg: SamplerConfig,
               normalizer: Normalizer | None = None, skeleton: Skeleton | None = None,
               meta: dict | None = None) -> tuple[MotionClip, SdeTrajectory]:
    """Euler steps with Gaussian perturbation; records per-step transition stats.

    With sde_noise = 0 the trajectory degenerates to the ODE path.
    """
    if not 2 <= n_frames <= 360:
        raise ConfigInvalid(f"n_frames must lie in [2, 360], got {n_frames}")
    rng = np.random.default_rng(cfg.seed)
    v_fn = _velocity_fn(model, tokens)
    x = rng.standard_normal((n_frames, FRAME_DIM)).astype(np.float32)
    traj = SdeTrajectory(x_init=x.copy())
    dt = 1.0 / cfg.n_steps
    sigma = float(cfg.sde_noise * np.sqrt(dt))   # python float: no f64 promotion
    for k in range(cfg.n_steps):
        t_k = k * dt
        v = v_fn(x, t_k)
        mean = x + dt * np.asarray(v, dtype=x.dtype)
        noise = rng.standard_normal(x.shape).astype(x.dtype) if sigma > 0 else 0.0
        nxt = mean + sigma * noise
        if not np.isfinite(nxt).all():
            raise NonFinite(f"sampler state diverged at step {k}")
        traj.steps.append(SdeStep(t=t_k, state=x.copy(), mean=mean.copy(),
                                  sigma=float(sigma), drawn=np.asarray(nxt).copy()))
        x = np.asarray(nxt)
    clip = _to_clip(x, normalizer, skeleton, dict(meta or {}, sampler="sde", seed=cfg.seed))
    return clip, traj


def gaussian_log_prob(x: np.ndarray, mean: np.ndarray, sigma: float) -> float:
    """Summed log density of x under N(mean, sigma^2 I)."""
    d = x.size
    quad = float(((x - mean) ** 2).sum()) / (2.0 * sigma * sigma)
    return -quad - d * (np.log(sigma) + 0.5 * np.log(2.0 * np.pi))


def trajectory_log_prob(model, tokens: np.ndarray | None, traj: SdeTrajectory) -> float:
    """Log-density of the recorded trajectory under the given weights."""
    v_fn = _velocity_fn(model, tokens)
    if not traj.steps:
        return 0.0
    dt = 1.0 / len(traj.steps)
    total = 0.0
    for s in traj.steps:
        mean = s.state + dt * np.asarray(v_fn(s.state, s.t), dtype=s.state.dtype)
        total += gaussian_log_prob(s.drawn, mean, s.sigma)
    return total
