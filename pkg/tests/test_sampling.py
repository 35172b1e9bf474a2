import numpy as np
import pytest

from motionflow.errors import ConfigInvalid, NonFinite
from motionflow.flow import Normalizer
from motionflow.sampling import (
    SamplerConfig, gaussian_log_prob, sample_ode, sample_sde, trajectory_log_prob,
)


def test_sampler_config_validation():
    with pytest.raises(ConfigInvalid):
        SamplerConfig(n_steps=0)
    with pytest.raises(ConfigInvalid):
        SamplerConfig(mode="rk4")
    with pytest.raises(ConfigInvalid):
        SamplerConfig(mode="sde", sde_noise=-0.1)


def test_cheating_oracle_one_step_exact(rng):
    x1 = rng.standard_normal((20, 201)).astype(np.float32)
    captured = {}

    def oracle(x, t):
        if "x0" not in captured:
            captured["x0"] = x.copy()
        return x1 - captured["x0"]

    clip = sample_ode(oracle, None, 20, SamplerConfig(n_steps=1, seed=5))
    assert np.abs(clip.frames - x1.astype(np.float64)).max() < 1e-6


def test_ode_seed_determinism():
    def v(x, t):
        return -x

    a = sample_ode(v, None, 8, SamplerConfig(n_steps=4, seed=11))
    b = sample_ode(v, None, 8, SamplerConfig(n_steps=4, seed=11))
    assert np.array_equal(a.frames, b.frames)
    c = sample_ode(v, None, 8, SamplerConfig(n_steps=4, seed=12))
    assert not np.array_equal(a.frames, c.frames)


def test_sde_zero_noise_degenerates_to_ode():
    def v(x, t):
        return -0.5 * x

    ode = sample_ode(v, None, 6, SamplerConfig(n_steps=8, seed=3))
    sde, traj = sample_sde(v, None, 6, SamplerConfig(n_steps=8, mode="sde", sde_noise=0.0, seed=3))
    assert np.array_equal(ode.frames, sde.frames)
    assert all(s.sigma == 0.0 for s in traj.steps)


def test_sde_replay_reproduces_trajectory():
    def v(x, t):
        return np.sin(x)

    _, traj = sample_sde(v, None, 5, SamplerConfig(n_steps=6, mode="sde", sde_noise=0.5, seed=9))
    assert np.array_equal(traj.replay(), traj.final)


def test_log_prob_favors_generating_weights():
    rng = np.random.default_rng(0)
    w_true = rng.standard_normal((201,)) * 0.1

    def v_true(x, t):
        return x * 0.0 + w_true

    def v_other(x, t):
        return x * 0.0 + w_true + 0.3

    wins = 0
    for k in range(32):
        cfg = SamplerConfig(n_steps=5, mode="sde", sde_noise=0.7, seed=100 + k)
        _, traj = sample_sde(v_true, None, 4, cfg)
        if trajectory_log_prob(v_true, None, traj) >= trajectory_log_prob(v_other, None, traj):
            wins += 1
    assert wins >= 24   # generating weights dominate on average


def test_gaussian_log_prob_matches_closed_form():
    x = np.array([1.0, 2.0])
    mean = np.array([0.0, 0.0])
    sigma = 0.5
    manual = -((x - mean) ** 2).sum() / (2 * sigma**2) - 2 * (np.log(sigma) + 0.5 * np.log(2 * np.pi))
    assert abs(gaussian_log_prob(x, mean, sigma) - manual) < 1e-12


def test_sampler_divergence_raises():
    def blow_up(x, t):
        return x * 1e20

    with pytest.raises(NonFinite):
        sample_ode(blow_up, None, 4, SamplerConfig(n_steps=8, seed=0))


def test_frame_bounds():
    with pytest.raises(ConfigInvalid):
        sample_ode(lambda x, t: x, None, 1, SamplerConfig())
    with pytest.raises(ConfigInvalid):
        sample_ode(lambda x, t: x, None, 361, SamplerConfig())


def test_denormalization_and_fk_recompute(skeleton):
    from motionflow.synth import ActionSpec, generate_clip
    clip, _, _ = generate_clip(ActionSpec("squat", seed=0), skeleton)
    norm = Normalizer.fit([clip.frames])
    target = norm.apply(clip.frames).astype(np.float32)
    captured = {}

    def oracle(x, t):
        if "x0" not in captured:
            captured["x0"] = x.copy()
        return target - captured["x0"]

    out = sample_ode(oracle, None, clip.n_frames, SamplerConfig(n_steps=1, seed=2),
                     normalizer=norm, skeleton=skeleton)
    # rotations match the source clip; positions were rebuilt via FK from them
    assert np.abs(out.frames[:, :135] - clip.frames[:, :135]).max() < 2e-5
    assert np.abs(out.frames[:, 135:] - clip.frames[:, 135:]).max() < 2e-4
