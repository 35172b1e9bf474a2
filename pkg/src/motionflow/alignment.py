"""Preference alignment: DPO over winner/loser pairs, then group-relative
policy optimization with a composite physical + semantic reward.

The DPO objective scores each clip by the negative flow-matching loss at a
shared (t, x0) draw, standing in for the intractable exact likelihood; with
policy == reference the loss is exactly ln 2 and its gradient vanishes. The
GRPO step rolls stochastic trajectories from the reference sampler, turns
composite rewards into group-standardized advantages, and ascends the
clipped per-transition likelihood-ratio surrogate minus a closed-form
Gaussian KL to the reference.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .clip import MotionClip
from .curation import foot_slide_score
from .engine import AdamW, Tensor, clip as clip_op, exp, logsigmoid, mean as mean_op, minimum, mul, neg, no_grad, sub, sum_, tensor
from .errors import ConfigInvalid, DegenerateGroup, UnknownAction
from .flow import Normalizer, fm_loss_at
from .model import MotionDiT, Tokenizer
from .sampling import SamplerConfig, sample_sde
from .skeleton import Skeleton
from .synth import TAXONOMY, normalize_prompt, predict_duration

log = logging.getLogger(__name__)


@dataclass
class PreferencePair:
    prompt: str
    winner: MotionClip
    loser: MotionClip


@dataclass(frozen=True)
class RewardConfig:
    w_phy: float = 1.0
    w_sem: float = 1.0
    w_slide: float = 1.0
    w_drift: float = 1.0


@dataclass
class RewardBreakdown:
    r_phy: float
    r_sem: float
    composite: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GRPOConfig:
    group_size: int = 8
    clip_eps: float = 0.2
    kl_beta: float = 0.01
    advantage_eps: float = 1e-6
    rollout_steps: int = 10
    sde_noise: float = 0.7
    lr: float = 1e-5

    def __post_init__(self):
        if self.group_size < 2:
            raise ConfigInvalid("group_size must be >= 2")
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigInvalid("clip_eps must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ConfigInvalid("kl_beta must be >= 0")
        if self.rollout_steps < 1:
            raise ConfigInvalid("rollout_steps must be >= 1")
        if self.sde_noise <= 0:
            raise ConfigInvalid("rollouts need sde_noise > 0 for a defined ratio")


DPO_BETA_DEFAULT = 500.0


def dpo_loss(policy: MotionDiT, reference: MotionDiT, pair_prompt_tokens: np.ndarray,
             winner_norm: np.ndarray, loser_norm: np.ndarray,
             rng: np.random.Generator, beta: float = DPO_BETA_DEFAULT) -> Tensor:
    """Preference loss -log sigmoid(beta * margin) with a shared (t, x0) draw.

    Each log-likelihood term is the negative velocity-matching loss at the
    same t for all four evaluations and the same x0 per clip; lower policy
    loss on the winner decreases the result.
    """
    t = float(rng.uniform())
    x0_w = rng.standard_normal(winner_norm.shape)
    x0_l = rng.standard_normal(loser_norm.shape)
    l_pol_w = fm_loss_at(policy, winner_norm, pair_prompt_tokens, t, x0_w)
    l_ref_w = fm_loss_at(reference, winner_norm, pair_prompt_tokens, t, x0_w)
    l_pol_l = fm_loss_at(policy, loser_norm, pair_prompt_tokens, t, x0_l)
    l_ref_l = fm_loss_at(reference, loser_norm, pair_prompt_tokens, t, x0_l)
    margin = sub(sub(l_ref_w, l_pol_w), sub(l_ref_l, l_pol_l))
    return neg(logsigmoid(mul(margin, beta)))


def implicit_margin(policy: MotionDiT, reference: MotionDiT, tokens: np.ndarray,
                    winner_norm: np.ndarray, loser_norm: np.ndarray,
                    seed: int, beta: float = DPO_BETA_DEFAULT, n_draws: int = 4) -> float:
    """beta-scaled margin averaged over a fixed set of (t, x0) draws."""
    rng = np.random.default_rng(seed)
    total = 0.0
    with no_grad():
        for _ in range(n_draws):
            t = float(rng.uniform())
            x0_w = rng.standard_normal(winner_norm.shape)
            x0_l = rng.standard_normal(loser_norm.shape)
            lw_p = fm_loss_at(policy, winner_norm, tokens, t, x0_w).item()
            lw_r = fm_loss_at(reference, winner_norm, tokens, t, x0_w).item()
            ll_p = fm_loss_at(policy, loser_norm, tokens, t, x0_l).item()
            ll_r = fm_loss_at(reference, loser_norm, tokens, t, x0_l).item()
            total += beta * ((lw_r - lw_p) - (ll_r - ll_p))
    return total / n_draws


def train_dpo(policy: MotionDiT, reference: MotionDiT, pairs: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
              steps: int, batch_size: int = 4, lr: float = 1e-4, seed: int = 0,
              beta: float = DPO_BETA_DEFAULT, log_every: int = 10) -> list[tuple[int, float]]:
    """Optimize dpo_loss over (tokens, winner_norm, loser_norm) triples."""
    if not pairs:
        raise ConfigInvalid("no preference pairs")
    rng = np.random.default_rng(seed)
    opt = AdamW(policy.parameters(), lr=lr)
    order: list[int] = []
    curve: list[tuple[int, float]] = []
    running: list[float] = []
    for step in range(1, steps + 1):
        opt.zero_grad()
        total = 0.0
        for _ in range(batch_size):
            if not order:
                order = list(rng.permutation(len(pairs)))
            tokens, w, l = pairs[order.pop()]
            loss = dpo_loss(policy, reference, tokens, w, l, rng, beta=beta)
            total += loss.item()
            (loss * (1.0 / batch_size)).backward()
        opt.step()
        running.append(total / batch_size)
        if step % log_every == 0 or step == steps:
            curve.append((step, float(np.mean(running))))
            running = []
    return curve


# ---------------------------------------------------------------------------
# rewards
# ---------------------------------------------------------------------------

def prompt_class(prompt: str) -> str:
    norm = normalize_prompt(prompt)
    if norm.class_id is None:
        raise UnknownAction(f"prompt {prompt!r} does not resolve to a known action")
    return norm.class_id


def physical_reward(c: MotionClip, in_place: bool = False,
                    cfg: RewardConfig = RewardConfig()) -> float:
    """Non-positive penalty for foot slide and, on in-place prompts, root drift."""
    slide = foot_slide_score(c)
    drift = 0.0
    if in_place:
        drift = float(np.linalg.norm(c.frames[-1, [0, 2]] - c.frames[0, [0, 2]]))
    return -(cfg.w_slide * slide + cfg.w_drift * drift)


def semantic_reward(c: MotionClip, prompt: str, oracle) -> float:
    """Probability mass the oracle assigns to the prompt's ground-truth class."""
    cls = prompt_class(prompt)
    if cls not in oracle.classes:
        raise UnknownAction(f"class {cls!r} unknown to the scorer")
    return float(oracle.prob_of(c, cls))


def composite_reward(c: MotionClip, prompt: str, oracle,
                     cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    cls = prompt_class(prompt)
    r_phy = physical_reward(c, in_place=TAXONOMY[cls].in_place, cfg=cfg)
    r_sem = semantic_reward(c, prompt, oracle)
    return RewardBreakdown(r_phy=r_phy, r_sem=r_sem,
                           composite=cfg.w_phy * r_phy + cfg.w_sem * r_sem)


def grpo_advantages(rewards: np.ndarray, advantage_eps: float) -> np.ndarray:
    """Group-standardized advantages (population std with an epsilon floor)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size < 2:
        raise ConfigInvalid("need at least two rewards per group")
    return (rewards - rewards.mean()) / (rewards.std() + advantage_eps)


# ---------------------------------------------------------------------------
# the GRPO step
# ---------------------------------------------------------------------------

def _transition_mean(model: MotionDiT, tokens: np.ndarray, state: np.ndarray,
                     t: float, dt: float) -> Tensor:
    from .model import Conditioning
    v = model.forward(tensor(state), Conditioning(text_tokens=tokens, timestep=t))
    return tensor(state) + mul(v, dt)


def grpo_step(policy: MotionDiT, reference: MotionDiT, prompts: list[str],
              cfg: GRPOConfig, oracle, normalizer: Normalizer, tokenizer: Tokenizer,
              skeleton: Skeleton, optimizer: AdamW, rng: np.random.Generator,
              reward_cfg: RewardConfig = RewardConfig()) -> dict:
    """One GRPO update: reference rollouts, composite rewards, clipped surrogate.

    Returns step statistics. If every group has identical rewards the step is
    logged and skipped when kl_beta == 0 (no gradient signal at all).
    """
    group_rollouts = []
    all_rewards = []
    degenerate_groups = 0
    for prompt in prompts:
        tokens = tokenizer.encode(prompt)
        seconds, _ = predict_duration(prompt)
        n_frames = int(np.clip(round(seconds * 30.0), 16, 360))
        rollouts = []
        rewards = []
        for _ in range(cfg.group_size):
            seed = int(rng.integers(2**31 - 1))
            sampler = SamplerConfig(n_steps=cfg.rollout_steps, mode="sde",
                                    sde_noise=cfg.sde_noise, seed=seed)
            clip, traj = sample_sde(reference, tokens, n_frames, sampler,
                                    normalizer=normalizer, skeleton=skeleton)
            r = composite_reward(clip, prompt, oracle, reward_cfg)
            rollouts.append((tokens, traj))
            rewards.append(r)
        comp = np.array([r.composite for r in rewards])
        if np.allclose(comp, comp[0]):
            degenerate_groups += 1
        adv = grpo_advantages(comp, cfg.advantage_eps)
        group_rollouts.append((rollouts, adv))
        all_rewards.extend(rewards)

    if degenerate_groups == len(prompts) and cfg.kl_beta == 0:
        log.warning("all %d groups degenerate (identical rewards); step skipped", len(prompts))
        return {"skipped": True, "mean_reward": float(np.mean([r.composite for r in all_rewards])),
                "mean_r_phy": float(np.mean([r.r_phy for r in all_rewards])),
                "mean_r_sem": float(np.mean([r.r_sem for r in all_rewards])),
                "kl": 0.0, "clip_fraction": 0.0}

    terms = []
    kl_vals = []
    clipped = 0
    total_transitions = 0
    dt = 1.0 / cfg.rollout_steps
    for rollouts, adv in group_rollouts:
        for (tokens, traj), a_i in zip(rollouts, adv):
            for step_rec in traj.steps:
                sigma2 = step_rec.sigma ** 2
                mu_pol = _transition_mean(policy, tokens, step_rec.state, step_rec.t, dt)
                mu_ref = _transition_mean(reference, tokens, step_rec.state, step_rec.t, dt)
                x_next = tensor(step_rec.drawn)
                d_pol = sub(x_next, mu_pol)
                d_ref = sub(x_next, mu_ref)
                log_ratio = mul(sub(sum_(mul(d_ref, d_ref)), sum_(mul(d_pol, d_pol))),
                                1.0 / (2.0 * sigma2))
                ratio = exp(log_ratio)
                surr = minimum(mul(ratio, float(a_i)),
                               mul(clip_op(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), float(a_i)))
                d_mu = sub(mu_pol, mu_ref)
                kl = mul(sum_(mul(d_mu, d_mu)), 1.0 / (2.0 * sigma2))
                terms.append(sub(surr, mul(kl, cfg.kl_beta)))
                kl_vals.append(kl.item())
                r_val = ratio.item()
                if r_val < 1.0 - cfg.clip_eps or r_val > 1.0 + cfg.clip_eps:
                    clipped += 1
                total_transitions += 1

    objective = mean_op(_stack_scalars(terms))
    loss = neg(objective)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()

    return {
        "skipped": False,
        "objective": float(objective.item()),
        "mean_reward": float(np.mean([r.composite for r in all_rewards])),
        "mean_r_phy": float(np.mean([r.r_phy for r in all_rewards])),
        "mean_r_sem": float(np.mean([r.r_sem for r in all_rewards])),
        "kl": float(np.mean(kl_vals)),
        "clip_fraction": clipped / max(total_transitions, 1),
        "degenerate_groups": degenerate_groups,
    }


def _stack_scalars(terms: list[Tensor]) -> Tensor:
    from .engine import concat, reshape
    return concat([reshape(t, (1,)) for t in terms], axis=0)


def grpo_objective_and_grad(policy: MotionDiT, reference: MotionDiT, prompts: list[str],
                            cfg: GRPOConfig, oracle, normalizer: Normalizer,
                            tokenizer: Tokenizer, skeleton: Skeleton,
                            rng: np.random.Generator) -> tuple[float, float]:
    """Objective value and policy gradient norm without applying the update."""
    opt = AdamW(policy.parameters(), lr=0.0)
    stats = grpo_step(policy, reference, prompts, cfg, oracle, normalizer,
                      tokenizer, skeleton, opt, rng)
    gnorm = 0.0
    for p in policy.parameters().values():
        if p.grad is not None:
            gnorm += float((p.grad.astype(np.float64) ** 2).sum())
    return stats.get("objective", 0.0), float(np.sqrt(gnorm))
