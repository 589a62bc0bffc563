"""Advantage estimators, surrogate gradients and the parameter update.

Gradients are ascent directions on the expected outcome reward. Every
per-turn quantity is evaluated on a flattened :class:`TurnBatch` so one
update costs a handful of ``np.bincount`` calls regardless of batch size.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .errors import NumericError, ValidationError
from .policy import CandidateBlock, Policy, candidate_block, featurize
from .rollout import Trajectory, TrajectoryGroup

log = logging.getLogger(__name__)

ALGORITHMS = ("pg", "grpo", "rloo", "reinforce_pp", "ppo")
EPSILON_STD = 1e-8
METRIC_FIELDS = (
    "step",
    "horizon",
    "mean_reward",
    "adv_mean",
    "adv_std",
    "mean_kl",
    "mean_entropy",
    "grad_norm",
    "env_steps",
)


@dataclass(frozen=True)
class UpdateConfig:
    algorithm: str = "grpo"
    learning_rate: float = 1e-3
    kl_coefficient: float = 1e-3
    clip_epsilon: float = 0.2
    ppo_epochs: int = 2
    group_size: int = 8
    epsilon_std: float = EPSILON_STD

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not self.kl_coefficient >= 0:
            raise ValidationError("kl_coefficient must be non-negative")
        if not 0 < self.clip_epsilon < 1:
            raise ValidationError("clip_epsilon must lie in (0, 1)")
        if self.ppo_epochs < 1:
            raise ValidationError("ppo_epochs must be at least 1")
        if self.algorithm in ("grpo", "rloo") and self.group_size < 2:
            raise ValidationError("group-relative estimators need group_size >= 2")
        if self.group_size < 1:
            raise ValidationError("group_size must be positive")
        if not self.epsilon_std > 0:
            raise ValidationError("epsilon_std must be positive")

    @property
    def epochs(self) -> int:
        return self.ppo_epochs if self.algorithm in ("grpo", "reinforce_pp", "ppo") else 1

    @property
    def clipped(self) -> bool:
        return self.algorithm in ("grpo", "reinforce_pp", "ppo")

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# advantages


def _rewards(values, minimum: int, what: str) -> np.ndarray:
    r = np.asarray(values, dtype=np.float64).ravel()
    if r.size < minimum:
        raise ValidationError(f"{what} needs at least {minimum} rewards, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite reward")
    return r


def grpo_advantages(group_rewards, epsilon_std: float = EPSILON_STD) -> np.ndarray:
    r = _rewards(group_rewards, 2, "GRPO group")
    if np.ptp(r) == 0:
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + epsilon_std)


def rloo_advantages(group_rewards) -> np.ndarray:
    r = _rewards(group_rewards, 2, "RLOO group")
    g = r.size
    if np.ptp(r) == 0:
        return np.zeros_like(r)
    return r - (r.sum() - r) / (g - 1)


def reinforcepp_advantages(batch_rewards, epsilon_std: float = EPSILON_STD) -> np.ndarray:
    r = _rewards(batch_rewards, 2, "REINFORCE++ batch")
    if np.ptp(r) == 0:
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + epsilon_std)


# --------------------------------------------------------------------------
# value baseline (PPO critic)


def state_features(history: str, dim: int):
    return featurize(history, "", dim)


@dataclass(frozen=True, eq=False)
class ValueBaseline:
    w: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.w)):
            raise NumericError("value weights are not finite")

    @classmethod
    def zeros(cls, dim: int) -> ValueBaseline:
        return cls(np.zeros(dim))

    def predict(self, history: str) -> float:
        fv = state_features(history, self.w.shape[0])
        return float(self.w[fv.indices] @ fv.counts)


def fit_value_baseline(
    trajectories: Sequence[Trajectory], dim: int, ridge: float = 1e-6, tol: float = 1e-8
) -> ValueBaseline:
    """Ridge least squares of r(trajectory) on state features of every turn.

    Identical states are merged (weights = multiplicity, target = mean),
    then the dual system ``(X X^T + ridge I) a = y`` is solved by conjugate
    gradients and ``w = X^T a``. The dual has one unknown per distinct state
    rather than one per hashed feature.
    """
    if not trajectories:
        raise ValidationError("need at least one trajectory")
    sums: dict[str, list[float]] = {}
    for traj in trajectories:
        for turn in traj.turns:
            entry = sums.setdefault(turn.history, [0.0, 0.0])
            entry[0] += traj.outcome_reward
            entry[1] += 1.0
    if not sums:
        return ValueBaseline.zeros(dim)
    rows, cols, vals, y = [], [], [], []
    for i, (history, (total, count)) in enumerate(sums.items()):
        fv = state_features(history, dim)
        scale = np.sqrt(count)
        rows.append(np.full(len(fv.indices), i))
        cols.append(fv.indices)
        vals.append(fv.counts * scale)
        y.append(total / count * scale)
    X = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(y), dim)
    )
    y = np.asarray(y)
    if not np.any(y):
        return ValueBaseline.zeros(dim)
    gram = (X @ X.T).toarray() + ridge * np.eye(len(y))
    a, info = cg(gram, y, rtol=tol, atol=0.0, maxiter=20 * len(y) + 100)
    if info != 0:
        log.warning("value baseline CG stopped before tolerance (info=%d)", info)
    return ValueBaseline(np.asarray(X.T @ a).ravel())


# --------------------------------------------------------------------------
# flattened turn batches


def _block_for(turn, dim: int) -> CandidateBlock:
    if turn.block is not None and turn.block.dim == dim:
        return turn.block
    return candidate_block(turn.history, turn.candidates, dim)


@dataclass(eq=False)
class TurnBatch:
    """All decision points of a list of trajectories, flattened.

    ``feat_idx[j]`` is a hashed index belonging to candidate ``feat_cand[j]``;
    candidate ``c`` belongs to turn ``cand_turn[c]``; turn ``t`` belongs to
    trajectory ``turn_traj[t]`` and chose candidate ``chosen[t]``.
    """

    dim: int
    feat_idx: np.ndarray
    feat_cand: np.ndarray
    cand_turn: np.ndarray
    turn_start: np.ndarray
    chosen: np.ndarray
    old_log_prob: np.ndarray
    turn_traj: np.ndarray
    n_traj: int
    histories: list[str] = field(repr=False)

    @property
    def n_turns(self) -> int:
        return len(self.chosen)

    @classmethod
    def build(cls, trajectories: Sequence[Trajectory], dim: int) -> TurnBatch:
        feat_idx, feat_cand, cand_turn, turn_start, chosen, old, turn_traj, histories = ([] for _ in range(8))
        n_cand = 0
        for ti, traj in enumerate(trajectories):
            for turn in traj.turns:
                block = _block_for(turn, dim)
                t = len(chosen)
                try:
                    c = block.actions.index(turn.action)
                except ValueError:
                    raise ValidationError(f"stored action {turn.action!r} is not among the candidates") from None
                feat_idx.append(block.indices)
                feat_cand.append(block.segments + n_cand)
                cand_turn.append(np.full(len(block.actions), t))
                turn_start.append(n_cand)
                chosen.append(n_cand + c)
                old.append(turn.log_prob_old)
                turn_traj.append(ti)
                histories.append(turn.history)
                n_cand += len(block.actions)

        def cat(parts, dtype=np.int64):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

        return cls(
            dim,
            cat(feat_idx),
            cat(feat_cand),
            cat(cand_turn),
            np.asarray(turn_start, dtype=np.int64),
            np.asarray(chosen, dtype=np.int64),
            np.asarray(old, dtype=np.float64),
            np.asarray(turn_traj, dtype=np.int64),
            len(trajectories),
            histories,
        )

    def log_probs(self, policy: Policy) -> np.ndarray:
        """Per-candidate log-probabilities under ``policy``."""
        n_cand = len(self.cand_turn)
        z = np.bincount(self.feat_cand, weights=policy.theta[self.feat_idx], minlength=n_cand)
        z = z / policy.temperature
        z = z - np.maximum.reduceat(z, self.turn_start)[self.cand_turn]
        norm = np.bincount(self.cand_turn, weights=np.exp(z), minlength=self.n_turns)
        return z - np.log(norm)[self.cand_turn]


@dataclass
class GradientStats:
    mean_kl: float = 0.0
    mean_entropy: float = 0.0
    clip_fraction: float = 0.0


def _turn_advantages(trajectories: Sequence[Trajectory], advantages, batch: TurnBatch) -> np.ndarray:
    if len(advantages) != len(trajectories):
        raise ValidationError(f"{len(advantages)} advantages for {len(trajectories)} trajectories")
    parts = []
    for traj, adv in zip(trajectories, advantages):
        a = np.asarray(adv, dtype=np.float64)
        if a.ndim == 0:
            parts.append(np.full(len(traj.turns), float(a)))
        elif a.shape == (len(traj.turns),):
            parts.append(a)
        else:
            raise ValidationError("per-turn advantages do not match the trajectory length")
    out = np.concatenate(parts) if parts else np.zeros(0)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite advantage")
    return out


def surrogate_gradient(
    policy: Policy,
    batch: TurnBatch,
    turn_adv: np.ndarray,
    epsilon: float | None = None,
    ref_policy: Policy | None = None,
    beta: float = 0.0,
) -> tuple[np.ndarray, GradientStats]:
    """Ascent direction of the (optionally clipped) surrogate minus the KL penalty.

    The surrogate is averaged over trajectories (summed over turns); the KL
    penalty is averaged over turns. ``epsilon=None`` gives the plain
    advantage-weighted score gradient with no ratio.
    """
    stats = GradientStats()
    grad = np.zeros(batch.dim)
    if batch.n_turns == 0:
        return grad, stats
    logp = batch.log_probs(policy)
    p = np.exp(logp)
    temp = policy.temperature

    if epsilon is None:
        coef = turn_adv.copy()
    else:
        ratio = np.exp(logp[batch.chosen] - batch.old_log_prob)
        clipped = ((turn_adv > 0) & (ratio > 1 + epsilon)) | ((turn_adv < 0) & (ratio < 1 - epsilon))
        coef = np.where(clipped, 0.0, ratio * turn_adv)
        stats.clip_fraction = float(clipped.mean())
    coef = coef / max(batch.n_traj, 1)

    # score: (onehot(chosen) - p) / T per candidate, scaled by its turn coefficient
    cand_w = -p
    cand_w[batch.chosen] += 1.0
    cand_w *= coef[batch.cand_turn] / temp

    plogp = p * logp
    ent = -np.bincount(batch.cand_turn, weights=plogp, minlength=batch.n_turns)
    stats.mean_entropy = float(ent.mean())
    if ref_policy is not None:
        logq = batch.log_probs(ref_policy)
        kl_terms = p * (logp - logq)
        kl = np.bincount(batch.cand_turn, weights=kl_terms, minlength=batch.n_turns)
        stats.mean_kl = float(kl.mean())
        if beta > 0:
            kl_w = p * (logp - logq - kl[batch.cand_turn]) / temp
            cand_w -= beta * kl_w / batch.n_turns

    grad = np.bincount(batch.feat_idx, weights=cand_w[batch.feat_cand], minlength=batch.dim)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return grad, stats


def _flatten(groups_or_trajs) -> list[Trajectory]:
    out: list[Trajectory] = []
    for item in groups_or_trajs:
        if isinstance(item, TrajectoryGroup):
            out.extend(item.trajectories)
        else:
            out.append(item)
    return out


def vanilla_pg_gradient(policy: Policy, groups) -> np.ndarray:
    """Mean over trajectories of r(trajectory) times the summed turn scores."""
    trajs = _flatten(groups)
    if not trajs:
        raise ValidationError("no trajectories")
    batch = TurnBatch.build(trajs, policy.dim)
    rewards = [t.outcome_reward for t in trajs]
    grad, _ = surrogate_gradient(policy, batch, _turn_advantages(trajs, rewards, batch))
    return grad


def advantage_weighted_gradient(policy: Policy, trajectories, advantages) -> np.ndarray:
    trajs = _flatten(trajectories)
    batch = TurnBatch.build(trajs, policy.dim)
    grad, _ = surrogate_gradient(policy, batch, _turn_advantages(trajs, advantages, batch))
    return grad


def clipped_surrogate_gradient(
    policy: Policy,
    trajectories,
    advantages,
    epsilon: float,
    ref_policy: Policy | None = None,
    beta: float = 0.0,
    batch: TurnBatch | None = None,
) -> np.ndarray:
    """PPO-clip ascent direction; ``advantages`` are per trajectory or per turn."""
    trajs = _flatten(trajectories)
    if batch is None:
        batch = TurnBatch.build(trajs, policy.dim)
    turn_adv = _turn_advantages(trajs, advantages, batch)
    grad, _ = surrogate_gradient(policy, batch, turn_adv, epsilon, ref_policy, beta)
    return grad


def apply_update(policy: Policy, gradient, alpha: float) -> Policy:
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != policy.theta.shape:
        raise ValidationError(f"gradient has shape {g.shape}, expected {policy.theta.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericError("gradient has non-finite entries; update refused")
    return Policy(policy.theta + alpha * g, policy.temperature)


# --------------------------------------------------------------------------
# one full update


def compute_advantages(
    groups: Sequence[TrajectoryGroup], config: UpdateConfig, baseline: ValueBaseline | None = None
) -> list:
    """Advantages aligned with the flattened trajectories of ``groups``."""
    algo = config.algorithm
    if algo == "pg":
        return [t.outcome_reward for g in groups for t in g.trajectories]
    if algo == "grpo":
        return [a for g in groups for a in grpo_advantages(g.rewards, config.epsilon_std)]
    if algo == "rloo":
        return [a for g in groups for a in rloo_advantages(g.rewards)]
    if algo == "reinforce_pp":
        rewards = np.concatenate([g.rewards for g in groups])
        return list(reinforcepp_advantages(rewards, config.epsilon_std))
    # ppo: per-turn r - V(s), value predictions clipped to the reward range
    out = []
    for g in groups:
        for t in g.trajectories:
            if baseline is None:
                values = np.zeros(len(t.turns))
            else:
                values = np.clip([baseline.predict(turn.history) for turn in t.turns], 0.0, 1.0)
            out.append(t.outcome_reward - np.asarray(values, dtype=np.float64))
    return out


@dataclass
class UpdateResult:
    policy: Policy
    baseline: ValueBaseline | None
    metrics: dict


def policy_update(
    policy: Policy,
    groups: Sequence[TrajectoryGroup],
    config: UpdateConfig,
    ref_policy: Policy | None = None,
    baseline: ValueBaseline | None = None,
) -> UpdateResult:
    """Advantages, ``config.epochs`` gradient steps, and the metrics row.

    ``policy`` must be the snapshot that collected ``groups`` so the first
    epoch has ratio 1. For PPO the critic used here was fitted on earlier
    data; the returned baseline is refitted on this batch for the next call.
    """
    trajs = _flatten(groups)
    if not trajs:
        raise ValidationError("no trajectories")
    advantages = compute_advantages(groups, config, baseline)
    batch = TurnBatch.build(trajs, policy.dim)
    turn_adv = _turn_advantages(trajs, advantages, batch)
    eps = config.clip_epsilon if config.clipped else None
    beta = config.kl_coefficient if config.clipped else 0.0
    ref = ref_policy if ref_policy is not None else policy

    current = policy
    first_stats, first_norm = None, 0.0
    for _ in range(config.epochs):
        grad, stats = surrogate_gradient(current, batch, turn_adv, eps, ref, beta)
        if first_stats is None:
            first_stats, first_norm = stats, float(np.linalg.norm(grad))
        current = apply_update(current, grad, config.learning_rate)

    new_baseline = baseline
    if config.algorithm == "ppo":
        new_baseline = fit_value_baseline(trajs, policy.dim)

    flat_adv = np.concatenate([np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in advantages])
    metrics = {
        "mean_reward": float(np.mean([t.outcome_reward for t in trajs])),
        "adv_mean": float(flat_adv.mean()) if flat_adv.size else 0.0,
        "adv_std": float(flat_adv.std()) if flat_adv.size else 0.0,
        "mean_kl": first_stats.mean_kl,
        "mean_entropy": first_stats.mean_entropy,
        "grad_norm": first_norm,
        "env_steps": batch.n_turns,
    }
    return UpdateResult(current, new_baseline, metrics)
