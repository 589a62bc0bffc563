from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horizonrl.algorithms import (
    TurnBatch,
    UpdateConfig,
    ValueBaseline,
    advantage_weighted_gradient,
    apply_update,
    clipped_surrogate_gradient,
    compute_advantages,
    fit_value_baseline,
    grpo_advantages,
    policy_update,
    reinforcepp_advantages,
    rloo_advantages,
    surrogate_gradient,
    vanilla_pg_gradient,
)
from horizonrl.envs import generate_task
from horizonrl.errors import NumericError, ValidationError
from horizonrl.policy import Policy, action_distribution, grad_log_prob
from horizonrl.protocol import EnvServer, LocalClient
from horizonrl.rollout import Trajectory, TrajectoryGroup, Turn, collect_batch

DIM = 64
rewards_st = st.lists(st.sampled_from([0.0, 1.0]) | st.floats(0, 1), min_size=2, max_size=16)


def make_turn(policy: Policy, history: str, candidates, action: str, old=None) -> Turn:
    d = action_distribution(policy, history, list(candidates))
    lp = d.log_probs[d.index(action)] if old is None else old
    return Turn(history, action, float(lp), len(candidates), history, tuple(candidates))


def make_traj(turns, reward: float) -> Trajectory:
    task = generate_task("bandit", 1, 0)
    return Trajectory(task, 0, list(turns), reward, False, len(turns))


def random_batch(seed: int, n_tasks: int = 3, G: int = 4, dim: int = DIM, theta_scale: float = 0.5):
    rng = np.random.default_rng(seed)
    policy = Policy(rng.normal(size=dim) * theta_scale)
    tasks = [generate_task("craft", int(rng.integers(1, 3)), int(rng.integers(1 << 30))) for _ in range(n_tasks)]
    groups = collect_batch(LocalClient(EnvServer()), policy, tasks, G, 6, seed)
    return policy, groups


def flat(groups):
    return [t for g in groups for t in g.trajectories]


# ---------------------------------------------------------------- estimators


def test_grpo_examples():
    np.testing.assert_allclose(grpo_advantages([1, 0, 0, 1]), [1, -1, -1, 1], atol=1e-7)
    assert grpo_advantages([1, 1, 1, 1]).tolist() == [0, 0, 0, 0]


def test_rloo_examples():
    np.testing.assert_allclose(rloo_advantages([1, 0, 0, 0]), [1, -1 / 3, -1 / 3, -1 / 3], atol=1e-15)
    assert rloo_advantages([0.3, 0.3, 0.3]).tolist() == [0, 0, 0]


def test_reinforcepp_examples():
    np.testing.assert_allclose(reinforcepp_advantages([1, 1, 0, 0]), [1, 1, -1, -1], atol=1e-7)
    assert reinforcepp_advantages([0, 0, 0, 0]).tolist() == [0, 0, 0, 0]


@pytest.mark.parametrize("fn", [grpo_advantages, rloo_advantages, reinforcepp_advantages])
def test_estimators_reject_small_groups(fn):
    with pytest.raises(ValidationError) as exc:
        fn([1.0])
    assert exc.value.code == "VALIDATION"


def test_estimator_rejects_nan():
    with pytest.raises(NumericError):
        grpo_advantages([0.0, float("nan")])


@settings(max_examples=300)
@given(rewards_st)
def test_grpo_properties(r):
    a = grpo_advantages(r)
    assert abs(a.mean()) <= 1e-12
    s = np.std(r)
    if np.ptp(r) > 0:
        assert abs(a.std() - s / (s + 1e-8)) <= 1e-9


@settings(max_examples=300)
@given(rewards_st)
def test_rloo_properties(r):
    a = rloo_advantages(r)
    g = len(r)
    assert abs(a.sum()) <= 1e-12
    np.testing.assert_allclose(a, g / (g - 1) * (np.asarray(r) - np.mean(r)), atol=1e-12)


@settings(max_examples=300)
@given(rewards_st)
def test_reinforcepp_single_group_equals_grpo(r):
    assert np.array_equal(reinforcepp_advantages(r), grpo_advantages(r))


def test_compute_advantages_scopes():
    groups = [
        TrajectoryGroup(None, [make_traj([], 1.0), make_traj([], 1.0)], 0),
        TrajectoryGroup(None, [make_traj([], 0.0), make_traj([], 0.0)], 1),
    ]
    # per-group normalisation sees zero variance; batch normalisation does not
    assert compute_advantages(groups, UpdateConfig("grpo")) == [0.0] * 4
    np.testing.assert_allclose(compute_advantages(groups, UpdateConfig("reinforce_pp")), [1, 1, -1, -1], atol=1e-7)
    assert compute_advantages(groups, UpdateConfig("pg")) == [1.0, 1.0, 0.0, 0.0]


# ---------------------------------------------------------------- vanilla gradient


def test_vanilla_zero_rewards():
    policy, groups = random_batch(0)
    trajs = [make_traj(t.turns, 0.0) for t in flat(groups)]
    assert np.all(vanilla_pg_gradient(policy, trajs) == 0.0)


def test_vanilla_single_turn_equals_score():
    policy = Policy(np.random.default_rng(1).normal(size=DIM))
    cands = ("get a", "get b", "craft c")
    traj = make_traj([make_turn(policy, "have a .", cands, "get b")], 1.0)
    expected = grad_log_prob(policy, "have a .", list(cands), "get b").to_dense()
    np.testing.assert_allclose(vanilla_pg_gradient(policy, [traj]), expected, atol=1e-14)


def test_vanilla_empty():
    with pytest.raises(ValidationError):
        vanilla_pg_gradient(Policy.zeros(DIM), [])


def _weighted_logp(policy: Policy, trajs) -> float:
    total = 0.0
    for t in trajs:
        for turn in t.turns:
            d = action_distribution(policy, turn.history, list(turn.candidates))
            total += t.outcome_reward * d.log_probs[d.index(turn.action)]
    return total / len(trajs)


def test_vanilla_matches_manual_sum_and_ascends():
    policy, groups = random_batch(2)
    trajs = flat(groups)
    manual = np.zeros(DIM)
    for t in trajs:
        for turn in t.turns:
            manual += t.outcome_reward * grad_log_prob(policy, turn.history, list(turn.candidates), turn.action).to_dense()
    manual /= len(trajs)
    g = vanilla_pg_gradient(policy, groups)
    np.testing.assert_allclose(g, manual, atol=1e-12)
    if np.linalg.norm(g) > 0:
        assert _weighted_logp(apply_update(policy, g, 1e-3), trajs) > _weighted_logp(policy, trajs)


# ---------------------------------------------------------------- value baseline


def test_value_zero_targets():
    _, groups = random_batch(3)
    trajs = [make_traj(t.turns, 0.0) for t in flat(groups)]
    assert np.all(fit_value_baseline(trajs, DIM).w == 0.0)


def test_value_repeated_state_mean():
    p = Policy.zeros(DIM)
    turn = make_turn(p, "start state", ("x", "y"), "x")
    trajs = [make_traj([turn], 0.0), make_traj([turn], 1.0)]
    assert abs(fit_value_baseline(trajs, 1 << 16).predict("start state") - 0.5) < 1e-6


def test_value_reduces_advantage_variance():
    rng = np.random.default_rng(4)
    p = Policy.zeros(DIM)
    trajs = []
    for i in range(200):
        kind = i % 4
        history = f"room {kind} door {kind % 2}"
        reward = float(rng.random() < 0.2 + 0.2 * kind)
        trajs.append(make_traj([make_turn(p, history, ("a", "b"), "a")], reward))
    vb = fit_value_baseline(trajs, 1 << 16)
    r = np.array([t.outcome_reward for t in trajs])
    v = np.array([vb.predict(t.turns[0].history) for t in trajs])
    assert np.var(r - v) < np.var(r)


def test_value_rejects_nonfinite():
    with pytest.raises(NumericError):
        ValueBaseline(np.array([np.inf]))


# ---------------------------------------------------------------- clipped surrogate


def _objective(policy, trajs, advantages, epsilon, ref, beta) -> float:
    """Direct evaluation of the clipped surrogate minus the mean KL."""
    surrogate, kls = 0.0, []
    for t, a in zip(trajs, advantages):
        for turn in t.turns:
            cands = list(turn.candidates)
            d = action_distribution(policy, turn.history, cands)
            q = action_distribution(ref, turn.history, cands)
            rho = np.exp(d.log_probs[d.index(turn.action)] - turn.log_prob_old)
            surrogate += min(rho * a, np.clip(rho, 1 - epsilon, 1 + epsilon) * a)
            kls.append(float(np.sum(d.probs * (d.log_probs - q.log_probs))))
    return surrogate / len(trajs) - beta * float(np.mean(kls))


def test_rho_one_equals_advantage_weighted():
    policy, groups = random_batch(5)
    trajs = flat(groups)
    adv = compute_advantages(groups, UpdateConfig("grpo"))
    g_clip = clipped_surrogate_gradient(policy, trajs, adv, 0.2)
    g_plain = advantage_weighted_gradient(policy, trajs, adv)
    np.testing.assert_allclose(g_clip, g_plain, atol=1e-12)


def test_huge_epsilon_limit():
    policy, groups = random_batch(6)
    trajs = flat(groups)
    adv = compute_advantages(groups, UpdateConfig("grpo"))
    batch = TurnBatch.build(trajs, DIM)
    turn_adv = np.concatenate([np.full(len(t.turns), a) for t, a in zip(trajs, adv)])
    g_big, _ = surrogate_gradient(policy, batch, turn_adv, epsilon=1e12)
    assert np.max(np.abs(g_big - advantage_weighted_gradient(policy, trajs, adv))) < 1e-10


def test_clip_boundary_zero_contribution():
    policy = Policy(np.random.default_rng(7).normal(size=DIM))
    cands = ("get a", "get b")
    d = action_distribution(policy, "h", list(cands))
    lp = d.log_probs[d.index("get a")]
    over = make_traj([make_turn(policy, "h", cands, "get a", old=lp - 1.0)], 1.0)  # rho = e > 1.2
    g = clipped_surrogate_gradient(policy, [over], [1.0], 0.2)
    assert np.all(g == 0.0)
    # a negative advantage at the same ratio is not clipped
    g_neg = clipped_surrogate_gradient(policy, [over], [-1.0], 0.2)
    assert np.linalg.norm(g_neg) > 0


def test_clipped_gradient_matches_finite_differences():
    policy, groups = random_batch(8, n_tasks=2, G=3)
    trajs = flat(groups)
    adv = compute_advantages(groups, UpdateConfig("grpo"))
    ref = Policy(policy.theta + np.random.default_rng(9).normal(size=DIM) * 0.3)
    # move away from the snapshot but stay inside the clip band
    current = Policy(policy.theta + np.random.default_rng(10).normal(size=DIM) * 0.02)
    eps, beta = 0.2, 0.5
    g = clipped_surrogate_gradient(current, trajs, adv, eps, ref, beta)
    h = 1e-6
    fd = np.zeros(DIM)
    for k in range(DIM):
        e = np.zeros(DIM)
        e[k] = h
        fd[k] = (
            _objective(Policy(current.theta + e), trajs, adv, eps, ref, beta)
            - _objective(Policy(current.theta - e), trajs, adv, eps, ref, beta)
        ) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6


def test_misaligned_advantages():
    policy, groups = random_batch(11)
    with pytest.raises(ValidationError):
        clipped_surrogate_gradient(policy, flat(groups), [1.0], 0.2)


def test_kl_regularisation_keeps_policy_close():
    policy, groups = random_batch(12, n_tasks=4, G=4)
    trajs = flat(groups)
    adv = np.random.default_rng(12).normal(size=len(trajs))
    batch = TurnBatch.build(trajs, DIM)
    turn_adv = np.concatenate([np.full(len(t.turns), a) for t, a in zip(trajs, adv)])
    runs = {}
    for beta in (0.0, 10.0):
        p, kls = policy, []
        for _ in range(15):
            grad, stats = surrogate_gradient(p, batch, turn_adv, 0.2, policy, beta)
            kls.append(stats.mean_kl)
            p = apply_update(p, grad, 0.05)
        runs[beta] = kls
    assert all(k10 <= k0 + 1e-12 for k0, k10 in zip(runs[0.0], runs[10.0]))
    assert runs[0.0][-1] > runs[10.0][-1]


# ---------------------------------------------------------------- apply_update


def test_apply_update_identities():
    p = Policy(np.arange(4.0))
    assert np.array_equal(apply_update(p, np.zeros(4), 0.5).theta, p.theta)
    assert np.array_equal(apply_update(p, np.ones(4), 0.0).theta, p.theta)
    np.testing.assert_array_equal(apply_update(p, np.ones(4), 0.5).theta, p.theta + 0.5)


def test_apply_update_refuses_nonfinite():
    p = Policy(np.zeros(3))
    with pytest.raises(NumericError) as exc:
        apply_update(p, np.array([0.0, np.nan, 0.0]), 0.1)
    assert exc.value.code == "NUMERIC"
    with pytest.raises(ValidationError):
        apply_update(p, np.zeros(4), 0.1)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 1.0))
def test_apply_update_linearity(seed, alpha):
    rng = np.random.default_rng(seed)
    p = Policy(rng.normal(size=8))
    g1, g2 = rng.normal(size=8), rng.normal(size=8)
    two = apply_update(apply_update(p, g1, alpha), g2, alpha).theta
    one = apply_update(p, g1 + g2, alpha).theta
    np.testing.assert_allclose(two, one, atol=1e-12)


# ---------------------------------------------------------------- config and full update


@pytest.mark.parametrize(
    "kwargs",
    [
        {"algorithm": "dpo"},
        {"learning_rate": 0.0},
        {"kl_coefficient": -1.0},
        {"clip_epsilon": 1.0},
        {"clip_epsilon": 0.0},
        {"ppo_epochs": 0},
        {"algorithm": "grpo", "group_size": 1},
        {"algorithm": "rloo", "group_size": 1},
    ],
)
def test_update_config_validation(kwargs):
    with pytest.raises(ValidationError):
        UpdateConfig(**kwargs)


def test_epoch_routing():
    assert UpdateConfig("grpo", ppo_epochs=3).epochs == 3
    assert UpdateConfig("pg", ppo_epochs=3).epochs == 1
    assert UpdateConfig("rloo", ppo_epochs=3).epochs == 1
    assert not UpdateConfig("pg").clipped and UpdateConfig("ppo").clipped


@pytest.mark.parametrize("algo", ["pg", "grpo", "rloo", "reinforce_pp", "ppo"])
def test_policy_update_runs(algo):
    policy, groups = random_batch(13, G=4)
    cfg = UpdateConfig(algo, learning_rate=0.1, group_size=4)
    res = policy_update(policy, groups, cfg, policy, ValueBaseline.zeros(DIM) if algo == "ppo" else None)
    assert res.policy.theta.shape == (DIM,)
    assert set(res.metrics) == {"mean_reward", "adv_mean", "adv_std", "mean_kl", "mean_entropy", "grad_norm", "env_steps"}
    assert res.metrics["mean_kl"] == 0.0  # first epoch evaluates at the reference
    assert res.metrics["env_steps"] == sum(len(t) for t in flat(groups))
    assert (res.baseline is not None) == (algo == "ppo")


def test_single_epoch_update_is_one_gradient_step():
    policy, groups = random_batch(14, G=4)
    cfg = UpdateConfig("rloo", learning_rate=0.1, group_size=4)
    adv = compute_advantages(groups, cfg)
    expected = apply_update(policy, advantage_weighted_gradient(policy, flat(groups), adv), 0.1)
    assert np.array_equal(policy_update(policy, groups, cfg).policy.theta, expected.theta)
