from __future__ import annotations

import json

import numpy as np
import pytest

from horizonrl.cli import main
from horizonrl.envs import generate_task, get_family, optimal_length
from horizonrl.errors import CollectionFailed, NotFoundError, ProtocolError, ValidationError
from horizonrl.evaluation import evaluate, export_transcript, pass_at_k, turn_scaling_eval
from horizonrl.policy import Policy, distribution, load_checkpoint
from horizonrl.protocol import EnvServer, LocalClient
from horizonrl.rollout import ClientPool, collect_trajectory, read_trajectories
from horizonrl.rng import mix
from horizonrl.trainer import EVAL_SPLIT, RunConfig, batch_for_step, task_suite, train


class OracleActor:
    """Replays each task's shortest plan, recognising the task by its first observation."""

    def __init__(self, tasks):
        self.plans = {}
        for t in tasks:
            fam = get_family(t.env_kind)
            self.plans[fam.initial_observation(fam.initial_state(t))] = fam.solve(t)
        self.plan, self.k = [], 0

    def distribution(self, history, actions):
        if history in self.plans:
            self.plan, self.k = self.plans[history], 0
        target = self.plan[self.k]
        self.k += 1
        return distribution(actions, [1.0 if a == target else 0.0 for a in actions])


class FailingClient(LocalClient):
    def step(self, session_id, action):
        raise ProtocolError("injected", "NOT_FOUND")


def small_config(tmp_path, name="run", **kw) -> RunConfig:
    base = dict(
        difficulties=[1, 2],
        train_tasks=10,
        eval_tasks=6,
        total_updates=6,
        batch_tasks=2,
        eval_every=3,
        output_dir=str(tmp_path / name),
    )
    base.update(kw)
    return RunConfig(**base)


# ---------------------------------------------------------------- config


def test_config_roundtrip_and_validation(tmp_path):
    cfg = small_config(tmp_path)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValidationError):
        RunConfig.from_dict({"bogus": 1})
    for bad in (
        dict(difficulties=[9]),
        dict(schedule={"phases": [5, 25]}),
        dict(schedule={"phases": [10, 5]}),
        dict(eval_every=0),
        dict(eval_on="test"),
    ):
        with pytest.raises(ValidationError):
            train(small_config(tmp_path, **bad))
    assert not (tmp_path / "run").exists()  # validated before any side effect


def test_task_suite_and_batches():
    suite = task_suite("craft", [1, 2, 3], 30, 7)
    assert [t.difficulty for t in suite[:6]] == [1, 2, 3, 1, 2, 3]
    assert suite == task_suite("craft", [1, 2, 3], 30, 7)
    assert set(suite).isdisjoint(task_suite("craft", [1, 2, 3], 30, 7, EVAL_SPLIT))
    batch = batch_for_step(suite, [1, 2, 3], 6, 0, 4)
    assert [t.difficulty for t in batch] == [1, 2, 3, 1, 2, 3]
    assert all(t in suite for t in batch)


# ---------------------------------------------------------------- training


def test_train_writes_artifacts(tmp_path):
    result = train(small_config(tmp_path))
    out = tmp_path / "run"
    assert json.loads((out / "config.json").read_text())["total_updates"] == 6
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "step,horizon,mean_reward,adv_mean,adv_std,mean_kl,mean_entropy,grad_norm,env_steps"
    assert len(lines) == 7
    assert {p.name for p in (out / "checkpoints").iterdir()} == {"step_0.bin", "step_3.bin", "step_6.bin"}
    report = json.loads((out / "report.json").read_text())
    assert report["updates_run"] == 6 and "heldout" in report
    assert report["total_env_steps"] == result.total_env_steps
    records = read_trajectories(out / "trajectories.jsonl")
    assert {r["step"] for r in records} == {0, 3}
    assert np.array_equal(load_checkpoint(out / "checkpoints" / "step_6.bin").theta, result.policy.theta)


def test_train_deterministic(tmp_path):
    a = train(small_config(tmp_path, "a"))
    b = train(small_config(tmp_path, "b", worker_count=4))
    for name in ("metrics.csv", "trajectories.jsonl", "checkpoints/step_6.bin", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert np.array_equal(a.policy.theta, b.policy.theta)
    c = train(small_config(tmp_path, "c", run_seed=1))
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "c" / "metrics.csv").read_bytes()
    assert c.updates_run == 6


def test_horizon_compliance(tmp_path):
    cfg = small_config(tmp_path, schedule={"phases": [2, 4], "delta_steps": 3}, eval_every=1)
    train(cfg)
    records = read_trajectories(tmp_path / "run" / "trajectories.jsonl")
    assert {r["horizon"] for r in records} == {2, 4}
    for r in records:
        assert len(r["turns"]) <= r["horizon"] == (2 if r["step"] < 3 else 4)
    rows = (tmp_path / "run" / "metrics.csv").read_text().splitlines()[1:]
    assert [int(r.split(",")[1]) for r in rows] == [2, 2, 2, 4, 4, 4]


def test_early_stop_on_target(tmp_path):
    result = train(small_config(tmp_path, target_success=0.0))
    assert result.updates_run == 0 and result.metrics == []


def test_abort_on_collection_failure(tmp_path):
    pool = ClientPool([FailingClient(EnvServer())])
    with pytest.raises(CollectionFailed):
        train(small_config(tmp_path), pool=pool)
    out = tmp_path / "run"
    assert (out / "checkpoints" / "last_good.bin").exists()
    assert "NOT_FOUND" in json.loads((out / "report.json").read_text())["error"]


def test_checkpoint_reproduces_evaluation(tmp_path):
    result = train(small_config(tmp_path))
    suite = task_suite("craft", [1, 2], 10, 3)
    loaded = load_checkpoint(tmp_path / "run" / "checkpoints" / "step_6.bin")
    assert evaluate(loaded, suite, seed=4).to_dict() == evaluate(result.policy, suite, seed=4).to_dict()


# ---------------------------------------------------------------- evaluation


def test_oracle_evaluation_depth1():
    suite = task_suite("craft", [1], 40, 0)
    report = evaluate(OracleActor(suite), suite)
    assert report.success == 1.0 and report.per_difficulty == {"craft/1": 1.0}
    assert report.n_trajectories == 40


def test_cap_below_optimal_gives_zero():
    suite = task_suite("craft", [2, 3], 20, 0)
    assert min(optimal_length(t) for t in suite) > 2
    assert evaluate(OracleActor(suite), suite, max_turns=2).success == 0.0


def test_empty_suite():
    with pytest.raises(ValidationError):
        evaluate(Policy.zeros(), [])


def test_uniform_random_hopqa3_rarely_succeeds():
    client = LocalClient(EnvServer())
    suite = task_suite("hopqa", [3], 200, 0)
    wins = sum(collect_trajectory(client, Policy.zeros(), t, 4, mix(1, i)).success for i, t in enumerate(suite))
    assert wins / 200 < 0.05


def test_pass_at_k_structure():
    suite = task_suite("craft", [1, 2], 12, 0)
    policy = Policy(np.random.default_rng(0).normal(size=1 << 16) * 0.3)
    rates = pass_at_k(policy, suite, 6, 1.0, seed=3)
    assert list(rates) == [1, 2, 4, 6]
    vals = list(rates.values())
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    client = LocalClient(EnvServer())
    sampled = [collect_trajectory(client, policy, t, 20, mix(3, i, 0)).success for i, t in enumerate(suite)]
    assert rates[1] == sum(sampled) / len(suite)


def test_turn_scaling_oracle_jumps_at_optimal_length():
    suite = task_suite("craft", [1, 2, 3], 30, 0)
    caps = list(range(1, 21))
    curve = turn_scaling_eval(OracleActor(suite), suite, caps)
    lengths = [optimal_length(t) for t in suite]
    assert curve == {c: sum(n <= c for n in lengths) / len(suite) for c in caps}
    assert curve[20] == evaluate(OracleActor(suite), suite).success == 1.0


def test_turn_scaling_monotone_and_saturates():
    suite = task_suite("grid", [1, 2, 3], 30, 0)
    policy = Policy(np.random.default_rng(1).normal(size=1 << 16))
    curve = turn_scaling_eval(policy, suite, [1, 5, 10, 20])
    vals = list(curve.values())
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert curve[20] == evaluate(policy, suite).success
    with pytest.raises(ValidationError):
        turn_scaling_eval(policy, suite, [5, 5])


# ---------------------------------------------------------------- transcripts


def _record(n_turns: int) -> dict:
    task = generate_task("craft", 1, 0)
    return {
        "task": task.to_dict(),
        "seed": 3,
        "turns": [{"observation": f"o{k}", "action": f"a{k}", "log_prob_old": -0.5, "candidate_count": 2, "reward": 0.0} for k in range(n_turns)],
        "reward": 0.0,
        "truncated": True,
        "horizon": 3,
        "final_observation": "end",
    }


def test_transcript_formats():
    empty = export_transcript([_record(0)], 0)
    assert empty.startswith("trajectory 0: craft difficulty 1")
    assert empty.rstrip().endswith("summary: no turns, truncated, reward 0.0")
    three = export_transcript([_record(3)], 0)
    assert [line for line in three.splitlines() if line.startswith("[turn")] == ["[turn 1]", "[turn 2]", "[turn 3]"]
    assert export_transcript([_record(3)], 0) == three
    with pytest.raises(NotFoundError) as exc:
        export_transcript([_record(1)], 5)
    assert exc.value.code == "NOT_FOUND"


# ---------------------------------------------------------------- CLI


def test_cli_end_to_end(tmp_path, capsys):
    tasks = tmp_path / "tasks.jsonl"
    assert main(["gen-tasks", "craft", "--difficulty", "1", "2", "--count", "3", "--out", str(tasks)]) == 0
    assert len(tasks.read_text().splitlines()) == 6

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"difficulties": [1], "train_tasks": 4, "eval_tasks": 2, "total_updates": 2, "batch_tasks": 2, "eval_every": 1}))
    out = tmp_path / "out"
    assert main(["train", "--config", str(cfg), "--seed", "3", "--workers", "2", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["updates_run"] == 2
    assert json.loads((out / "config.json").read_text())["run_seed"] == 3

    ckpt = out / "checkpoints" / "step_2.bin"
    assert main(["eval", "--tasks", str(tasks), "--checkpoint", str(ckpt)]) == 0
    assert 0.0 <= json.loads(capsys.readouterr().out)["success"] <= 1.0
    assert main(["pass-at-k", "--tasks", str(tasks), "--k", "4"]) == 0
    assert list(json.loads(capsys.readouterr().out)) == ["1", "2", "4"]
    assert main(["turn-scaling", "--tasks", str(tasks), "--caps", "1", "5", "20"]) == 0
    assert list(json.loads(capsys.readouterr().out)) == ["1", "5", "20"]
    assert main(["replay", str(out / "trajectories.jsonl"), "0"]) == 0
    assert "[turn 1]" in capsys.readouterr().out
    assert main(["replay", str(out / "trajectories.jsonl"), "999"]) == 2
    assert "NOT_FOUND" in capsys.readouterr().err
