"""Greedy success rates, pass@K, turn-scaling curves and transcript export."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .envs import TaskSpec, turn_cap
from .errors import NotFoundError, ValidationError
from .policy import Policy
from .protocol import EnvServer, LocalClient
from .rollout import ClientPool, Trajectory, collect_trajectory, read_trajectories
from .rng import mix


def difficulty_key(task: TaskSpec) -> str:
    return f"{task.env_kind}/{task.difficulty}"


@dataclass
class EvalReport:
    per_difficulty: dict[str, float]
    success: float
    pass_at_k: dict[int, float] = field(default_factory=dict)
    turn_scaling: dict[int, float] = field(default_factory=dict)
    n_trajectories: int = 0

    def to_dict(self) -> dict:
        return {
            "per_difficulty": self.per_difficulty,
            "success": self.success,
            "pass_at_k": {str(k): v for k, v in self.pass_at_k.items()},
            "turn_scaling": {str(k): v for k, v in self.turn_scaling.items()},
            "n_trajectories": self.n_trajectories,
        }


def _pool(pool) -> ClientPool:
    if pool is None:
        return ClientPool([LocalClient(EnvServer())])
    return pool if isinstance(pool, ClientPool) else ClientPool(list(pool) if isinstance(pool, (list, tuple)) else [pool])


def _check_suite(tasks) -> list[TaskSpec]:
    tasks = list(tasks)
    if not tasks:
        raise ValidationError("task suite is empty")
    return tasks


def greedy_trajectories(policy, tasks, max_turns: int | None, seed: int, pool=None) -> list[Trajectory]:
    tasks = _check_suite(tasks)
    pool = _pool(pool)

    def run(client, i):
        cap = max_turns if max_turns is not None else turn_cap(tasks[i].env_kind)
        return collect_trajectory(client, policy, tasks[i], cap, mix(seed, i), greedy=True)

    return pool.run(run, list(range(len(tasks))))


def _rates(tasks, successes) -> tuple[dict[str, float], float]:
    buckets: dict[str, list[bool]] = defaultdict(list)
    for task, ok in zip(tasks, successes):
        buckets[difficulty_key(task)].append(ok)
    per = {k: sum(v) / len(v) for k, v in sorted(buckets.items())}
    return per, sum(successes) / len(successes)


def evaluate(policy, tasks: Sequence[TaskSpec], max_turns: int | None = None, seed: int = 0, pool=None) -> EvalReport:
    """One greedy episode per task; ``max_turns=None`` uses each env's hard cap."""
    tasks = _check_suite(tasks)
    trajs = greedy_trajectories(policy, tasks, max_turns, seed, pool)
    per, overall = _rates(tasks, [t.success for t in trajs])
    return EvalReport(per, overall, n_trajectories=len(trajs))


def _k_values(K: int) -> list[int]:
    if K < 1:
        raise ValidationError("K must be at least 1")
    ks, k = [], 1
    while k < K:
        ks.append(k)
        k *= 2
    ks.append(K)
    return ks


def pass_at_k(
    policy: Policy,
    tasks: Sequence[TaskSpec],
    K: int,
    temperature: float = 1.0,
    seed: int = 0,
    max_turns: int | None = None,
    pool=None,
) -> dict[int, float]:
    """Fraction of tasks with a success among the first k of K sampled episodes."""
    tasks = _check_suite(tasks)
    ks = _k_values(K)
    pool = _pool(pool)
    sampler = policy.with_temperature(temperature)
    jobs = [(i, j) for i in range(len(tasks)) for j in range(K)]

    def run(client, job):
        i, j = job
        cap = max_turns if max_turns is not None else turn_cap(tasks[i].env_kind)
        return collect_trajectory(client, sampler, tasks[i], cap, mix(seed, i, j)).success

    flat = pool.run(run, jobs)
    first_hit = []
    for i in range(len(tasks)):
        row = flat[i * K : (i + 1) * K]
        first_hit.append(next((j for j, ok in enumerate(row) if ok), None))
    return {k: sum(1 for h in first_hit if h is not None and h < k) / len(tasks) for k in ks}


def turn_scaling_eval(policy, tasks: Sequence[TaskSpec], caps: Sequence[int], seed: int = 0, pool=None) -> dict[int, float]:
    """Greedy success per turn cap.

    A greedy episode under a smaller cap is a prefix of the episode under a
    larger one, so a single run at ``max(caps)`` gives every point.
    """
    caps = [int(c) for c in caps]
    if not caps or any(b <= a for a, b in zip(caps, caps[1:])) or caps[0] < 1:
        raise ValidationError("caps must be positive and strictly increasing")
    tasks = _check_suite(tasks)
    trajs = greedy_trajectories(policy, tasks, caps[-1], seed, pool)
    return {c: sum(1 for t in trajs if t.success and len(t) <= c) / len(trajs) for c in caps}


def export_transcript(trajectory_log: str | Path | list[dict], task_index: int) -> str:
    """Turn-by-turn text rendering of one logged trajectory."""
    records = read_trajectories(trajectory_log) if isinstance(trajectory_log, (str, Path)) else trajectory_log
    if not 0 <= task_index < len(records):
        raise NotFoundError(f"no trajectory at index {task_index} (log holds {len(records)})")
    rec = records[task_index]
    task = rec["task"]
    lines = [
        f"trajectory {task_index}: {task['env_kind']} difficulty {task['difficulty']} "
        f"gen_seed {task['gen_seed']} seed {rec['seed']}",
        f"goal: {task['goal']}",
    ]
    turns = rec.get("turns", [])
    for k, turn in enumerate(turns, start=1):
        lines.append(f"[turn {k}]")
        lines.append(f"  observation: {turn['observation']}")
        lines.append(f"  action: {turn['action']}")
        lines.append(f"  reward: {turn.get('reward', 0.0)}")
    if rec.get("final_observation"):
        lines.append(f"final observation: {rec['final_observation']}")
    status = "truncated" if rec["truncated"] else "finished"
    if not turns:
        lines.append(f"summary: no turns, {status}, reward {rec['reward']}")
    else:
        lines.append(f"summary: {len(turns)} turns, {status}, reward {rec['reward']}")
    return "\n".join(lines) + "\n"
