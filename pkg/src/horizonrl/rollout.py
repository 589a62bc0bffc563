"""Trajectory collection: drive protocol clients with a policy under a turn cap."""

from __future__ import annotations

import json
import logging
import queue
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .envs import TaskSpec
from .errors import CollectionFailed, HorizonRLError, ValidationError
from .policy import (
    ActionDistribution,
    CandidateBlock,
    Policy,
    distribution_from_block,
    render_history,
    sample_from,
)
from .protocol.client import EnvClient
from .rng import RngStream, mix

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Turn:
    observation_text: str
    action: str
    log_prob_old: float
    candidate_count: int
    history: str = ""
    candidates: tuple[str, ...] = ()
    reward: float = 0.0
    block: CandidateBlock | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "observation": self.observation_text,
            "action": self.action,
            "log_prob_old": self.log_prob_old,
            "candidate_count": self.candidate_count,
            "reward": self.reward,
        }


@dataclass(eq=False)
class Trajectory:
    task: TaskSpec
    seed: int
    turns: list[Turn]
    outcome_reward: float
    truncated: bool
    horizon: int = 0
    final_observation: str = ""

    def __len__(self) -> int:
        return len(self.turns)

    @property
    def success(self) -> bool:
        return self.outcome_reward >= 1.0

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "seed": self.seed,
            "turns": [t.to_dict() for t in self.turns],
            "reward": self.outcome_reward,
            "truncated": self.truncated,
            "horizon": self.horizon,
            "final_observation": self.final_observation,
        }

    def key(self) -> tuple:
        """Comparable summary used by determinism tests."""
        return (
            self.task,
            self.seed,
            tuple((t.observation_text, t.action, t.log_prob_old, t.candidate_count) for t in self.turns),
            self.outcome_reward,
            self.truncated,
        )


@dataclass(eq=False)
class TrajectoryGroup:
    task: TaskSpec
    trajectories: list[Trajectory]
    group_seed: int

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.outcome_reward for t in self.trajectories])


def _distribution(policy, history: str, actions: list[str]) -> tuple[ActionDistribution, CandidateBlock | None]:
    if isinstance(policy, Policy):
        block = policy.block(history, actions)
        return distribution_from_block(policy, block), block
    # any object exposing distribution(history, actions), e.g. scripted test actors
    return policy.distribution(history, tuple(actions)), None


def collect_trajectory(
    client: EnvClient,
    policy,
    task: TaskSpec,
    horizon: int,
    seed: int,
    greedy: bool = False,
) -> Trajectory:
    """Run one episode in a fresh session, closed afterwards.

    Sampling uses the counter stream seeded by ``seed``; ``greedy`` picks the
    argmax candidate instead (first one on ties).
    """
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    try:
        sid = client.create_session(task.env_kind, task, seed)
    except HorizonRLError as exc:
        raise CollectionFailed(f"create failed: {exc.message}", exc.code) from exc
    try:
        return _run_episode(client, sid, policy, task, horizon, seed, greedy)
    except HorizonRLError as exc:
        if isinstance(exc, CollectionFailed):
            raise
        raise CollectionFailed(f"episode failed: {exc.message}", exc.code) from exc
    finally:
        try:
            client.close_session(sid)
        except HorizonRLError:
            log.warning("could not close session %s", sid)


def _run_episode(client, sid, policy, task, horizon, seed, greedy) -> Trajectory:
    rng = RngStream(seed)
    obs = client.reset(sid)
    observations = [obs.text]
    actions_taken: list[str] = []
    turns: list[Turn] = []
    reward, done = 0.0, obs.done
    while not done and len(turns) < horizon:
        current = client.observe(sid)
        candidates = client.available_actions(sid)
        history = render_history(observations, actions_taken)
        dist, block = _distribution(policy, history, candidates)
        if greedy:
            i = int(np.argmax(dist.log_probs))
            action, log_prob = dist.actions[i], float(dist.log_probs[i])
        else:
            action, log_prob, rng = sample_from(dist, rng)
        result = client.step(sid, action)
        turns.append(
            Turn(current.text, action, log_prob, len(candidates), history, tuple(candidates), result.reward, block)
        )
        observations.append(result.observation.text)
        actions_taken.append(action)
        reward, done = result.reward, result.done
    truncated = not done
    return Trajectory(
        task,
        seed,
        turns,
        0.0 if truncated else float(reward),
        truncated,
        horizon,
        observations[-1],
    )


class ClientPool:
    """Fixed set of clients; each in-flight job checks one out exclusively."""

    def __init__(self, clients: Sequence[EnvClient]):
        if not clients:
            raise ValidationError("client pool is empty")
        self.clients = list(clients)
        self._free: queue.Queue[EnvClient] = queue.Queue()
        for c in self.clients:
            self._free.put(c)

    def __len__(self) -> int:
        return len(self.clients)

    def run(self, fn, jobs: list) -> list:
        """Apply ``fn(client, job)`` to every job; results in job order."""
        if len(self.clients) == 1:
            return [fn(self.clients[0], job) for job in jobs]

        def worker(job):
            client = self._free.get()
            try:
                return fn(client, job)
            finally:
                self._free.put(client)

        with ThreadPoolExecutor(max_workers=len(self.clients)) as ex:
            futures = [ex.submit(worker, job) for job in jobs]
            results, first_error = [], None
            for f in futures:
                try:
                    results.append(f.result())
                except Exception as exc:  # collect all, then fail the batch
                    results.append(None)
                    first_error = first_error or exc
        if first_error is not None:
            raise first_error
        return results


def _as_pool(pool) -> ClientPool:
    if isinstance(pool, ClientPool):
        return pool
    if isinstance(pool, EnvClient):
        return ClientPool([pool])
    return ClientPool(list(pool))


def collect_group(pool, policy, task: TaskSpec, G: int, horizon: int, group_seed: int) -> TrajectoryGroup:
    if G < 2:
        raise ValidationError("group size must be at least 2")
    pool = _as_pool(pool)
    jobs = [mix(group_seed, i) for i in range(G)]
    trajs = pool.run(lambda c, s: collect_trajectory(c, policy, task, horizon, s), jobs)
    return TrajectoryGroup(task, trajs, group_seed)


def collect_batch(
    pool, policy, tasks: Sequence[TaskSpec], G: int, horizon: int, batch_seed: int
) -> list[TrajectoryGroup]:
    """One group per task; group ``i`` uses seed ``mix(batch_seed, i)``."""
    if not tasks:
        raise ValidationError("task list is empty")
    if G < 2:
        raise ValidationError("group size must be at least 2")
    pool = _as_pool(pool)
    group_seeds = [mix(batch_seed, i) for i in range(len(tasks))]
    jobs = [(i, j) for i in range(len(tasks)) for j in range(G)]

    def run(client, job):
        i, j = job
        return collect_trajectory(client, policy, tasks[i], horizon, mix(group_seeds[i], j))

    flat = pool.run(run, jobs)
    return [TrajectoryGroup(tasks[i], flat[i * G : (i + 1) * G], group_seeds[i]) for i in range(len(tasks))]


def env_steps(groups: Iterable[TrajectoryGroup]) -> int:
    return sum(len(t) for g in groups for t in g.trajectories)


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory], extra: dict | None = None) -> None:
    """Append trajectories as JSON lines (fixed key order)."""
    with open(path, "a", encoding="utf-8") as fh:
        for t in trajectories:
            record = dict(extra or {})
            record.update(t.to_dict())
            fh.write(json.dumps(record) + "\n")


def read_trajectories(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
