"""Training loop: collect, estimate advantages, update, log, checkpoint."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

from .algorithms import METRIC_FIELDS, UpdateConfig, ValueBaseline, policy_update
from .envs import TaskSpec, generate_task, get_family
from .errors import HorizonRLError, ValidationError
from .evaluation import EvalReport, evaluate
from .policy import DIM, Policy, save_checkpoint
from .protocol import EnvServer, HttpClient, LocalClient
from .rollout import ClientPool, collect_batch, env_steps, write_trajectories
from .rng import mix
from .scheduler import HorizonSchedule, horizon_at, validate_schedule

log = logging.getLogger(__name__)

TRAIN_SPLIT, EVAL_SPLIT = 0, 1


@dataclass
class RunConfig:
    env_kind: str = "craft"
    difficulties: list[int] = field(default_factory=lambda: [2])
    train_tasks: int = 200
    eval_tasks: int = 100
    task_seed: int = 0
    update: UpdateConfig = field(default_factory=lambda: UpdateConfig(learning_rate=0.1))
    schedule: dict = field(default_factory=lambda: {"phases": [20]})
    total_updates: int = 500
    batch_tasks: int = 8
    eval_every: int = 50
    eval_on: str = "train"  # which suite the periodic greedy evaluation uses
    target_success: float | None = None  # stop early once periodic eval reaches it
    run_seed: int = 0
    worker_count: int = 1
    temperature: float = 1.0
    dim: int = DIM
    server_url: str | None = None
    output_dir: str = "runs/default"

    def __post_init__(self):
        if isinstance(self.update, dict):
            self.update = UpdateConfig(**self.update)
        self.difficulties = [int(d) for d in self.difficulties]

    def horizon_schedule(self) -> HorizonSchedule:
        return HorizonSchedule.from_dict(self.schedule, self.total_updates)

    def validate(self) -> None:
        family = get_family(self.env_kind)
        if not self.difficulties:
            raise ValidationError("difficulties is empty")
        for d in self.difficulties:
            family.check_difficulty(d)
        for name in ("train_tasks", "eval_tasks", "batch_tasks", "eval_every", "worker_count"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.train_tasks < len(self.difficulties):
            raise ValidationError("need at least one training task per difficulty")
        if self.total_updates < 0:
            raise ValidationError("total_updates must be non-negative")
        if self.eval_on not in ("train", "eval"):
            raise ValidationError("eval_on must be 'train' or 'eval'")
        if not self.temperature > 0:
            raise ValidationError("temperature must be positive")
        if self.update.group_size < 2:
            raise ValidationError("group_size must be at least 2")
        violations = validate_schedule(self.horizon_schedule(), family.turn_cap)
        if violations:
            raise ValidationError("; ".join(f"{v.kind}: {v.message}" for v in violations))

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["update"] = self.update.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def task_suite(env_kind: str, difficulties, count: int, task_seed: int, split: int = TRAIN_SPLIT) -> list[TaskSpec]:
    """``count`` tasks spread round-robin over ``difficulties``."""
    tasks = []
    for i in range(count):
        d = difficulties[i % len(difficulties)]
        tasks.append(generate_task(env_kind, d, mix(task_seed, split, d, i)))
    return tasks


def batch_for_step(suite: list[TaskSpec], difficulties, batch_tasks: int, run_seed: int, step: int) -> list[TaskSpec]:
    """Round-robin over difficulties, uniform draw within a difficulty."""
    by_diff: dict[int, list[TaskSpec]] = {}
    for t in suite:
        by_diff.setdefault(t.difficulty, []).append(t)
    out = []
    for k in range(batch_tasks):
        d = difficulties[(step * batch_tasks + k) % len(difficulties)]
        pool = by_diff[d]
        out.append(pool[mix(run_seed, step, k) % len(pool)])
    return out


def make_pool(config: RunConfig) -> ClientPool:
    if config.server_url:
        return ClientPool([HttpClient(config.server_url) for _ in range(config.worker_count)])
    server = EnvServer()
    return ClientPool([LocalClient(server) for _ in range(config.worker_count)])


@dataclass
class TrainResult:
    policy: Policy
    metrics: list[dict]
    evals: list[dict]
    updates_run: int
    total_env_steps: int
    output_dir: Path | None
    heldout: EvalReport | None = None

    @property
    def final_success(self) -> float:
        return self.evals[-1]["success"] if self.evals else 0.0


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


class _Writer:
    def __init__(self, out: Path | None):
        self.out = out
        if out is None:
            return
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
        for name in ("metrics.csv", "trajectories.jsonl"):
            (out / name).unlink(missing_ok=True)
        with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(METRIC_FIELDS)

    def metrics(self, row: dict) -> None:
        if self.out is not None:
            with open(self.out / "metrics.csv", "a", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerow([_fmt(row[k]) for k in METRIC_FIELDS])

    def trajectories(self, groups, step: int, horizon: int) -> None:
        if self.out is not None:
            trajs = [t for g in groups for t in g.trajectories]
            write_trajectories(self.out / "trajectories.jsonl", trajs, {"step": step, "horizon": horizon})

    def checkpoint(self, policy: Policy, name: str) -> None:
        if self.out is not None:
            save_checkpoint(policy, self.out / "checkpoints" / name)

    def json(self, name: str, data: dict) -> None:
        if self.out is not None:
            (self.out / name).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def train(config: RunConfig, write: bool = True, pool: ClientPool | None = None) -> TrainResult:
    """Run ``config.total_updates`` updates (fewer if ``target_success`` is hit)."""
    config.validate()
    schedule = config.horizon_schedule()
    out = Path(config.output_dir) if write else None
    writer = _Writer(out)
    writer.json("config.json", config.to_dict())

    pool = pool or make_pool(config)
    train_suite = task_suite(config.env_kind, config.difficulties, config.train_tasks, config.task_seed, TRAIN_SPLIT)
    eval_suite = task_suite(config.env_kind, config.difficulties, config.eval_tasks, config.task_seed, EVAL_SPLIT)
    monitor_suite = train_suite if config.eval_on == "train" else eval_suite

    policy = Policy.zeros(config.dim, config.temperature)
    reference = policy
    baseline = ValueBaseline.zeros(config.dim) if config.update.algorithm == "ppo" else None
    metrics: list[dict] = []
    evals: list[dict] = []
    total_steps = 0

    def run_eval(step: int) -> dict:
        report = evaluate(policy, monitor_suite, None, mix(config.run_seed, 0xE7A1), pool)
        entry = {"step": step, "success": report.success, "per_difficulty": report.per_difficulty}
        evals.append(entry)
        log.info("step %d greedy success %.3f", step, report.success)
        return entry

    step = 0
    try:
        for step in range(config.total_updates):
            if step % config.eval_every == 0:
                entry = run_eval(step)
                writer.checkpoint(policy, f"step_{step}.bin")
                if config.target_success is not None and entry["success"] >= config.target_success:
                    break
            horizon = horizon_at(schedule, step)
            tasks = batch_for_step(train_suite, config.difficulties, config.batch_tasks, config.run_seed, step)
            groups = collect_batch(pool, policy, tasks, config.update.group_size, horizon, mix(config.run_seed, step))
            result = policy_update(policy, groups, config.update, reference, baseline)
            policy, baseline = result.policy, result.baseline
            total_steps += env_steps(groups)
            row = {"step": step, "horizon": horizon, **result.metrics}
            metrics.append(row)
            writer.metrics(row)
            if step % config.eval_every == 0:
                writer.trajectories(groups, step, horizon)
        else:
            step = config.total_updates
    except HorizonRLError as exc:
        writer.checkpoint(policy, "last_good.bin")
        writer.json("report.json", {"error": str(exc), "step": step, "evals": evals})
        raise

    if not evals or evals[-1]["step"] != step:
        run_eval(step)
    writer.checkpoint(policy, f"step_{step}.bin")
    final = evaluate(policy, eval_suite, None, mix(config.run_seed, 0xE7A2), pool)
    writer.json(
        "report.json",
        {
            "updates_run": step,
            "total_env_steps": total_steps,
            "monitor": evals,
            "heldout": final.to_dict(),
        },
    )
    return TrainResult(policy, metrics, evals, step, total_steps, out, final)

