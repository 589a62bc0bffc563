"""Command-line entry point: ``horizonrl <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .envs import FAMILIES, TaskSpec, generate_task
from .errors import HorizonRLError
from .evaluation import evaluate, export_transcript, pass_at_k, turn_scaling_eval
from .policy import Policy, load_checkpoint
from .protocol import EnvServer, HttpClient, LocalClient
from .protocol.server import EnvHTTPServer
from .rollout import ClientPool
from .rng import mix
from .trainer import RunConfig, train

log = logging.getLogger("horizonrl")


def _load_tasks(path: str) -> list[TaskSpec]:
    with open(path, encoding="utf-8") as fh:
        return [TaskSpec.from_dict(json.loads(line)) for line in fh if line.strip()]


def _load_policy(path: str | None) -> Policy:
    return load_checkpoint(path) if path else Policy.zeros()


def _pool(args) -> ClientPool:
    if args.server:
        return ClientPool([HttpClient(args.server) for _ in range(args.workers)])
    server = EnvServer()
    return ClientPool([LocalClient(server) for _ in range(args.workers)])


def _emit(data) -> None:
    print(json.dumps(data, indent=2))


def cmd_serve_env(args) -> int:
    host = args.host or os.environ.get("HORIZONRL_HOST", "127.0.0.1")
    port = args.port if args.port is not None else int(os.environ.get("HORIZONRL_PORT", "8765"))
    cap = args.session_cap or int(os.environ.get("HORIZONRL_SESSION_CAP", "256"))
    httpd = EnvHTTPServer((host, port), EnvServer(session_cap=cap))
    log.info("serving environments on %s (session cap %d)", httpd.url, cap)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


def cmd_gen_tasks(args) -> int:
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for d in args.difficulty:
            for i in range(args.count):
                task = generate_task(args.env_kind, d, mix(args.seed, d, i))
                out.write(json.dumps(task.to_dict()) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_train(args) -> int:
    data = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if args.seed is not None:
        data["run_seed"] = args.seed
    if args.workers is not None:
        data["worker_count"] = args.workers
    if args.out is not None:
        data["output_dir"] = args.out
    config = RunConfig.from_dict(data)
    result = train(config)
    _emit({"updates_run": result.updates_run, "final_success": result.final_success, "output_dir": str(result.output_dir)})
    return 0


def cmd_eval(args) -> int:
    report = evaluate(_load_policy(args.checkpoint), _load_tasks(args.tasks), args.max_turns, args.seed, _pool(args))
    _emit(report.to_dict())
    return 0


def cmd_pass_at_k(args) -> int:
    rates = pass_at_k(
        _load_policy(args.checkpoint), _load_tasks(args.tasks), args.k, args.temperature, args.seed, args.max_turns, _pool(args)
    )
    _emit({str(k): v for k, v in rates.items()})
    return 0


def cmd_turn_scaling(args) -> int:
    curve = turn_scaling_eval(_load_policy(args.checkpoint), _load_tasks(args.tasks), args.caps, args.seed, _pool(args))
    _emit({str(k): v for k, v in curve.items()})
    return 0


def cmd_replay(args) -> int:
    sys.stdout.write(export_transcript(args.log, args.index))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="horizonrl", description="Multi-turn agent RL with a horizon curriculum.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve-env", help="run the HTTP environment server")
    s.add_argument("--host", default=None, help="bind address (env HORIZONRL_HOST)")
    s.add_argument("--port", type=int, default=None, help="port (env HORIZONRL_PORT, default 8765)")
    s.add_argument("--session-cap", type=int, default=None, help="max live sessions (env HORIZONRL_SESSION_CAP)")
    s.set_defaults(func=cmd_serve_env)

    s = sub.add_parser("gen-tasks", help="write a task suite as JSON lines")
    s.add_argument("env_kind", choices=sorted(FAMILIES))
    s.add_argument("--difficulty", type=int, nargs="+", required=True)
    s.add_argument("--count", type=int, default=100, help="tasks per difficulty")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_gen_tasks)

    s = sub.add_parser("train", help="train from a JSON run config")
    s.add_argument("--config", default=None, help="JSON config; omitted keys take defaults")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_train)

    def eval_args(s):
        s.add_argument("--tasks", required=True, help="task file from gen-tasks")
        s.add_argument("--checkpoint", default=None, help="policy checkpoint (untrained if omitted)")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--server", default=None, help="env server URL (in-process if omitted)")

    s = sub.add_parser("eval", help="greedy success rates")
    eval_args(s)
    s.add_argument("--max-turns", type=int, default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("pass-at-k", help="sampled pass@k for k = 1, 2, 4, ..., K")
    eval_args(s)
    s.add_argument("--k", type=int, default=64)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--max-turns", type=int, default=None)
    s.set_defaults(func=cmd_pass_at_k)

    s = sub.add_parser("turn-scaling", help="greedy success per turn cap")
    eval_args(s)
    s.add_argument("--caps", type=int, nargs="+", default=list(range(1, 21)))
    s.set_defaults(func=cmd_turn_scaling)

    s = sub.add_parser("replay", help="print a logged trajectory as text")
    s.add_argument("log", help="trajectories.jsonl")
    s.add_argument("index", type=int)
    s.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HorizonRLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
