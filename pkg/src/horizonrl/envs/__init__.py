"""Environment families and task generation."""

from __future__ import annotations

from ..errors import ValidationError
from .bandit import BanditFamily
from .base import EnvFamily, Outcome, TaskSpec
from .craft import CraftFamily
from .grid import GridFamily
from .hopqa import HopQAFamily

FAMILIES: dict[str, EnvFamily] = {
    f.kind: f for f in (CraftFamily(), GridFamily(), HopQAFamily(), BanditFamily())
}
ENV_KINDS = ("craft", "grid", "hopqa")


def get_family(env_kind: str) -> EnvFamily:
    try:
        return FAMILIES[env_kind]
    except KeyError:
        raise ValidationError(f"unknown env_kind {env_kind!r}") from None


def generate_task(env_kind: str, difficulty: int, gen_seed: int) -> TaskSpec:
    return get_family(env_kind).generate(difficulty, gen_seed)


def optimal_length(task: TaskSpec) -> int:
    return get_family(task.env_kind).optimal_length(task)


def turn_cap(env_kind: str) -> int:
    return get_family(env_kind).turn_cap


__all__ = [
    "ENV_KINDS",
    "FAMILIES",
    "EnvFamily",
    "Outcome",
    "TaskSpec",
    "generate_task",
    "get_family",
    "optimal_length",
    "turn_cap",
]
