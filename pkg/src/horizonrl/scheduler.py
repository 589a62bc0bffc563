"""Progressive horizon curriculum: training step -> maximum interaction turns."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class Violation:
    kind: str  # MONOTONICITY | POSITIVITY | CAP
    message: str


@dataclass(frozen=True)
class HorizonSchedule:
    """Piecewise-constant horizon: ``phases[min(step // delta_steps, n - 1)]``.

    ``delta_h`` records the increment when the phases were generated from a
    start value; it is informational for listed schedules.
    """

    phases: tuple[int, ...]
    delta_steps: int
    delta_h: int = 0
    cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(int(h) for h in self.phases))

    @classmethod
    def fixed(cls, horizon: int, total_steps: int = 1) -> HorizonSchedule:
        return cls((horizon,), max(1, total_steps))

    @classmethod
    def generated(cls, h1: int, delta_h: int, delta_steps: int, cap: int) -> HorizonSchedule:
        """h1, h1 + delta_h, ... up to ``cap`` (the cap itself is the last phase)."""
        if h1 < 1 or delta_h < 1 or cap < h1:
            raise ValidationError("generated schedule needs h1 >= 1, delta_h >= 1 and cap >= h1")
        phases = list(range(h1, cap + 1, delta_h))
        if phases[-1] != cap:
            phases.append(cap)
        return cls(tuple(phases), delta_steps, delta_h, cap)

    @classmethod
    def even_split(cls, phases, total_steps: int, cap: int | None = None) -> HorizonSchedule:
        """Transition points at equal fractions of the total update count."""
        phases = tuple(phases)
        if not phases:
            raise ValidationError("no phases")
        return cls(phases, max(1, -(-total_steps // len(phases))), cap=cap)

    def to_dict(self) -> dict:
        return {"phases": list(self.phases), "delta_steps": self.delta_steps, "delta_h": self.delta_h, "cap": self.cap}

    @classmethod
    def from_dict(cls, data: dict, total_steps: int | None = None) -> HorizonSchedule:
        """Accepts either ``phases`` (+ ``delta_steps``) or ``h1/delta_h/delta_steps/cap``."""
        listed = "phases" in data
        generated = any(k in data for k in ("h1", "delta_h"))
        if listed and generated:
            raise ValidationError("schedule.phases and schedule.h1/delta_h are mutually exclusive")
        if generated:
            return cls.generated(int(data["h1"]), int(data["delta_h"]), int(data["delta_steps"]), int(data["cap"]))
        if not listed:
            raise ValidationError("schedule needs phases or h1/delta_h/delta_steps/cap")
        cap = data.get("cap")
        if data.get("delta_steps") is None:
            if total_steps is None:
                raise ValidationError("delta_steps missing and total_steps unknown")
            return cls.even_split(data["phases"], total_steps, cap)
        return cls(tuple(data["phases"]), int(data["delta_steps"]), int(data.get("delta_h") or 0), cap)


def horizon_at(schedule: HorizonSchedule, step: int) -> int:
    if step < 0:
        raise ValidationError("step must be non-negative")
    k = min(step // schedule.delta_steps, len(schedule.phases) - 1)
    return schedule.phases[k]


def validate_schedule(schedule: HorizonSchedule, env_cap: int | None = None) -> list[Violation]:
    """Every violation found; an empty list means the schedule is valid."""
    out: list[Violation] = []
    phases = schedule.phases
    if not phases:
        out.append(Violation("POSITIVITY", "schedule has no phases"))
    for h in phases:
        if h < 1:
            out.append(Violation("POSITIVITY", f"phase horizon {h} < 1"))
    if schedule.delta_steps < 1:
        out.append(Violation("POSITIVITY", f"delta_steps {schedule.delta_steps} < 1"))
    for a, b in zip(phases, phases[1:]):
        if b <= a:
            out.append(Violation("MONOTONICITY", f"phase {b} does not exceed {a}"))
    for cap in (env_cap, schedule.cap):
        if cap is not None and phases and phases[-1] > cap:
            out.append(Violation("CAP", f"final horizon {phases[-1]} exceeds cap {cap}"))
    return out
