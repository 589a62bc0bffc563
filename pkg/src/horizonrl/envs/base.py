"""Task specs and the environment-family interface.

A family turns a :class:`TaskSpec` into an immutable episode state and
advances it with a pure ``transition`` function. Sessions on the server
only ever hold references to these immutable states.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, NamedTuple

from ..errors import HorizonRLError, ValidationError
from ..rng import SplitMixRandom

INVALID_ACTION = "invalid action ."

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]


@dataclass(frozen=True)
class TaskSpec:
    env_kind: str
    difficulty: int
    gen_seed: int
    goal: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TaskSpec:
        try:
            return cls(
                env_kind=str(data["env_kind"]),
                difficulty=int(data["difficulty"]),
                gen_seed=int(data["gen_seed"]),
                goal=str(data["goal"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed task: {exc}") from None


class Outcome(NamedTuple):
    state: Any
    text: str
    reward: float
    done: bool


class EnvFamily:
    """Base class; subclasses implement the abstract hooks below."""

    kind: str = ""
    difficulties: tuple[int, ...] = ()
    turn_cap: int = 20

    def generate(self, difficulty: int, gen_seed: int) -> TaskSpec:
        self.check_difficulty(difficulty)
        return TaskSpec(self.kind, difficulty, gen_seed & ((1 << 64) - 1), self.instance_goal(difficulty, gen_seed))

    def check_difficulty(self, difficulty: int) -> None:
        if difficulty not in self.difficulties:
            raise ValidationError(
                f"{self.kind} difficulty must be one of {list(self.difficulties)}, got {difficulty}"
            )

    def validate(self, task: TaskSpec) -> None:
        if task.env_kind != self.kind:
            raise ValidationError(f"task is for {task.env_kind!r}, not {self.kind!r}")
        self.check_difficulty(task.difficulty)
        if not 0 <= task.gen_seed < (1 << 64):
            raise ValidationError("gen_seed must be a 64-bit unsigned integer")
        expected = self.instance_goal(task.difficulty, task.gen_seed)
        if task.goal != expected:
            raise ValidationError(f"task goal {task.goal!r} does not match its generator (expected {expected!r})")

    # hooks -----------------------------------------------------------------
    def instance_goal(self, difficulty: int, gen_seed: int) -> str:
        raise NotImplementedError

    def initial_state(self, task: TaskSpec, seed: int = 0) -> Any:
        raise NotImplementedError

    def render(self, state: Any, feedback: str) -> str:
        raise NotImplementedError

    def actions(self, state: Any) -> list[str]:
        raise NotImplementedError

    def transition(self, state: Any, action: str) -> Outcome:
        raise NotImplementedError

    def solve(self, task: TaskSpec) -> list[str]:
        """Shortest action sequence reaching reward 1 (breadth-first oracle)."""
        raise NotImplementedError

    # derived ---------------------------------------------------------------
    def initial_observation(self, state: Any) -> str:
        return self.render(state, "start .")

    def optimal_length(self, task: TaskSpec) -> int:
        plan = self.solve(task)
        if not plan:
            raise HorizonRLError(f"generator produced an unsolvable {self.kind} task (seed {task.gen_seed})")
        return len(plan)


def pseudo_words(rng: SplitMixRandom, n: int, syllables: int = 3) -> list[str]:
    """``n`` distinct pronounceable names, in generation order."""
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(syllables))
        if word not in seen:
            seen.add(word)
            out.append(word)
    return out
