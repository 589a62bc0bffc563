"""A one-turn, two-armed bandit used as a learning sanity check."""

from __future__ import annotations

from dataclasses import dataclass

from .base import INVALID_ACTION, EnvFamily, Outcome, TaskSpec

# losing arm listed first: an untrained greedy policy (ties -> first) fails
ARMS = ("pull arm b", "pull arm a")
WINNING_ARM = "pull arm a"


@dataclass(frozen=True)
class BanditState:
    done: bool = False


class BanditFamily(EnvFamily):
    kind = "bandit"
    difficulties = (1,)
    turn_cap = 1

    def instance_goal(self, difficulty: int, gen_seed: int) -> str:
        return "pull the paying arm"

    def initial_state(self, task: TaskSpec, seed: int = 0) -> BanditState:
        self.validate(task)
        return BanditState()

    def render(self, state: BanditState, feedback: str) -> str:
        return f"{feedback} two arms a and b ."

    def actions(self, state: BanditState) -> list[str]:
        return [] if state.done else list(ARMS)

    def transition(self, state: BanditState, action: str) -> Outcome:
        if action not in ARMS:
            return Outcome(state, self.render(state, INVALID_ACTION), 0.0, False)
        reward = 1.0 if action == WINNING_ARM else 0.0
        return Outcome(BanditState(done=True), self.render(state, "pulled ."), reward, True)

    def solve(self, task: TaskSpec) -> list[str]:
        return [WINNING_ARM]
