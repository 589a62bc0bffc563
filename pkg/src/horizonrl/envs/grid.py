"""GridNav: a single-room grid world with a "go to the <color> <kind>" mission.

Primitive actions turn or step the agent; ``go to <color> <kind>`` walks the
shortest path to a cell next to that object in one turn. The mission
succeeds when the agent ends a ``go to`` or ``move forward`` next to the
goal object.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from ..rng import SplitMixRandom, mix
from .base import INVALID_ACTION, EnvFamily, Outcome, TaskSpec

COLORS = ("red", "green", "blue", "purple", "yellow", "grey")
KINDS = ("ball", "box", "key")
HEADINGS = ("north", "east", "south", "west")
_STEP = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}

# tier -> (width, height, distractors, interior wall)
TIERS = {1: (5, 5, 1, False), 2: (6, 6, 3, False), 3: (8, 8, 5, True)}

PRIMITIVES = ("turn left", "turn right", "move forward")

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridObject:
    color: str
    kind: str
    pos: Cell

    @property
    def name(self) -> str:
        return f"{self.color} {self.kind}"


@dataclass(frozen=True)
class Room:
    width: int
    height: int
    walls: frozenset[Cell]
    objects: tuple[GridObject, ...]  # sorted by name
    goal_index: int
    start: Cell
    start_facing: int

    @property
    def goal(self) -> GridObject:
        return self.objects[self.goal_index]

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def blocked(self, c: Cell) -> bool:
        return not self.in_bounds(c) or c in self.walls or any(o.pos == c for o in self.objects)

    def neighbors(self, c: Cell) -> list[Cell]:
        return [(c[0] + dx, c[1] + dy) for dx, dy in _STEP.values()]


@dataclass(frozen=True)
class GridState:
    room: Room
    pos: Cell
    facing: int
    done: bool = False


def adjacent(a: Cell, b: Cell) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def shortest_path(room: Room, start: Cell, targets: set[Cell]) -> list[Cell] | None:
    """Cells visited (excluding ``start``) on a shortest walk into ``targets``."""
    if start in targets:
        return []
    prev: dict[Cell, Cell | None] = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in room.neighbors(cur):
            if nxt in prev or room.blocked(nxt):
                continue
            prev[nxt] = cur
            if nxt in targets:
                path = [nxt]
                while prev[path[-1]] != start:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(nxt)
    return None


def approach_cells(room: Room, obj: GridObject) -> set[Cell]:
    return {c for c in room.neighbors(obj.pos) if not room.blocked(c)}


@lru_cache(maxsize=4096)
def build_room(tier: int, gen_seed: int) -> Room:
    width, height, n_distractors, interior = TIERS[tier]
    rng = SplitMixRandom(mix(gen_seed, 0x6E1D))
    while True:
        walls: set[Cell] = set()
        if interior:
            wx = 2 + rng.randbelow(width - 4)
            gap = rng.randbelow(height)
            walls = {(wx, y) for y in range(height) if y != gap}
        free = [(x, y) for y in range(height) for x in range(width) if (x, y) not in walls]
        pairs = [(c, k) for c in COLORS for k in KINDS]
        chosen = rng.sample(pairs, n_distractors + 1)
        cells = rng.sample(free, n_distractors + 2)
        objects = [GridObject(c, k, pos) for (c, k), pos in zip(chosen, cells)]
        goal = objects[0]
        start = cells[-1]
        facing = rng.randbelow(4)
        objects.sort(key=lambda o: o.name)
        room = Room(width, height, frozenset(walls), tuple(objects), objects.index(goal), start, facing)
        if adjacent(start, goal.pos):
            continue
        if shortest_path(room, start, approach_cells(room, goal)) is None:
            continue
        return room


class GridFamily(EnvFamily):
    kind = "grid"
    difficulties = (1, 2, 3)
    turn_cap = 20

    def instance_goal(self, difficulty: int, gen_seed: int) -> str:
        return build_room(difficulty, gen_seed).goal.name

    def room(self, task: TaskSpec) -> Room:
        self.validate(task)
        return build_room(task.difficulty, task.gen_seed)

    def initial_state(self, task: TaskSpec, seed: int = 0) -> GridState:
        room = self.room(task)
        return GridState(room, room.start, room.start_facing)

    def render(self, state: GridState, feedback: str) -> str:
        room = state.room
        parts = [
            feedback,
            f"mission go to the {room.goal.name} .",
            f"room {room.width} by {room.height} .",
            f"agent at {state.pos[0]} {state.pos[1]} facing {HEADINGS[state.facing]} .",
        ]
        parts.extend(f"{o.name} at {o.pos[0]} {o.pos[1]} ." for o in room.objects)
        parts.extend(f"wall at {x} {y} ." for x, y in sorted(room.walls))
        return " ".join(parts)

    def actions(self, state: GridState) -> list[str]:
        if state.done:
            return []
        return list(PRIMITIVES) + [f"go to {o.name}" for o in state.room.objects]

    def transition(self, state: GridState, action: str) -> Outcome:
        room = state.room
        pos, facing = state.pos, state.facing
        check_goal = False
        if action == "turn left":
            facing = (facing - 1) % 4
            feedback = "turned left ."
        elif action == "turn right":
            facing = (facing + 1) % 4
            feedback = "turned right ."
        elif action == "move forward":
            dx, dy = _STEP[facing]
            ahead = (pos[0] + dx, pos[1] + dy)
            if room.blocked(ahead):
                feedback = "blocked ."
            else:
                pos = ahead
                feedback = "moved forward ."
            check_goal = True
        elif action.startswith("go to ") and action[6:] in {o.name for o in room.objects}:
            obj = next(o for o in room.objects if o.name == action[6:])
            path = shortest_path(room, pos, approach_cells(room, obj))
            if path is None:
                feedback = f"cannot reach {obj.name} ."
            else:
                if path:
                    pos = path[-1]
                facing = next(h for h, (dx, dy) in _STEP.items() if (pos[0] + dx, pos[1] + dy) == obj.pos)
                feedback = f"reached {obj.name} ."
                check_goal = True
        else:
            feedback = INVALID_ACTION
        if check_goal and adjacent(pos, room.goal.pos):
            new = GridState(room, pos, facing, done=True)
            return Outcome(new, self.render(new, feedback), 1.0, True)
        new = GridState(room, pos, facing)
        return Outcome(new, self.render(new, feedback), 0.0, False)

    def solve(self, task: TaskSpec) -> list[str]:
        """Breadth-first search over (position, facing) with every action."""
        start = self.initial_state(task)
        key = (start.pos, start.facing)
        parent: dict = {key: (None, None)}
        queue = deque([start])
        while queue:
            state = queue.popleft()
            for action in self.actions(state):
                out = self.transition(state, action)
                nkey = (out.state.pos, out.state.facing)
                if out.done:
                    plan = [action]
                    node = (state.pos, state.facing)
                    while parent[node][0] is not None:
                        node, act = parent[node]
                        plan.append(act)
                    return plan[::-1]
                if nkey not in parent:
                    parent[nkey] = ((state.pos, state.facing), action)
                    queue.append(out.state)
        return []
