"""CraftTree: a procedurally generated crafting game.

The goal item sits at the top of a crafting tree whose depth equals the
task difficulty. Every recipe takes 2-3 distinct ingredients, exactly one of
which (below the top level) is itself crafted; the rest are base items that
can be fetched with ``get``. Two distractor recipes built from unrelated
base items pad the recipe book.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from ..errors import ValidationError
from ..rng import SplitMixRandom, mix
from .base import INVALID_ACTION, EnvFamily, Outcome, TaskSpec, pseudo_words

DISTRACTOR_RECIPES = 2


@dataclass(frozen=True)
class CraftBook:
    goal: str
    depth: int
    recipes: tuple[tuple[str, tuple[str, ...]], ...]  # sorted by item
    bases: tuple[str, ...]  # sorted

    @property
    def recipe_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self.recipes)

    def tree_items(self) -> set[str]:
        """Items (crafted and base) reachable downward from the goal."""
        rmap = self.recipe_map
        out, stack = set(), [self.goal]
        while stack:
            item = stack.pop()
            if item in out:
                continue
            out.add(item)
            stack.extend(rmap.get(item, ()))
        return out


@dataclass(frozen=True)
class CraftState:
    book: CraftBook
    inventory: tuple[tuple[str, int], ...] = ()
    done: bool = False

    def count(self, item: str) -> int:
        for name, n in self.inventory:
            if name == item:
                return n
        return 0


def tree_depth(book: CraftBook, item: str | None = None) -> int:
    rmap = book.recipe_map
    item = book.goal if item is None else item
    if item not in rmap:
        return 0
    return 1 + max(tree_depth(book, ing) for ing in rmap[item])


@lru_cache(maxsize=4096)
def build_book(depth: int, gen_seed: int) -> CraftBook:
    rng = SplitMixRandom(mix(gen_seed, 0xC4AF7))
    names = iter(pseudo_words(rng, 4 * depth + 4 * DISTRACTOR_RECIPES + 4))
    recipes: dict[str, tuple[str, ...]] = {}
    bases: set[str] = set()

    def build(level: int) -> str:
        item = next(names)
        ingredients = [build(level - 1)] if level > 1 else []
        n_ing = 2 + rng.randbelow(2)
        while len(ingredients) < n_ing:
            base = next(names)
            bases.add(base)
            ingredients.append(base)
        recipes[item] = tuple(sorted(ingredients))
        return item

    goal = build(depth)
    for _ in range(DISTRACTOR_RECIPES):
        item = next(names)
        ingredients = []
        for _ in range(2):
            base = next(names)
            bases.add(base)
            ingredients.append(base)
        recipes[item] = tuple(sorted(ingredients))
    return CraftBook(goal, depth, tuple(sorted(recipes.items())), tuple(sorted(bases)))


def _add(inventory: tuple[tuple[str, int], ...], item: str, delta: int) -> tuple[tuple[str, int], ...]:
    counts = dict(inventory)
    counts[item] = counts.get(item, 0) + delta
    return tuple(sorted((k, v) for k, v in counts.items() if v > 0))


class CraftFamily(EnvFamily):
    kind = "craft"
    difficulties = (1, 2, 3, 4)
    turn_cap = 20

    def instance_goal(self, difficulty: int, gen_seed: int) -> str:
        return build_book(difficulty, gen_seed).goal

    def book(self, task: TaskSpec) -> CraftBook:
        self.validate(task)
        return build_book(task.difficulty, task.gen_seed)

    def initial_state(self, task: TaskSpec, seed: int = 0) -> CraftState:
        return CraftState(self.book(task))

    def render(self, state: CraftState, feedback: str) -> str:
        book = state.book
        parts = [feedback, f"goal {book.goal} ."]
        for item, ingredients in book.recipes:
            parts.extend(f"{item} uses {ing} ." for ing in ingredients)
        if state.inventory:
            parts.extend(f"have {item} ." for item, n in state.inventory for _ in range(n))
        else:
            parts.append("have nothing .")
        return " ".join(parts)

    def craftable(self, state: CraftState, item: str) -> bool:
        ingredients = state.book.recipe_map.get(item)
        return ingredients is not None and all(state.count(i) > 0 for i in ingredients)

    def actions(self, state: CraftState) -> list[str]:
        if state.done:
            return []
        out = ["inventory"]
        out.extend(f"get {b}" for b in state.book.bases)
        out.extend(f"craft {item}" for item, _ in state.book.recipes if self.craftable(state, item))
        return out

    def transition(self, state: CraftState, action: str) -> Outcome:
        book = state.book
        verb, _, arg = action.strip().partition(" ")
        inventory = state.inventory
        if action == "inventory":
            feedback = "inventory checked ."
        elif verb == "get" and arg in book.bases:
            inventory = _add(inventory, arg, 1)
            feedback = f"got {arg} ."
        elif verb == "craft" and self.craftable(state, arg):
            for ing in book.recipe_map[arg]:
                inventory = _add(inventory, ing, -1)
            inventory = _add(inventory, arg, 1)
            feedback = f"crafted {arg} ."
        else:
            feedback = INVALID_ACTION
        new = CraftState(book, inventory)
        if new.count(book.goal) > 0:
            new = CraftState(book, inventory, done=True)
            return Outcome(new, self.render(new, feedback), 1.0, True)
        return Outcome(new, self.render(new, feedback), 0.0, False)

    def solve(self, task: TaskSpec) -> list[str]:
        book = self.book(task)
        return bfs_plan(book, book.tree_items())


def bfs_plan(book: CraftBook, items: set[str] | None = None) -> list[str]:
    """Breadth-first search over inventory multisets.

    ``items`` restricts the search to actions touching those items; passing
    ``None`` searches the whole recipe book. Counts are capped at the number
    of recipes that consume an item (plus one for the goal), which keeps the
    space finite without excluding any shortest plan.
    """
    rmap = book.recipe_map
    if items is None:
        items = set(book.bases) | set(rmap)
    need: dict[str, int] = {book.goal: 1}
    for item, ings in rmap.items():
        for ing in ings:
            need[ing] = need.get(ing, 0) + 1
    gets = [b for b in book.bases if b in items]
    crafts = [i for i, _ in book.recipes if i in items]
    start: tuple[tuple[str, int], ...] = ()
    parent: dict[tuple, tuple] = {start: (None, "")}
    queue = deque([start])
    while queue:
        inv = queue.popleft()
        counts = dict(inv)
        moves = []
        for b in gets:
            if counts.get(b, 0) < need.get(b, 0):
                moves.append((f"get {b}", _add(inv, b, 1)))
        for item in crafts:
            if counts.get(item, 0) < need.get(item, 0) and all(counts.get(i, 0) > 0 for i in rmap[item]):
                nxt = inv
                for ing in rmap[item]:
                    nxt = _add(nxt, ing, -1)
                moves.append((f"craft {item}", _add(nxt, item, 1)))
        for action, nxt in moves:
            if nxt in parent:
                continue
            parent[nxt] = (inv, action)
            if dict(nxt).get(book.goal, 0) > 0:
                plan = []
                node = nxt
                while parent[node][0] is not None:
                    prev, act = parent[node]
                    plan.append(act)
                    node = prev
                return plan[::-1]
            queue.append(nxt)
    return []


def validate_book(book: CraftBook, difficulty: int) -> None:
    """Check the structural invariants the generator promises."""
    rmap = book.recipe_map
    if tree_depth(book) != difficulty:
        raise ValidationError("crafting tree depth does not match difficulty")
    if set(rmap) & set(book.bases):
        raise ValidationError("an item is both base and crafted")
    for ings in rmap.values():
        for ing in ings:
            if ing not in rmap and ing not in book.bases:
                raise ValidationError(f"ingredient {ing} has no source")
