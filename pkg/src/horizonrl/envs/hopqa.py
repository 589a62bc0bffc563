"""HopQA: multi-hop question answering over a small fact store.

The question chains ``difficulty`` relations starting from a named entity.
``search <relation> of <entity>`` retrieves up to five triples whose subject
is exactly ``entity``; triples whose relation also matches rank first. ``answer <entity>`` ends the
episode, with reward 1 only for the correct entity.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from ..rng import SplitMixRandom, mix
from .base import INVALID_ACTION, EnvFamily, Outcome, TaskSpec, pseudo_words

RELATIONS = ("author", "capital", "founder", "mentor", "mother", "owner", "rival", "successor")
MAX_RESULTS = 5

Triple = tuple[str, str, str]


@dataclass(frozen=True)
class FactStore:
    triples: tuple[Triple, ...]
    start: str
    chain: tuple[str, ...]  # relations, first hop first
    answer: str

    @property
    def question(self) -> str:
        text = self.start
        for rel in self.chain:
            text = f"the {rel} of {text}"
        return f"what is {text} ?"

    @property
    def relations(self) -> tuple[str, ...]:
        return tuple(sorted({r for _, r, _ in self.triples}))

    def search(self, relation: str, entity: str) -> list[Triple]:
        # a relation-only match would leak later hops, so the subject must match
        scored = sorted(
            (r != relation, i, (s, r, o)) for i, (s, r, o) in enumerate(self.triples) if s == entity
        )
        return [t for _, _, t in scored[:MAX_RESULTS]]

    def follow(self, entity: str, relation: str) -> str | None:
        for s, r, o in self.triples:
            if s == entity and r == relation:
                return o
        return None


@dataclass(frozen=True)
class HopState:
    store: FactStore
    known: tuple[str, ...]  # entities mentioned so far, in discovery order
    last_results: tuple[Triple, ...] = ()
    turns_used: int = 0
    done: bool = False


def hop_distance(store: FactStore, src: str, dst: str) -> int | None:
    """Fewest triples linking ``src`` to ``dst`` along subject->object edges."""
    dist = {src: 0}
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        if cur == dst:
            return dist[cur]
        for s, _, o in store.triples:
            if s == cur and o not in dist:
                dist[o] = dist[cur] + 1
                queue.append(o)
    return None


@lru_cache(maxsize=4096)
def build_store(hops: int, gen_seed: int) -> FactStore:
    rng = SplitMixRandom(mix(gen_seed, 0x40BA))
    names = iter(pseudo_words(rng, 6 * hops + 12))
    chain_entities = [next(names) for _ in range(hops + 1)]
    chain = [rng.choice(RELATIONS) for _ in range(hops)]
    triples: list[Triple] = []
    used: set[tuple[str, str]] = set()

    def add(s: str, r: str, o: str) -> None:
        used.add((s, r))
        triples.append((s, r, o))

    for i, rel in enumerate(chain):
        add(chain_entities[i], rel, chain_entities[i + 1])
    # distractors hang off chain entities and fresh side entities; their objects
    # are always fresh names, so no distractor can shorten the chain
    for i in range(hops + 1):
        subject = chain_entities[i]
        for _ in range(1 + rng.randbelow(2)):
            other = rng.choice([r for r in RELATIONS if (subject, r) not in used])
            side = next(names)
            add(subject, other, side)
            if rng.randbelow(2):
                add(side, rng.choice(RELATIONS), next(names))
    rng.shuffle(triples)
    return FactStore(tuple(triples), chain_entities[0], tuple(chain), chain_entities[-1])


class HopQAFamily(EnvFamily):
    kind = "hopqa"
    difficulties = (1, 2, 3)
    turn_cap = 4

    def instance_goal(self, difficulty: int, gen_seed: int) -> str:
        return build_store(difficulty, gen_seed).question

    def store(self, task: TaskSpec) -> FactStore:
        self.validate(task)
        return build_store(task.difficulty, task.gen_seed)

    def initial_state(self, task: TaskSpec, seed: int = 0) -> HopState:
        store = self.store(task)
        return HopState(store, (store.start,))

    def render(self, state: HopState, feedback: str) -> str:
        parts = [feedback, f"question {state.store.question}"]
        if state.last_results:
            parts.append("results :")
            parts.extend(f"{s} {r} {o} ." for s, r, o in state.last_results)
        return " ".join(parts)

    def actions(self, state: HopState) -> list[str]:
        if state.done:
            return []
        known = sorted(state.known)
        out = [f"search {r} of {e}" for e in known for r in state.store.relations]
        out.extend(f"answer {e}" for e in known)
        return out

    def transition(self, state: HopState, action: str) -> Outcome:
        store = state.store
        turns = state.turns_used + 1
        valid = set(self.actions(state))
        if action not in valid:
            new = HopState(store, state.known, (), turns)
            return Outcome(new, self.render(new, INVALID_ACTION), 0.0, False)
        verb, _, rest = action.partition(" ")
        if verb == "answer":
            correct = rest == store.answer
            new = HopState(store, state.known, (), turns, done=True)
            feedback = "correct answer ." if correct else "wrong answer ."
            return Outcome(new, self.render(new, feedback), 1.0 if correct else 0.0, True)
        relation, _, entity = rest.partition(" of ")
        results = tuple(store.search(relation, entity))
        known = list(state.known)
        for s, _, o in results:
            for e in (s, o):
                if e not in known:
                    known.append(e)
        new = HopState(store, tuple(known), results, turns)
        feedback = f"searched {relation} of {entity} ." if results else "no results ."
        return Outcome(new, self.render(new, feedback), 0.0, False)

    def solve(self, task: TaskSpec) -> list[str]:
        """Breadth-first search over the set of known entities."""
        start = self.initial_state(task)
        seen = {frozenset(start.known)}
        queue = deque([(start, [])])
        while queue:
            state, plan = queue.popleft()
            for action in self.actions(state):
                out = self.transition(state, action)
                if out.done:
                    if out.reward > 0:
                        return plan + [action]
                    continue
                key = frozenset(out.state.known)
                if key not in seen:
                    seen.add(key)
                    queue.append((out.state, plan + [action]))
        return []
