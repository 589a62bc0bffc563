"""Feature-hashed linear-softmax policy over candidate actions.

Features for a (history, action) pair:

* unigrams and adjacent bigrams of ``history || action`` after lowercasing
  and whitespace tokenization;
* mention features: for every argument token of the action (tokens after
  the verb) that also occurs in the history, the verb paired with the
  token immediately left and right of each occurrence (``verb<left``,
  ``verb>right``).

Each feature string is hashed with FNV-1a-64 and reduced modulo ``dim``.
N-gram features contain no history-action cross terms. Without mention
features the softmax would be blind to the state.

Features shared by every candidate cancel out of both the softmax and the
score function, so the hot path (:class:`CandidateBlock`) only materializes
candidate-specific indices. :func:`featurize` returns the full vector.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import NumericError, ValidationError
from .rng import RngStream

DIM = 1 << 16
HISTORY_WINDOW = 4
SEPARATOR = "||"
FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1
_START, _END = "<s>", "</s>"
CHECKPOINT_MAGIC = b"AGRL1"


@lru_cache(maxsize=1 << 17)
def fnv1a64(token: str) -> int:
    h = FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def render_history(observations: list[str], actions: list[str], window: int = HISTORY_WINDOW) -> str:
    """Text of the last ``window`` turns: o, a, o, a, ..., o (current)."""
    if len(observations) != len(actions) + 1:
        raise ValidationError("need exactly one more observation than actions")
    parts: list[str] = []
    start = max(0, len(observations) - window)
    for k in range(start, len(observations)):
        parts.append(observations[k])
        if k < len(actions):
            parts.append(actions[k])
    return " ".join(parts)


# --------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class FeatureVector:
    """Sparse non-negative count vector; ``indices`` sorted and unique."""

    indices: np.ndarray
    counts: np.ndarray
    dim: int

    def as_dict(self) -> dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.indices, self.counts)}

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.counts
        return out


def _neighbors(htoks: list[str], wanted: set[str]) -> dict[str, set[str]]:
    """Left/right neighbor markers around each occurrence of a wanted token."""
    found: dict[str, set[str]] = {}
    last = len(htoks) - 1
    for j, tok in enumerate(htoks):
        if tok in wanted:
            entry = found.setdefault(tok, set())
            entry.add("<" + (htoks[j - 1] if j > 0 else _START))
            entry.add(">" + (htoks[j + 1] if j < last else _END))
    return found


def _mention_strings(verb: str, args: list[str], neighbors: dict[str, set[str]]) -> list[str]:
    found: set[str] = set()
    for tok in args:
        for n in neighbors.get(tok, ()):
            found.add(verb + n)
    return sorted(found)


@lru_cache(maxsize=1 << 16)
def _action_ngrams(action: str) -> tuple[str, ...]:
    toks = tokenize(action)
    stream = [SEPARATOR] + toks
    return tuple(toks) + tuple(f"{a} {b}" for a, b in zip(stream, stream[1:]))


def feature_strings(history: str, action: str) -> list[str]:
    """Every feature string (with multiplicity) for one pair, before hashing."""
    htoks = tokenize(history)
    atoks = tokenize(action)
    neighbors = _neighbors(htoks, set(atoks[1:]))
    out = list(htoks) + [SEPARATOR]
    out += [f"{a} {b}" for a, b in zip(htoks, htoks[1:])]
    if htoks:
        out.append(f"{htoks[-1]} {SEPARATOR}")
    out += list(_action_ngrams(action))
    if atoks:
        out += _mention_strings(atoks[0], atoks[1:], neighbors)
    return out


def featurize(history: str, action: str, dim: int = DIM) -> FeatureVector:
    idx = np.fromiter((fnv1a64(s) % dim for s in feature_strings(history, action)), dtype=np.int64)
    indices, counts = np.unique(idx, return_counts=True)
    return FeatureVector(indices, counts.astype(np.float64), dim)


def _hashed(strings, dim: int) -> np.ndarray:
    return np.fromiter((fnv1a64(s) % dim for s in strings), dtype=np.int64)


@lru_cache(maxsize=1 << 16)
def _action_indices(action: str, dim: int) -> np.ndarray:
    return _hashed(_action_ngrams(action), dim)


@dataclass(frozen=True)
class CandidateBlock:
    """Candidate-specific feature indices for one decision point.

    ``indices[offsets[i]:offsets[i+1]]`` belong to candidate ``i`` (repeats
    encode counts); ``segments`` maps each index back to its candidate.
    """

    history: str
    actions: tuple[str, ...]
    indices: np.ndarray
    segments: np.ndarray
    offsets: np.ndarray
    dim: int

    def candidate(self, i: int) -> np.ndarray:
        return self.indices[self.offsets[i] : self.offsets[i + 1]]


def candidate_block(history: str, actions, dim: int = DIM) -> CandidateBlock:
    actions = tuple(actions)
    if not actions:
        raise ValidationError("action list is empty")
    return _candidate_block(history, actions, dim)


@lru_cache(maxsize=4096)
def _candidate_block(history: str, actions: tuple[str, ...], dim: int) -> CandidateBlock:
    split = [tokenize(a) for a in actions]
    neighbors = _neighbors(tokenize(history), {t for atoks in split for t in atoks[1:]})
    parts = []
    for a, atoks in zip(actions, split):
        mention = _mention_strings(atoks[0], atoks[1:], neighbors) if atoks else []
        parts.append(np.concatenate([_action_indices(a, dim), _hashed(mention, dim)]))
    lengths = np.array([len(p) for p in parts], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    block = CandidateBlock(
        history,
        actions,
        np.concatenate(parts),
        np.repeat(np.arange(len(actions)), lengths),
        offsets,
        dim,
    )
    for arr in (block.indices, block.segments, block.offsets):
        arr.flags.writeable = False  # shared through the cache
    return block


# --------------------------------------------------------------------------
# policy


@dataclass(frozen=True, eq=False)
class Policy:
    theta: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64)
        if theta.ndim != 1:
            raise ValidationError("theta must be a vector")
        if not np.all(np.isfinite(theta)):
            raise NumericError("theta has non-finite entries")
        if not self.temperature > 0 or not np.isfinite(self.temperature):
            raise ValidationError("temperature must be positive and finite")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, dim: int = DIM, temperature: float = 1.0) -> Policy:
        return cls(np.zeros(dim), temperature)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    def with_temperature(self, temperature: float) -> Policy:
        return Policy(self.theta, temperature)

    def block(self, history: str, actions) -> CandidateBlock:
        return candidate_block(history, actions, self.dim)


@dataclass(frozen=True, eq=False)
class ActionDistribution:
    actions: tuple[str, ...]
    probs: np.ndarray
    log_probs: np.ndarray

    def prob(self, action: str) -> float:
        return float(self.probs[self.index(action)])

    def index(self, action: str) -> int:
        try:
            return self.actions.index(action)
        except ValueError:
            raise ValidationError(f"{action!r} is not a candidate") from None

    def argmax(self) -> str:
        return self.actions[int(np.argmax(self.log_probs))]


def logits(policy: Policy, block: CandidateBlock) -> np.ndarray:
    raw = np.bincount(block.segments, weights=policy.theta[block.indices], minlength=len(block.actions))
    return raw / policy.temperature


def distribution_from_block(policy: Policy, block: CandidateBlock) -> ActionDistribution:
    z = logits(policy, block)
    z = z - z.max()
    log_norm = np.log(np.exp(z).sum())
    log_probs = z - log_norm
    return ActionDistribution(block.actions, np.exp(log_probs), log_probs)


def action_distribution(policy: Policy, history: str, actions) -> ActionDistribution:
    return distribution_from_block(policy, policy.block(history, actions))


def inverse_cdf(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u, side="right"))
    return min(i, len(probs) - 1)


def sample_from(dist: ActionDistribution, rng: RngStream) -> tuple[str, float, RngStream]:
    u, rng = rng.uniform()
    i = inverse_cdf(dist.probs, u)
    return dist.actions[i], float(dist.log_probs[i]), rng


def sample_action(policy: Policy, history: str, actions, rng: RngStream) -> tuple[str, float, RngStream]:
    return sample_from(action_distribution(policy, history, actions), rng)


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        np.add.at(out, self.indices, self.values)
        return out


def merge_sparse(indices: np.ndarray, values: np.ndarray, dim: int) -> SparseVector:
    uniq, inverse = np.unique(indices, return_inverse=True)
    return SparseVector(uniq, np.bincount(inverse, weights=values, minlength=len(uniq)), dim)


def score_terms(block: CandidateBlock, dist: ActionDistribution, chosen: int, temperature: float):
    """Unmerged (indices, weights) of the score ``d log p(chosen) / d theta``."""
    weights = -dist.probs[block.segments]
    lo, hi = block.offsets[chosen], block.offsets[chosen + 1]
    weights[lo:hi] += 1.0
    return block.indices, weights / temperature


def grad_log_prob(policy: Policy, history: str, actions, chosen: str) -> SparseVector:
    block = policy.block(history, actions)
    dist = distribution_from_block(policy, block)
    idx, w = score_terms(block, dist, dist.index(chosen), policy.temperature)
    return merge_sparse(idx, w, policy.dim)


# --------------------------------------------------------------------------
# divergences


def _check_aligned(p: ActionDistribution, q: ActionDistribution) -> None:
    if p.actions != q.actions:
        raise ValidationError("distributions are over different candidate lists")


def kl_divergence(p: ActionDistribution, q: ActionDistribution) -> float:
    """Exact KL(p || q); terms with p = 0 contribute nothing."""
    _check_aligned(p, q)
    mask = p.probs > 0
    return float(np.sum(p.probs[mask] * (np.log(p.probs[mask]) - np.log(q.probs[mask]))))


def entropy(p: ActionDistribution) -> float:
    probs = np.asarray(p.probs)
    mask = probs > 0
    return float(-np.sum(probs[mask] * np.log(probs[mask])))


def distribution(actions, probs) -> ActionDistribution:
    """Build a distribution from explicit probabilities (tests, reference policies)."""
    probs = np.asarray(probs, dtype=np.float64)
    if len(actions) != len(probs):
        raise ValidationError("actions and probabilities differ in length")
    with np.errstate(divide="ignore"):
        return ActionDistribution(tuple(actions), probs, np.log(probs))


# --------------------------------------------------------------------------
# checkpoints

_HEADER = struct.Struct("<5sQd")


def save_checkpoint(policy: Policy, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _HEADER.pack(CHECKPOINT_MAGIC, policy.dim, policy.temperature) + policy.theta.astype("<f8").tobytes()
    path.write_bytes(data)


def load_checkpoint(path: str | Path) -> Policy:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError("checkpoint is truncated")
    magic, dim, temperature = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise ValidationError("not a policy checkpoint")
    body = data[_HEADER.size :]
    if len(body) != 8 * dim:
        raise ValidationError(f"checkpoint declares {dim} weights but holds {len(body) // 8}")
    return Policy(np.frombuffer(body, dtype="<f8").astype(np.float64), temperature)
