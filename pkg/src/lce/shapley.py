"""Exact Shapley attribution over concept coalitions.

The utility of a coalition is the model's probability for the originally
predicted class on a composite that keeps the coalition's concept pixels and
replaces everything else with a distribution-matched Gaussian fill. With the
concept count capped, all 2^n coalitions are evaluated and each concept's
value is the classical weighted sum of its marginal contributions

    phi_i = sum over T not containing i of
            |T|! (n - |T| - 1)! / n!  *  (u(T + i) - u(T))

with no sampling involved. One fill image is generated per explanation run
and reused across all coalition composites, so the utility is a
deterministic set function as the Shapley axioms require.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discovery import ConceptSet
from .masks import BinaryMask, DatasetStats, Image, composite, union
from .validation import ConceptCapError, ContractViolationError

MAX_CONCEPTS = 16
EFFICIENCY_TOL = 1e-9

__all__ = [
    "MAX_CONCEPTS",
    "Coalition",
    "UtilityCache",
    "ShapleyResult",
    "Explanation",
    "baseline_fill",
    "coalition_union",
    "utility",
    "shapley_from_utilities",
    "exact_shapley",
    "select_explanation",
]


@dataclass(frozen=True)
class Coalition:
    """A subset of the n concepts, stored as a bitmask over indices 0..n-1."""

    members: int
    n: int

    def __post_init__(self):
        if not (0 <= self.n <= MAX_CONCEPTS):
            raise ContractViolationError(f"coalition universe must have 0..{MAX_CONCEPTS} members")
        if self.members < 0 or self.members >= (1 << self.n):
            raise ContractViolationError(
                f"coalition bitmask {self.members:#x} has bits outside 0..{self.n - 1}"
            )

    @property
    def size(self) -> int:
        return bin(self.members).count("1")

    def contains(self, index: int) -> bool:
        return bool((self.members >> index) & 1)

    def indices(self) -> tuple:
        return tuple(i for i in range(self.n) if self.contains(i))


class UtilityCache:
    """Total map from every coalition bitmask to a probability."""

    __slots__ = ("target_class", "values")

    def __init__(self, target_class: int, values):
        values = np.asarray(values, dtype=np.float64)
        n = values.size.bit_length() - 1
        if values.ndim != 1 or values.size != (1 << n) or values.size < 2:
            raise ContractViolationError(
                f"utility cache must hold 2^n values for n >= 1, got {values.size}"
            )
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ContractViolationError("utilities must lie in [0, 1]")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "target_class", int(target_class))
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("UtilityCache is immutable")

    @property
    def n(self) -> int:
        return self.values.size.bit_length() - 1

    def u(self, coalition) -> float:
        members = coalition.members if isinstance(coalition, Coalition) else int(coalition)
        return float(self.values[members])


@dataclass(frozen=True)
class ShapleyResult:
    """Per-concept contributions plus the run context needed to replay it."""

    phis: tuple
    concept_ids: tuple
    target_class: int
    u_empty: float
    u_full: float
    seed: int | None = None
    fill_stats: DatasetStats | None = None

    def __post_init__(self):
        phis = tuple(float(p) for p in self.phis)
        ids = tuple(self.concept_ids)
        if len(phis) != len(ids) or not phis:
            raise ContractViolationError("phis and concept_ids must be parallel and nonempty")
        if abs(sum(phis) - (self.u_full - self.u_empty)) > EFFICIENCY_TOL:
            raise ContractViolationError(
                "efficiency violated: sum(phi) != u_full - u_empty"
            )
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "concept_ids", ids)

    def to_dict(self) -> dict:
        payload = {
            "target_class": self.target_class,
            "u_empty": self.u_empty,
            "u_full": self.u_full,
            "phis": [
                {"concept_id": cid, "phi": phi}
                for cid, phi in zip(self.concept_ids, self.phis)
            ],
            "seed": self.seed,
            "fill_stats": None,
        }
        if self.fill_stats is not None:
            payload["fill_stats"] = {
                "mean": list(self.fill_stats.mean),
                "std": list(self.fill_stats.std),
            }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ShapleyResult":
        stats = payload.get("fill_stats")
        return cls(
            phis=tuple(entry["phi"] for entry in payload["phis"]),
            concept_ids=tuple(entry["concept_id"] for entry in payload["phis"]),
            target_class=int(payload["target_class"]),
            u_empty=float(payload["u_empty"]),
            u_full=float(payload["u_full"]),
            seed=payload.get("seed"),
            fill_stats=None if stats is None else DatasetStats(tuple(stats["mean"]), tuple(stats["std"])),
        )


@dataclass(frozen=True)
class Explanation:
    """Concepts ranked by contribution, ties broken by id ascending."""

    ranked_concepts: tuple
    top_concept: str
    phis: dict

    def __post_init__(self):
        ranked = tuple(self.ranked_concepts)
        if not ranked or ranked[0] != self.top_concept:
            raise ContractViolationError("top_concept must head the ranking")
        expected = tuple(sorted(ranked, key=lambda cid: (-self.phis[cid], cid)))
        if ranked != expected:
            raise ContractViolationError("ranking inconsistent with phis")
        object.__setattr__(self, "ranked_concepts", ranked)


def baseline_fill(
    stats: DatasetStats, width: int, height: int, channels: int, seed: int
) -> Image:
    """Gaussian fill matched to dataset statistics, clamped to [0, 1].

    Fully determined by the seed. Generated once per explanation run and
    reused for every coalition composite and faithfulness curve step.
    """
    if stats.channels != channels:
        raise ContractViolationError(
            f"stats cover {stats.channels} channels, image has {channels}"
        )
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((height, width, channels))
    data = eps * np.asarray(stats.std) + np.asarray(stats.mean)
    return Image(np.clip(data, 0.0, 1.0).astype(np.float32))


def coalition_union(concepts: ConceptSet, members: int) -> BinaryMask:
    """Union of the member concepts' masks; empty mask for the empty coalition."""
    first = concepts[0].mask
    picked = [c.mask for i, c in enumerate(concepts) if (members >> i) & 1]
    return union(picked, width=first.width, height=first.height)


def utility(
    image: Image,
    concepts: ConceptSet,
    coalition: Coalition,
    model,
    target_class: int,
    fill: Image,
) -> float:
    """Model probability of the target class on the coalition composite."""
    keep = coalition_union(concepts, coalition.members)
    probs = model.predict([composite(image, keep, fill)])[0]
    return float(probs[target_class])


def shapley_from_utilities(values) -> np.ndarray:
    """Exact Shapley values from a complete 2^n utility table.

    ``values[m]`` is the utility of the coalition whose bitmask is ``m``.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size.bit_length() - 1
    if values.size != (1 << n) or n < 1:
        raise ContractViolationError(f"need 2^n utilities with n >= 1, got {values.size}")
    if n > MAX_CONCEPTS:
        raise ConceptCapError(
            f"{n} concepts exceed the exact-enumeration cap of {MAX_CONCEPTS}"
        )
    index = np.arange(1 << n, dtype=np.int64)
    sizes = np.zeros(1 << n, dtype=np.int64)
    for bit in range(n):
        sizes += (index >> bit) & 1
    fact = [math.factorial(s) for s in range(n + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)], dtype=np.float64
    )
    phis = np.empty(n, dtype=np.float64)
    for i in range(n):
        without = index[(index >> i) & 1 == 0]
        marginals = values[without | (1 << i)] - values[without]
        phis[i] = float(np.sum(weight_by_size[sizes[without]] * marginals))
    return phis


def exact_shapley(
    image: Image,
    concepts: ConceptSet,
    model,
    fill: Image,
    *,
    max_batch: int = 64,
    seed: int | None = None,
    fill_stats: DatasetStats | None = None,
) -> ShapleyResult:
    """Evaluate u over all 2^n coalitions and aggregate exactly.

    The target class is the model's argmax on the untouched image, computed
    once here. Composites are batched to the model oracle in ascending
    bitmask order; results are cached per bitmask before aggregation.
    """
    n = len(concepts)
    if n < 1:
        raise ContractViolationError("need at least one concept")
    if n > MAX_CONCEPTS:
        raise ConceptCapError(
            f"{n} concepts would need {1 << n} utility evaluations; "
            f"lower the concept cap to at most {MAX_CONCEPTS}"
        )

    target_class = int(np.argmax(model.predict([image])[0]))

    values = np.empty(1 << n, dtype=np.float64)
    for start in range(0, 1 << n, max_batch):
        stop = min(start + max_batch, 1 << n)
        batch = [
            composite(image, coalition_union(concepts, members), fill)
            for members in range(start, stop)
        ]
        for offset, probs in enumerate(model.predict(batch)):
            values[start + offset] = probs[target_class]

    cache = UtilityCache(target_class, values)
    phis = shapley_from_utilities(cache.values)
    return ShapleyResult(
        phis=tuple(float(p) for p in phis),
        concept_ids=concepts.ids(),
        target_class=target_class,
        u_empty=cache.u(0),
        u_full=cache.u((1 << n) - 1),
        seed=seed,
        fill_stats=fill_stats,
    )


def select_explanation(result: ShapleyResult, concepts: ConceptSet) -> Explanation:
    """Rank concepts by phi descending; the top one is the explanation."""
    if set(result.concept_ids) != set(concepts.ids()):
        raise ContractViolationError("result and concept set disagree on concept ids")
    phis = dict(zip(result.concept_ids, result.phis))
    ranked = tuple(sorted(phis, key=lambda cid: (-phis[cid], cid)))
    return Explanation(ranked_concepts=ranked, top_concept=ranked[0], phis=phis)
