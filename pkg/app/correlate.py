"""
System orderings and Kendall's tau.

The top-weighted variant gives the system at rank k the weight 1/(k+1) and
weights each pair by the sum of its two members' weights, with ranks taken
from the reference ordering.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

from app.errors import DataError, DuplicateError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemOrdering:
    entries: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        for (tag_a, score_a), (tag_b, score_b) in zip(self.entries, self.entries[1:]):
            if score_a < score_b or (score_a == score_b and tag_a >= tag_b):
                raise DataError(f"ordering is not sorted at {tag_a!r} / {tag_b!r}")

    def systems(self) -> List[str]:
        return [tag for tag, _ in self.entries]

    def ranks(self) -> Dict[str, int]:
        return {tag: rank for rank, (tag, _) in enumerate(self.entries, start=1)}

    def reversed(self) -> "SystemOrdering":
        # positions become scores so tied systems flip too
        flipped = [(tag, float(rank)) for rank, (tag, _) in enumerate(self.entries, start=1)][::-1]
        return SystemOrdering(entries=tuple(flipped))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class TauResult:
    tau: float
    weighted: bool
    n_systems: int


def rank_systems(means: Union[Mapping[str, float], Iterable[Tuple[str, float]]]) -> SystemOrdering:
    """Order systems by mean score, best first, ties by ascending tag."""
    pairs = list(means.items()) if isinstance(means, Mapping) else list(means)
    tags = [tag for tag, _ in pairs]
    if len(set(tags)) != len(tags):
        dupes = sorted({tag for tag in tags if tags.count(tag) > 1})
        raise DuplicateError(f"duplicate system tags: {', '.join(dupes)}")
    if len(pairs) < 2:
        raise DataError(f"ranking needs at least 2 systems, got {len(pairs)}")
    ordered = sorted(((tag, float(score)) for tag, score in pairs), key=lambda item: (-item[1], item[0]))
    return SystemOrdering(entries=tuple(ordered))


def _aligned_ranks(reference: SystemOrdering, other: SystemOrdering) -> Tuple[List[str], Dict[str, int], Dict[str, int]]:
    ref_ranks = reference.ranks()
    other_ranks = other.ranks()
    if set(ref_ranks) != set(other_ranks):
        only_ref = sorted(set(ref_ranks) - set(other_ranks))
        only_other = sorted(set(other_ranks) - set(ref_ranks))
        raise DataError(
            f"orderings cover different systems (only in reference: {only_ref[:5]}, only in other: {only_other[:5]})"
        )
    return reference.systems(), ref_ranks, other_ranks


def _pair_signs(systems: Sequence[str], ref_ranks: Mapping[str, int], other_ranks: Mapping[str, int]):
    for i, first in enumerate(systems):
        for second in systems[i + 1:]:
            same = (ref_ranks[first] - ref_ranks[second]) * (other_ranks[first] - other_ranks[second]) > 0
            yield first, second, 1 if same else -1


def kendall_tau(reference: SystemOrdering, other: SystemOrdering) -> TauResult:
    systems, ref_ranks, other_ranks = _aligned_ranks(reference, other)
    n = len(systems)
    balance = sum(sign for _, _, sign in _pair_signs(systems, ref_ranks, other_ranks))
    pairs = n * (n - 1) // 2
    return TauResult(tau=balance / pairs if pairs else 1.0, weighted=False, n_systems=n)


def _anchored_weighted(systems: Sequence[str], anchor: Mapping[str, int], ref_ranks, other_ranks) -> float:
    numerator = 0.0
    denominator = 0.0
    for first, second, sign in _pair_signs(systems, ref_ranks, other_ranks):
        weight = 1.0 / (anchor[first] + 1) + 1.0 / (anchor[second] + 1)
        numerator += sign * weight
        denominator += weight
    return numerator / denominator if denominator else 1.0


def weighted_tau(reference: SystemOrdering, other: SystemOrdering, symmetric: bool = False) -> TauResult:
    """
    Top-weighted tau with hyperbolic rank weights.

    symmetric=True averages the reference-anchored and other-anchored values.
    """
    systems, ref_ranks, other_ranks = _aligned_ranks(reference, other)
    tau = _anchored_weighted(systems, ref_ranks, ref_ranks, other_ranks)
    if symmetric:
        tau = (tau + _anchored_weighted(systems, other_ranks, ref_ranks, other_ranks)) / 2.0
    return TauResult(tau=tau, weighted=True, n_systems=len(systems))


def tau_curve(
    reference: SystemOrdering,
    orderings: Mapping[int, SystemOrdering],
    weighted: bool,
    symmetric: bool = False,
) -> List[Tuple[int, float]]:
    curve = []
    for d in sorted(orderings):
        if weighted:
            result = weighted_tau(reference, orderings[d], symmetric=symmetric)
        else:
            result = kendall_tau(reference, orderings[d])
        curve.append((d, result.tau))
    return curve
