import random

import pytest
from scipy.stats import kendalltau

from app.correlate import SystemOrdering, kendall_tau, rank_systems, tau_curve, weighted_tau
from app.errors import DataError, DuplicateError


def _ordering(tags):
    """Ordering with tags in the given sequence, best first."""
    return rank_systems({tag: float(len(tags) - i) for i, tag in enumerate(tags)})


def _oracle(reference_tags, other_tags, weighted):
    ref_pos = {tag: i + 1 for i, tag in enumerate(reference_tags)}
    oth_pos = {tag: i + 1 for i, tag in enumerate(other_tags)}
    num = den = 0.0
    for i in range(len(reference_tags)):
        for j in range(i + 1, len(reference_tags)):
            a, b = reference_tags[i], reference_tags[j]
            w = 1 / (ref_pos[a] + 1) + 1 / (ref_pos[b] + 1) if weighted else 1.0
            agree = (ref_pos[a] - ref_pos[b]) * (oth_pos[a] - oth_pos[b]) > 0
            num += w if agree else -w
            den += w
    return num / den


class TestRankSystems:
    def test_best_first(self):
        assert rank_systems({"A": 0.5, "B": 0.7}).systems() == ["B", "A"]

    def test_ties_by_tag(self):
        assert rank_systems({"B": 0.5, "A": 0.5}).systems() == ["A", "B"]

    def test_duplicates(self):
        with pytest.raises(DuplicateError):
            rank_systems([("A", 0.1), ("A", 0.2), ("B", 0.3)])

    def test_needs_two(self):
        with pytest.raises(DataError):
            rank_systems({"A": 1.0})

    def test_unsorted_ordering_rejected(self):
        with pytest.raises(DataError):
            SystemOrdering(entries=(("A", 0.1), ("B", 0.2)))

    def test_reversed_flips_tied_systems(self):
        ordering = rank_systems({"A": 0.5, "B": 0.5, "C": 0.1})
        assert ordering.reversed().systems() == ["C", "B", "A"]
        assert kendall_tau(ordering, ordering.reversed()).tau == -1.0
        assert weighted_tau(ordering, ordering.reversed()).tau == -1.0

    def test_ranks(self):
        assert rank_systems({"A": 0.5, "B": 0.7}).ranks() == {"B": 1, "A": 2}


class TestKendall:
    def test_identity_and_reversal(self):
        ordering = _ordering(list("abcdefg"))
        assert kendall_tau(ordering, ordering).tau == 1.0
        assert kendall_tau(ordering, ordering.reversed()).tau == -1.0

    def test_adjacent_swap_of_three(self):
        assert kendall_tau(_ordering(["a", "b", "c"]), _ordering(["b", "a", "c"])).tau == pytest.approx(1 / 3)

    def test_mismatched_systems(self):
        with pytest.raises(DataError):
            kendall_tau(_ordering(["a", "b"]), _ordering(["a", "c"]))


class TestWeighted:
    def test_identity_and_reversal(self):
        ordering = _ordering(list("abcdefgh"))
        assert weighted_tau(ordering, ordering).tau == 1.0
        assert weighted_tau(ordering, ordering.reversed()).tau == -1.0

    def test_top_swap_hurts_more(self):
        reference = _ordering(["a", "b", "c", "d"])
        top = weighted_tau(reference, _ordering(["b", "a", "c", "d"])).tau
        bottom = weighted_tau(reference, _ordering(["a", "b", "d", "c"])).tau
        assert top < bottom

    def test_deeper_adjacent_swaps_hurt_less(self):
        tags = list("abcdef")
        reference = _ordering(tags)
        values = []
        for k in range(len(tags) - 1):
            swapped = tags[:]
            swapped[k], swapped[k + 1] = swapped[k + 1], swapped[k]
            values.append(weighted_tau(reference, _ordering(swapped)).tau)
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_symmetric_mode(self):
        reference = _ordering(["a", "b", "c", "d", "e"])
        other = _ordering(["c", "a", "b", "e", "d"])
        anchored = weighted_tau(reference, other).tau
        mirrored = weighted_tau(other, reference).tau
        assert weighted_tau(reference, other, symmetric=True).tau == pytest.approx((anchored + mirrored) / 2)
        assert weighted_tau(reference, reference, symmetric=True).tau == 1.0

    def test_mismatched_systems(self):
        with pytest.raises(DataError):
            weighted_tau(_ordering(["a", "b"]), _ordering(["a", "c"]))


def test_random_orderings_match_pairwise_oracle():
    rng = random.Random(2024)
    for trial in range(1000):
        n = rng.randint(2, 50)
        tags = [f"s{i:02d}" for i in range(n)]
        ref_tags = rng.sample(tags, n)
        other_tags = rng.sample(tags, n)
        reference, other = _ordering(ref_tags), _ordering(other_tags)

        plain = kendall_tau(reference, other)
        weighted = weighted_tau(reference, other)
        assert abs(plain.tau - _oracle(ref_tags, other_tags, weighted=False)) < 1e-12
        assert abs(weighted.tau - _oracle(ref_tags, other_tags, weighted=True)) < 1e-12
        assert plain.n_systems == weighted.n_systems == n

        # negating one comparator negates both variants
        assert kendall_tau(reference, other.reversed()).tau == pytest.approx(-plain.tau, abs=1e-12)
        assert weighted_tau(reference, other.reversed()).tau == pytest.approx(-weighted.tau, abs=1e-12)

        if trial < 200:
            ranks_other = [other_tags.index(tag) for tag in ref_tags]
            expected = kendalltau(list(range(n)), ranks_other)[0]
            assert abs(plain.tau - expected) < 1e-12


def test_tau_curve_is_pointwise():
    reference = _ordering(["a", "b", "c", "d"])
    orderings = {0: reference, 1: _ordering(["b", "a", "c", "d"]), 2: _ordering(["d", "c", "b", "a"])}
    assert tau_curve(reference, orderings, weighted=False) == [
        (d, kendall_tau(reference, orderings[d]).tau) for d in (0, 1, 2)
    ]
    curve = tau_curve(reference, orderings, weighted=True)
    assert curve[0] == (0, 1.0)
    assert curve == [(d, weighted_tau(reference, orderings[d]).tau) for d in (0, 1, 2)]
