import random

import pytest

from app.errors import FusionError
from app.fusion import RbcParams, rbc_fuse, rbc_fuse_runs, rbc_weight
from app.trec_io import Run
from conftest import ranked


def test_weight_at_rank_one():
    assert rbc_weight(1, 0.98) == pytest.approx(0.02)


def test_weight_decays_geometrically():
    assert rbc_weight(3, 0.5) == pytest.approx(0.125)


def test_phi_zero_keeps_only_the_top():
    assert rbc_weight(1, 0.0) == 1.0
    assert [rbc_weight(r, 0.0) for r in range(2, 6)] == [0.0] * 4


def test_single_list_keeps_order():
    lst = ranked("q", ["c", "a", "d", "b"])
    assert rbc_fuse([lst], RbcParams()).passages() == ["c", "a", "d", "b"]


@pytest.mark.parametrize("phi", [0.0, 0.3, 0.5, 0.98])
def test_reversed_pair_ties_broken_by_id(phi):
    fused = rbc_fuse([ranked("q", ["b", "a"]), ranked("q", ["a", "b"])], RbcParams(phi=phi))
    assert fused.passages() == ["a", "b"]


def test_phi_zero_drops_unsupported_passages():
    fused = rbc_fuse([ranked("q", ["a", "b"]), ranked("q", ["c", "d"])], RbcParams(phi=0.0))
    assert fused.passages() == ["a", "c"]


def test_depth_truncates():
    fused = rbc_fuse([ranked("q", list("abcdef"))], RbcParams(depth=3))
    assert fused.passages() == ["a", "b", "c"]


def test_topic_mismatch():
    with pytest.raises(FusionError):
        rbc_fuse([ranked("q1", ["a"]), ranked("q2", ["a"])], RbcParams())


def test_empty_input():
    with pytest.raises(FusionError):
        rbc_fuse([], RbcParams())


@pytest.mark.parametrize("phi", [0.5, 0.8, 0.98])
def test_matches_naive_accumulation(phi):
    rng = random.Random(int(phi * 100))
    pool = [f"d{i:03d}" for i in range(150)]
    lists = [ranked("q", rng.sample(pool, 100)) for _ in range(20)]

    weights = {}
    for lst in lists:
        for rank, pid in enumerate(lst.passages(), start=1):
            weights.setdefault(pid, []).append((1 - phi) * phi ** (rank - 1))
    # sorting each passage's weights makes equal multisets sum identically
    totals = {pid: sum(sorted(ws)) for pid, ws in weights.items()}
    expected = sorted(totals.items(), key=lambda item: (-item[1], item[0]))

    fused = rbc_fuse(lists, RbcParams(phi=phi, depth=len(pool)))
    assert fused.passages() == [pid for pid, _ in expected]
    for entry, (_, total) in zip(fused.entries, expected):
        assert abs(entry.score - total) < 1e-12


def test_input_order_does_not_matter():
    rng = random.Random(5)
    pool = [f"d{i}" for i in range(40)]
    lists = [ranked("q", rng.sample(pool, 20)) for _ in range(8)]
    forward = rbc_fuse(lists, RbcParams(phi=0.9))
    backward = rbc_fuse(list(reversed(lists)), RbcParams(phi=0.9))
    assert forward == backward


def test_fuse_runs_per_topic():
    one = Run(lists={"q1": ranked("q1", ["a", "b"], tag="x"), "q2": ranked("q2", ["c"], tag="x")}, tag="x")
    two = Run(lists={"q1": ranked("q1", ["b", "a"], tag="y")}, tag="y")
    fused = rbc_fuse_runs([one, two], RbcParams(phi=0.5), tag="rbc")
    assert fused.tag == "rbc"
    assert fused.lists["q1"].passages() == ["a", "b"]
    assert fused.lists["q2"].passages() == ["c"]
