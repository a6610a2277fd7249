import json
from pathlib import Path

import pytest

from app.config import load_experiment_config
from app.pipeline import run_sweep
from app.synthetic import make_synthetic_experiment, write_synthetic
from app.trec_io import PassageCollection, RankedList


def ranked(topic, passages, tag=""):
    """RankedList in the given order (scores strictly decreasing)."""
    return RankedList.from_scores(topic, [(pid, float(len(passages) - i)) for i, pid in enumerate(passages)], tag=tag)


@pytest.fixture
def tiny_collection():
    return PassageCollection(
        entries={
            "p1": "the quick brown fox jumps over the lazy dog",
            "p2": "a quick brown dog runs",
            "p3": "lazy afternoons in the sun",
            "p4": "foxes and dogs are not friends",
            "p5": "completely unrelated text about garden snails",
        }
    )


@pytest.fixture(scope="session")
def synthetic():
    return make_synthetic_experiment()


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory, synthetic):
    out = tmp_path_factory.mktemp("synthetic")
    write_synthetic(synthetic, out, d_max=20)
    return out


@pytest.fixture(scope="session")
def synthetic_config_path(synthetic_dir):
    return synthetic_dir / "experiment.json"


@pytest.fixture(scope="session")
def full_sweep(synthetic_config_path):
    """All three families over d = 0..20 with per-(system, topic) tables kept."""
    config = load_experiment_config(
        synthetic_config_path, {"keep_tables": True, "output_dir": str(synthetic_config_path.parent / "sweep")}
    )
    return config, run_sweep(config)


def write_config(path: Path, **fields) -> Path:
    path.write_text(json.dumps(fields), encoding="utf-8")
    return path
