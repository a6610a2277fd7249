"""
Desk-scale synthetic experiment.

Topical passage clusters over a shared background vocabulary, sparse gold
qrels, systems of graded quality, and an external seed system (BM25 with a
different analyzer and parameters) that stands in for a second retriever.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np

from app.errors import ConfigError
from app.engine import Bm25Params, TokenizerConfig, build_index, query_by_passage_run
from app.extrapolate import select_gold
from app.trec_io import (
    PassageCollection,
    Qrels,
    RankedList,
    Run,
    TopicSet,
    write_qrels_file,
    write_run_file,
    write_tsv,
)

logger = logging.getLogger(__name__)

EXTERNAL_PARAMS = Bm25Params(k1=1.2, b=0.75)
EXTERNAL_TOKENIZER = TokenizerConfig(stem=False)


@dataclass(frozen=True)
class SyntheticExperiment:
    collection: PassageCollection
    topics: TopicSet
    qrels: Qrels
    runs: Dict[str, Run]
    external_first_stage: Run
    external_second_stage: Run
    rng_seed: int


def _words(rng: np.random.Generator, vocab: List[str], count: int) -> List[str]:
    return [vocab[i] for i in rng.integers(0, len(vocab), size=count)]


def make_synthetic_experiment(
    n_passages: int = 200,
    n_topics: int = 25,
    n_systems: int = 10,
    seed: int = 0,
    cluster_size: int = 6,
    run_depth: int = 10,
    external_depth: int = 100,
) -> SyntheticExperiment:
    if n_topics * cluster_size > n_passages:
        raise ConfigError("not enough passages for the requested topic clusters")
    rng = np.random.default_rng(seed)

    background = [f"bg{i:02d}" for i in range(60)]
    topic_vocab = {t: [f"t{t:03d}w{j}" for j in range(8)] for t in range(n_topics)}

    ids = [f"p{i:04d}" for i in rng.permutation(n_passages)]
    clusters: Dict[str, List[str]] = {}
    entries: Dict[str, str] = {}
    for position, pid in enumerate(ids):
        words = ["common"] + _words(rng, background, int(rng.integers(8, 13)))
        topic_index = position // cluster_size
        if topic_index < n_topics:
            words += _words(rng, topic_vocab[topic_index], int(rng.integers(4, 7)))
            clusters.setdefault(f"q{topic_index:03d}", []).append(pid)
        rng.shuffle(words)
        entries[pid] = " ".join(words)
    collection = PassageCollection(entries=entries)

    topics: Dict[str, str] = {}
    judgments: Dict[str, Dict[str, int]] = {}
    for t in range(n_topics):
        topic = f"q{t:03d}"
        topics[topic] = " ".join(_words(rng, topic_vocab[t], 3))
        members = clusters[topic]
        n_gold = 2 if t % 5 == 0 else 1
        judgments[topic] = {pid: 1 for pid in members[:n_gold]}
    qrels = Qrels(judgments)

    runs: Dict[str, Run] = {}
    for s, quality in enumerate(np.linspace(0.9, 0.1, n_systems)):
        tag = f"sys{s:02d}"
        lists = {}
        for topic in sorted(topics):
            members = clusters[topic]
            others = [str(pid) for pid in rng.choice(ids, size=30, replace=False) if pid not in members]
            pool = members + others
            signal = np.array([(pid in members) + (pid in judgments[topic]) for pid in pool], dtype=float)
            scores = quality * signal + (1.0 - quality) * 2.0 * rng.random(len(pool))
            lists[topic] = RankedList.from_scores(
                topic, zip(pool, (round(float(x), 6) for x in scores)), tag=tag, depth=run_depth
            )
        runs[tag] = Run(lists=lists, tag=tag)

    # the external system queries with g(q) for each topic, and with every passage for second-stage use
    gold = select_gold(qrels, seed)
    index = build_index(collection, EXTERNAL_TOKENIZER)
    first = query_by_passage_run(
        index, EXTERNAL_PARAMS, gold.designated, collection, external_depth, tag="ext"
    )
    second = query_by_passage_run(
        index, EXTERNAL_PARAMS, {pid: pid for pid in ids}, collection, external_depth, tag="ext2"
    )

    logger.info(
        "Synthetic experiment: %d passages, %d topics, %d systems", len(entries), len(topics), len(runs)
    )
    return SyntheticExperiment(
        collection=collection,
        topics=TopicSet(entries=topics),
        qrels=qrels,
        runs=runs,
        external_first_stage=first,
        external_second_stage=second,
        rng_seed=seed,
    )


def write_synthetic(experiment: SyntheticExperiment, out_dir: Path, d_max: int = 20) -> Path:
    """Write every input file plus a ready-to-run experiment.json; returns its path."""
    out_dir = Path(out_dir)
    write_tsv(experiment.collection.entries, out_dir / "collection.tsv")
    write_tsv(experiment.topics.entries, out_dir / "topics.tsv")
    write_qrels_file(experiment.qrels, out_dir / "qrels.dev.txt")
    for tag, run in experiment.runs.items():
        write_run_file(run, out_dir / "runs" / f"{tag}.run")
    write_run_file(experiment.external_first_stage, out_dir / "external" / "first_stage.run")
    write_run_file(experiment.external_second_stage, out_dir / "external" / "second_stage.run")

    config = {
        "collection": "collection.tsv",
        "topics": "topics.tsv",
        "gold_qrels": "qrels.dev.txt",
        "runs_dir": "runs",
        "external_first_stage": "external/first_stage.run",
        "external_second_stage": "external/second_stage.run",
        "output_dir": "out",
        "families": ["BM", "TCT", "FUS"],
        "d_max": d_max,
        "rng_seed": experiment.rng_seed,
    }
    config_path = out_dir / "experiment.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config_path
