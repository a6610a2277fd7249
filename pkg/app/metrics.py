"""
Effectiveness metrics at a rank cutoff: RR@k, AP@k and NDCG@k.

Unjudged passages count as non-relevant. Topics judged in the qrels but
missing from a run score 0, so means are comparable across runs.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Collection, Dict, Iterable, List, Literal, Mapping, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from app.errors import ConfigError, EvaluationError
from app.trec_io import PassageId, Qrels, RankedList, Run, TopicId

logger = logging.getLogger(__name__)

Ranking = Union[RankedList, Sequence[PassageId]]


class MetricId(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["RR", "AP", "NDCG"]
    cutoff: int = Field(10, ge=1)

    @property
    def label(self) -> str:
        return f"{self.kind}@{self.cutoff}"

    @classmethod
    def parse(cls, label: str) -> "MetricId":
        kind, sep, cutoff = label.strip().partition("@")
        if not sep:
            raise ConfigError(f"metric {label!r} must look like RR@10")
        try:
            return cls(kind=kind.upper(), cutoff=int(cutoff))
        except ValueError as exc:
            raise ConfigError(f"invalid metric {label!r}: {exc}") from exc

    def __str__(self) -> str:
        return self.label


def _ids(ranking: Ranking) -> List[PassageId]:
    if isinstance(ranking, RankedList):
        return ranking.passages()
    return list(ranking)


def rr_at_k(ranking: Ranking, rel: Collection[PassageId], k: int) -> float:
    for rank, passage in enumerate(_ids(ranking)[:k], start=1):
        if passage in rel:
            return 1.0 / rank
    return 0.0


def ap_at_k(ranking: Ranking, rel: Collection[PassageId], k: int) -> float:
    if not rel:
        return 0.0
    hits = 0
    precisions = []
    for rank, passage in enumerate(_ids(ranking)[:k], start=1):
        if passage in rel:
            hits += 1
            precisions.append(hits / rank)
    return math.fsum(precisions) / min(len(rel), k)


def _discount(rank: int) -> float:
    return 1.0 / math.log2(rank + 1)


def ndcg_at_k(ranking: Ranking, rel_grades: Mapping[PassageId, int], k: int) -> float:
    ideal_gains = sorted((g for g in rel_grades.values() if g > 0), reverse=True)[:k]
    idcg = math.fsum(gain * _discount(rank) for rank, gain in enumerate(ideal_gains, start=1))
    if idcg == 0.0:
        return 0.0
    dcg = math.fsum(
        rel_grades[passage] * _discount(rank)
        for rank, passage in enumerate(_ids(ranking)[:k], start=1)
        if rel_grades.get(passage, 0) > 0
    )
    return min(dcg / idcg, 1.0)


def score_topic(ranking: Ranking, grades: Mapping[PassageId, int], metric: MetricId) -> float:
    if metric.kind == "RR":
        return rr_at_k(ranking, grades, metric.cutoff)
    if metric.kind == "AP":
        return ap_at_k(ranking, grades, metric.cutoff)
    return ndcg_at_k(ranking, grades, metric.cutoff)


@dataclass(frozen=True)
class ScoreTable:
    metric: MetricId
    values: Dict[Tuple[str, TopicId], float] = field(default_factory=dict)

    def systems(self) -> List[str]:
        return sorted({system for system, _ in self.values})

    def topics(self) -> List[TopicId]:
        return sorted({topic for _, topic in self.values})

    def system_means(self) -> Dict[str, float]:
        grouped: Dict[str, List[float]] = {}
        for (system, _topic), value in self.values.items():
            grouped.setdefault(system, []).append(value)
        return {system: math.fsum(vals) / len(vals) for system, vals in sorted(grouped.items())}

    def mean(self) -> float:
        if not self.values:
            return 0.0
        return math.fsum(self.values.values()) / len(self.values)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "system": system,
                "topic": topic,
                "metric": self.metric.kind,
                "k": self.metric.cutoff,
                "score": self.values[(system, topic)],
            }
            for system, topic in sorted(self.values)
        ]
        return pd.DataFrame(rows, columns=["system", "topic", "metric", "k", "score"])

    def means_frame(self) -> pd.DataFrame:
        rows = [
            {"system": system, "metric": self.metric.kind, "k": self.metric.cutoff, "mean": mean}
            for system, mean in self.system_means().items()
        ]
        return pd.DataFrame(rows, columns=["system", "metric", "k", "mean"])


def evaluate(run: Run, qrels: Qrels, metric: MetricId, system: str = "") -> ScoreTable:
    """Score one run on every judged topic; topics the run lacks score 0."""
    topics = qrels.topics()
    if not set(topics) & set(run.lists):
        raise EvaluationError(
            f"run {system or run.tag!r} shares no topics with the qrels ({len(topics)} judged topics)"
        )
    system = system or run.tag
    values: Dict[Tuple[str, TopicId], float] = {}
    for topic in topics:
        ranked = run.get(topic)
        values[(system, topic)] = (
            score_topic(ranked, qrels.judgments[topic], metric) if ranked is not None else 0.0
        )
    return ScoreTable(metric=metric, values=values)


def evaluate_many(
    runs: Mapping[str, Run], qrels: Qrels, metric: MetricId, workers: int = 1
) -> ScoreTable:
    names = sorted(runs)

    def _one(name: str) -> ScoreTable:
        return evaluate(runs[name], qrels, metric, system=name)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tables: Iterable[ScoreTable] = list(pool.map(_one, names))
    else:
        tables = [_one(name) for name in names]

    values: Dict[Tuple[str, TopicId], float] = {}
    for table in tables:
        values.update(table.values)
    return ScoreTable(metric=metric, values=values)
