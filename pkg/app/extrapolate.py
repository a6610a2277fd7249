"""
Extrapolated qrels.

For each topic the gold set G(q) is joined with the first d passages of a
clairvoyant ranking S(g(q)) once G(q) itself has been removed from it:

    J_d(q) = G(q) ∪ Top_d(S(g(q)) \\ G(q))

The clairvoyant ranking comes from a seed source: internal BM25
query-by-passage, an external run file, or the RBC fusion of second-stage
query-by-passage runs.
"""

import json
import logging
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel

from app.engine import Bm25Params, InvertedIndex, query_by_passage
from app.errors import DataError, InsufficientDepthError, MissingSecondStageError
from app.fusion import RbcParams, rbc_fuse
from app.trec_io import (
    PassageCollection,
    PassageId,
    Qrels,
    RankedList,
    Run,
    TopicId,
    write_qrels_file,
)

logger = logging.getLogger(__name__)

SeedKind = Literal["internal-bm25", "external-run", "fused"]
Family = Literal["BM", "TCT", "FUS"]
FAMILY_BY_KIND: Dict[str, str] = {"internal-bm25": "BM", "external-run": "TCT", "fused": "FUS"}

# grade given to every deemed-relevant addition
ADDITION_GRADE = 1


@dataclass(frozen=True)
class GoldSet:
    members: Dict[TopicId, frozenset]
    designated: Dict[TopicId, PassageId]
    rng_seed: int = 0
    grades: Dict[TopicId, Dict[PassageId, int]] = field(default_factory=dict)

    def __post_init__(self):
        for topic, anchor in self.designated.items():
            if anchor not in self.members.get(topic, frozenset()):
                raise DataError(f"designated gold {anchor} is not in G({topic})")

    def topics(self) -> List[TopicId]:
        return sorted(self.members)

    def anchor(self, topic: TopicId) -> PassageId:
        return self.designated[topic]

    def gold_grades(self, topic: TopicId) -> Dict[PassageId, int]:
        known = self.grades.get(topic, {})
        return {passage: known.get(passage, 1) for passage in sorted(self.members[topic])}


def select_gold(qrels: Qrels, seed: int) -> GoldSet:
    """Pick g(q) uniformly from G(q); deterministic per (seed, topic)."""
    members: Dict[TopicId, frozenset] = {}
    designated: Dict[TopicId, PassageId] = {}
    for topic in qrels.topics():
        gold = sorted(qrels.judgments[topic])
        if not gold:
            raise DataError(f"topic {topic} has no gold passages")
        members[topic] = frozenset(gold)
        if len(gold) == 1:
            designated[topic] = gold[0]
        else:
            designated[topic] = random.Random(f"{seed}/{topic}").choice(gold)
    return GoldSet(
        members=members,
        designated=designated,
        rng_seed=seed,
        grades={topic: dict(grades) for topic, grades in qrels.judgments.items()},
    )


@dataclass(frozen=True)
class SeedSource:
    kind: SeedKind
    rankings: Dict[TopicId, RankedList]
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def family(self) -> str:
        return FAMILY_BY_KIND[self.kind]

    def ranking(self, topic: TopicId) -> Optional[RankedList]:
        return self.rankings.get(topic)


@dataclass(frozen=True)
class ExtrapolatedQrels:
    base: Qrels
    d: int
    additions: Dict[TopicId, Tuple[PassageId, ...]]
    family: str
    excluded: Tuple[TopicId, ...] = ()

    def __post_init__(self):
        for topic, added in self.additions.items():
            if len(added) != self.d:
                raise DataError(f"topic {topic}: {len(added)} additions, expected {self.d}")
            clash = set(added) & set(self.base.judgments.get(topic, {}))
            if clash:
                raise DataError(f"topic {topic}: additions overlap gold ({sorted(clash)})")

    def truncate(self, d: int) -> "ExtrapolatedQrels":
        if d > self.d:
            raise DataError(f"cannot widen extrapolated qrels from d={self.d} to d={d}")
        return ExtrapolatedQrels(
            base=self.base,
            d=d,
            additions={topic: added[:d] for topic, added in self.additions.items()},
            family=self.family,
            excluded=self.excluded,
        )

    def to_qrels(self) -> Qrels:
        judgments: Dict[TopicId, Dict[PassageId, int]] = {}
        for topic in self.base.topics():
            grades = dict(self.base.judgments[topic])
            for passage in self.additions.get(topic, ()):
                grades[passage] = ADDITION_GRADE
            judgments[topic] = grades
        return Qrels(judgments)


def bm25_seed(
    gold: GoldSet,
    index: InvertedIndex,
    params: Bm25Params,
    collection: PassageCollection,
    depth: int,
    max_query_terms: Optional[int] = None,
) -> SeedSource:
    rankings = {
        topic: query_by_passage(
            index, params, gold.anchor(topic), collection, depth,
            max_query_terms=max_query_terms, topic=topic, tag="bm25-qbp",
        )
        for topic in gold.topics()
    }
    return SeedSource(
        kind="internal-bm25",
        rankings=rankings,
        params={"k1": params.k1, "b": params.b, "seed_depth": depth},
    )


def external_seed(gold: GoldSet, run: Run) -> SeedSource:
    """Wrap an external query-by-passage run (one list per topic, for g(q))."""
    missing = [topic for topic in gold.topics() if topic not in run.lists]
    if missing:
        logger.warning("External seed run %r lacks %d gold topic(s)", run.tag, len(missing))
    return SeedSource(
        kind="external-run",
        rankings={topic: run.lists[topic] for topic in gold.topics() if topic in run.lists},
        params={"external_tag": run.tag},
    )


def extrapolate_seed(
    gold: GoldSet,
    source: SeedSource,
    d: int,
    depth: Optional[int] = None,
    allow_partial: bool = False,
) -> ExtrapolatedQrels:
    """
    Build J_d from a seed source.

    Topics whose ranking cannot supply d non-gold passages fail together in
    one InsufficientDepthError, or are excluded when allow_partial is set.
    """
    if d < 0:
        raise DataError(f"d must be non-negative, got {d}")

    additions: Dict[TopicId, Tuple[PassageId, ...]] = {}
    failures: Dict[TopicId, Tuple[int, int]] = {}
    for topic in gold.topics():
        if d == 0:
            additions[topic] = ()
            continue
        ranked = source.ranking(topic)
        passages = ranked.passages() if ranked is not None else []
        if depth is not None:
            passages = passages[:depth]
        candidates = [p for p in passages if p not in gold.members[topic]]
        if len(candidates) < d:
            failures[topic] = (len(candidates), d)
            continue
        additions[topic] = tuple(candidates[:d])

    if failures:
        if not allow_partial:
            raise InsufficientDepthError(failures)
        logger.warning(
            "Excluding %d topic(s) from %s extrapolation: seed rankings too shallow",
            len(failures),
            source.family,
        )

    base = Qrels({topic: gold.gold_grades(topic) for topic in additions})
    return ExtrapolatedQrels(
        base=base,
        d=d,
        additions=additions,
        family=source.family,
        excluded=tuple(sorted(failures)),
    )


def _first_stage_top(
    ranked: Optional[RankedList], fan_out: int, gold_members: frozenset, exclude_gold: bool
) -> List[PassageId]:
    if ranked is None:
        return []
    passages = ranked.passages()
    if exclude_gold:
        passages = [p for p in passages if p not in gold_members]
    return passages[:fan_out]


def build_fused_seed(
    gold: GoldSet,
    index: InvertedIndex,
    params: Bm25Params,
    collection: PassageCollection,
    external: Optional[Run] = None,
    external_second_stage: Optional[Run] = None,
    fan_out: int = 5,
    rerun_depth: int = 100,
    rbc: Optional[RbcParams] = None,
    first_stage_depth: Optional[int] = None,
    exclude_gold: bool = False,
    max_query_terms: Optional[int] = None,
) -> SeedSource:
    """
    Fused clairvoyant rankings.

    Per topic the top fan_out passages of each first-stage ranking (BM25
    query-by-passage for g(q), plus the external run when given) are issued
    as queries to every second-stage system: BM25, plus the external system
    when its second-stage runs (keyed by query passage id) are supplied. All
    resulting runs, each cut to rerun_depth, are fused with RBC.
    """
    rbc = rbc or RbcParams()
    if fan_out < 1:
        raise DataError(f"fan_out must be positive, got {fan_out}")
    first_depth = first_stage_depth or max(fan_out + max((len(m) for m in gold.members.values()), default=0), rerun_depth)

    # collect the second-stage queries first so a missing external run fails before any work
    queries: Dict[TopicId, List[PassageId]] = {}
    for topic in gold.topics():
        members = gold.members[topic]
        bm25_first = query_by_passage(
            index, params, gold.anchor(topic), collection, first_depth,
            max_query_terms=max_query_terms, topic=topic,
        )
        seeds = _first_stage_top(bm25_first, fan_out, members, exclude_gold)
        if external is not None:
            seeds += _first_stage_top(external.get(topic), fan_out, members, exclude_gold)
        queries[topic] = seeds

    if external_second_stage is not None:
        missing = [
            (topic, passage)
            for topic, seeds in queries.items()
            for passage in seeds
            if passage not in external_second_stage.lists
        ]
        if missing:
            raise MissingSecondStageError(missing)

    rankings: Dict[TopicId, RankedList] = {}
    runs_per_topic: Dict[TopicId, int] = {}
    cache: Dict[PassageId, RankedList] = {}
    for topic, seeds in queries.items():
        second_stage: List[RankedList] = []
        for passage in seeds:
            if passage not in cache:
                cache[passage] = query_by_passage(
                    index, params, passage, collection, rerun_depth,
                    max_query_terms=max_query_terms, topic=passage,
                )
            second_stage.append(_retopic(cache[passage], topic))
            if external_second_stage is not None:
                second_stage.append(_retopic(external_second_stage.lists[passage].truncate(rerun_depth), topic))
        runs_per_topic[topic] = len(second_stage)
        if second_stage:
            rankings[topic] = rbc_fuse(second_stage, rbc, tag="fused")
        else:
            rankings[topic] = RankedList(topic=topic, tag="fused")

    counts = sorted(set(runs_per_topic.values()))
    logger.info("Built fused seed rankings for %d topics (runs fused per topic: %s)", len(rankings), counts)
    return SeedSource(
        kind="fused",
        rankings=rankings,
        params={
            "phi": rbc.phi,
            "fused_depth": rbc.depth,
            "fan_out": fan_out,
            "rerun_depth": rerun_depth,
            "exclude_gold": exclude_gold,
            "external_first_stage": external is not None,
            "external_second_stage": external_second_stage is not None,
            "runs_per_topic": counts,
        },
    )


def _retopic(ranked: RankedList, topic: TopicId) -> RankedList:
    return RankedList(topic=topic, entries=ranked.entries, tag=ranked.tag)


class ExtrapolationManifest(BaseModel):
    family: str
    d: int
    rng_seed: int
    topics: int
    excluded_topics: List[TopicId]
    seed_params: Dict[str, Any]
    created: str


def write_extrapolated(
    extrapolated: ExtrapolatedQrels,
    path: Path,
    rng_seed: int,
    seed_params: Optional[Mapping[str, Any]] = None,
) -> Tuple[Path, Path]:
    """Write extrapolated qrels plus a '<path>.manifest.json' provenance sidecar."""
    path = Path(path)
    write_qrels_file(extrapolated.to_qrels(), path)
    manifest = ExtrapolationManifest(
        family=extrapolated.family,
        d=extrapolated.d,
        rng_seed=rng_seed,
        topics=len(extrapolated.additions),
        excluded_topics=list(extrapolated.excluded),
        seed_params=dict(seed_params or {}),
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    manifest_path = path.with_name(path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path, manifest_path


def write_additions(extrapolated: ExtrapolatedQrels, path: Path) -> Path:
    """Ordered additions as 'topic<TAB>rank<TAB>passage'; any smaller d is a prefix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["topic\trank\tpassage\n"]
    for topic in sorted(extrapolated.additions):
        for rank, passage in enumerate(extrapolated.additions[topic], start=1):
            lines.append(f"{topic}\t{rank}\t{passage}\n")
    path.write_bytes("".join(lines).encode("utf-8"))
    return path
