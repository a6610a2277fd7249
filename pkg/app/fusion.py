"""
Rank-biased centroid fusion.

Each input list gives the passage at rank r the weight (1 - phi) * phi^(r-1);
a passage's fused score is the sum of its weights over all lists.
"""

import logging
import math
from typing import Dict, List, Sequence

from pydantic import BaseModel, ConfigDict, Field

from app.errors import FusionError
from app.trec_io import PassageId, RankedList, Run, TopicId

logger = logging.getLogger(__name__)


class RbcParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    phi: float = Field(0.98, ge=0.0, lt=1.0)
    depth: int = Field(100, gt=0)


def rbc_weight(rank: int, phi: float) -> float:
    if rank < 1:
        raise FusionError(f"rank must be >= 1, got {rank}")
    if phi == 0.0:
        return 1.0 if rank == 1 else 0.0
    return (1.0 - phi) * phi ** (rank - 1)


def rbc_fuse(lists: Sequence[RankedList], params: RbcParams, tag: str = "rbc") -> RankedList:
    if not lists:
        raise FusionError("rbc_fuse needs at least one input list")
    topics = {ranked.topic for ranked in lists}
    if len(topics) > 1:
        raise FusionError(f"cannot fuse lists for different topics: {', '.join(sorted(topics))}")

    contributions: Dict[PassageId, List[float]] = {}
    for ranked in lists:
        for entry in ranked.entries:
            contributions.setdefault(entry.passage, []).append(rbc_weight(entry.rank, params.phi))

    # fsum is exactly rounded, so list order never perturbs scores or ties
    fused = ((passage, math.fsum(weights)) for passage, weights in contributions.items())
    # phi=0 leaves deeper passages with zero weight; they carry no evidence
    fused = [(passage, score) for passage, score in fused if score > 0.0]
    return RankedList.from_scores(lists[0].topic, fused, tag=tag, depth=params.depth)


def rbc_fuse_runs(runs: Sequence[Run], params: RbcParams, tag: str = "rbc") -> Run:
    """Fuse whole runs topic by topic; a run lacking a topic simply contributes nothing."""
    if not runs:
        raise FusionError("rbc_fuse_runs needs at least one input run")
    topics: List[TopicId] = sorted({topic for run in runs for topic in run.lists})
    fused = {}
    for topic in topics:
        lists = [run.lists[topic] for run in runs if topic in run.lists]
        fused[topic] = rbc_fuse(lists, params, tag=tag)
    logger.info("Fused %d runs over %d topics (phi=%s, depth=%d)", len(runs), len(topics), params.phi, params.depth)
    return Run(lists=fused, tag=tag)
