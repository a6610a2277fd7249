import logging

from fastapi import APIRouter, Depends, HTTPException, status

from app.check import Check
from app.config import ServiceSettings
from app.correlate import kendall_tau, rank_systems, weighted_tau
from app.dependencies import get_gold_qrels, get_settings
from app.errors import ConfigError, DataError
from app.metrics import MetricId, evaluate
from app.trec_io import Qrels, RankedList, Run, qrels_stats

from .schemas import (
    CorrelateRequest,
    CorrelateResponse,
    EvaluateRequest,
    EvaluateResponse,
    MetricResult,
    QrelsStatsResponse,
)

logger = logging.getLogger(__name__)

router = APIRouter()


def _unprocessable(exc: Exception) -> HTTPException:
    return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc))


@router.get("/health")
def health_check(settings: ServiceSettings = Depends(get_settings)):
    return {"status": Check(settings).checking(), "service": "evaluation"}


@router.post("/evaluate", response_model=EvaluateResponse)
def evaluate_rankings(request: EvaluateRequest, qrels: Qrels = Depends(get_gold_qrels)):
    """
    Score submitted rankings (topic -> passage ids, best first) against the
    configured gold qrels. Judged topics missing from the submission score 0.
    """
    try:
        metrics = [MetricId.parse(label) for label in request.metrics]
        run = Run(
            lists={
                topic: RankedList.from_scores(
                    topic, ((pid, -float(rank)) for rank, pid in enumerate(passages)), tag=request.system
                )
                for topic, passages in request.rankings.items()
            },
            tag=request.system,
        )
        results = {}
        for metric in metrics:
            table = evaluate(run, qrels, metric, system=request.system)
            results[metric.label] = MetricResult(
                mean=table.mean(),
                per_topic={topic: value for (_, topic), value in sorted(table.values.items())},
            )
    except (ConfigError, DataError) as exc:
        raise _unprocessable(exc) from exc
    return EvaluateResponse(system=request.system, judged_topics=len(qrels), metrics=results)


@router.post("/correlate", response_model=CorrelateResponse)
def correlate(request: CorrelateRequest):
    """Kendall's tau, plain and top-weighted, between two system score maps."""
    try:
        reference = rank_systems(request.reference)
        other = rank_systems(request.other)
        plain = kendall_tau(reference, other)
        weighted = weighted_tau(reference, other, symmetric=request.symmetric)
    except DataError as exc:
        raise _unprocessable(exc) from exc
    return CorrelateResponse(
        n_systems=plain.n_systems,
        tau_unweighted=plain.tau,
        tau_weighted=weighted.tau,
        reference_order=reference.systems(),
        other_order=other.systems(),
    )


@router.get("/qrels-stats", response_model=QrelsStatsResponse)
def gold_qrels_stats(qrels: Qrels = Depends(get_gold_qrels)):
    stats = qrels_stats(qrels)
    return QrelsStatsResponse(
        n_topics=stats.n_topics,
        label_histogram=stats.label_histogram,
        single_label_fraction=stats.single_label_fraction,
    )
