from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field


class EvaluateRequest(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={
            "example": {"rankings": {"1048585": ["7187158", "7187157"]}, "metrics": ["RR@10"]}
        }
    )

    rankings: Dict[str, List[str]] = Field(..., min_length=1)
    metrics: List[str] = Field(default_factory=lambda: ["RR@10", "AP@10", "NDCG@10"], min_length=1)
    system: str = "submitted"


class MetricResult(BaseModel):
    mean: float
    per_topic: Dict[str, float]


class EvaluateResponse(BaseModel):
    system: str
    judged_topics: int
    metrics: Dict[str, MetricResult]


class CorrelateRequest(BaseModel):
    reference: Dict[str, float] = Field(..., min_length=2)
    other: Dict[str, float] = Field(..., min_length=2)
    symmetric: bool = False


class CorrelateResponse(BaseModel):
    n_systems: int
    tau_unweighted: float
    tau_weighted: float
    reference_order: List[str]
    other_order: List[str]


class QrelsStatsResponse(BaseModel):
    n_topics: int
    label_histogram: Dict[int, int]
    single_label_fraction: float
