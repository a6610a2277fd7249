from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class SearchRequest(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={"example": {"query": "what is a honey bee", "depth": 10}}
    )

    query: str = Field(..., min_length=1)
    depth: int = Field(10, ge=1, le=1000)
    k1: float = Field(0.9, ge=0.0)
    b: float = Field(0.4, ge=0.0, le=1.0)


class QueryByPassageRequest(BaseModel):
    passage: str = Field(..., min_length=1)
    depth: int = Field(10, ge=1, le=1000)
    k1: float = Field(0.9, ge=0.0)
    b: float = Field(0.4, ge=0.0, le=1.0)
    max_query_terms: Optional[int] = Field(None, gt=0)


class FuseRequest(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={"example": {"rankings": [["p1", "p2"], ["p2", "p3"]], "phi": 0.5}}
    )

    rankings: List[List[str]] = Field(..., min_length=1)
    topic: str = "query"
    phi: float = Field(0.98, ge=0.0, lt=1.0)
    depth: int = Field(100, ge=1)


class RankedEntry(BaseModel):
    passage: str
    rank: int
    score: float
    text: Optional[str] = None


class RankingResponse(BaseModel):
    topic: str
    tag: str
    entries: List[RankedEntry]
