import logging
from typing import Optional

from fastapi import APIRouter, Depends, HTTPException, status

from app.check import Check
from app.config import ServiceSettings
from app.dependencies import get_collection, get_index, get_settings
from app.engine import Bm25Params, InvertedIndex, query_by_passage, search
from app.errors import DataError
from app.fusion import RbcParams, rbc_fuse
from app.trec_io import PassageCollection, RankedList

from .schemas import FuseRequest, QueryByPassageRequest, RankedEntry, RankingResponse, SearchRequest

logger = logging.getLogger(__name__)

router = APIRouter()


def _response(ranked: RankedList, collection: Optional[PassageCollection] = None) -> RankingResponse:
    return RankingResponse(
        topic=ranked.topic,
        tag=ranked.tag,
        entries=[
            RankedEntry(
                passage=entry.passage,
                rank=entry.rank,
                score=entry.score,
                text=collection.entries.get(entry.passage) if collection is not None else None,
            )
            for entry in ranked.entries
        ],
    )


def _unprocessable(exc: DataError) -> HTTPException:
    return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc))


@router.get("/health")
def health_check(settings: ServiceSettings = Depends(get_settings)):
    return {"status": Check(settings).checking(), "service": "retrieval"}


@router.post("/search", response_model=RankingResponse)
def bm25_search(request: SearchRequest, index: InvertedIndex = Depends(get_index)):
    """BM25 ranking for a short free-text query."""
    ranked = search(index, Bm25Params(k1=request.k1, b=request.b), request.query, request.depth)
    return _response(ranked)


@router.post("/qbp", response_model=RankingResponse)
def passage_search(
    request: QueryByPassageRequest,
    index: InvertedIndex = Depends(get_index),
    collection: PassageCollection = Depends(get_collection),
):
    """
    Query-by-passage: the full text of a collection passage is the query.
    Entries carry passage text so results can be read side by side.
    """
    try:
        ranked = query_by_passage(
            index,
            Bm25Params(k1=request.k1, b=request.b),
            request.passage,
            collection,
            request.depth,
            max_query_terms=request.max_query_terms,
        )
    except DataError as exc:
        raise _unprocessable(exc) from exc
    return _response(ranked, collection)


@router.post("/fuse", response_model=RankingResponse)
def fuse(request: FuseRequest):
    try:
        lists = [
            RankedList.from_scores(request.topic, ((pid, -float(rank)) for rank, pid in enumerate(ranking)))
            for ranking in request.rankings
        ]
        fused = rbc_fuse(lists, RbcParams(phi=request.phi, depth=request.depth))
    except DataError as exc:
        raise _unprocessable(exc) from exc
    return _response(fused)
