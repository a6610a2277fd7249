"""
FastAPI dependencies for the loaded experiment artifacts
Collection, index and gold qrels are read once from the paths in the
environment and shared by every request
"""

import logging
from functools import lru_cache

from fastapi import Depends, HTTPException, status

from app.config import ServiceSettings
from app.engine import InvertedIndex, TokenizerConfig, build_index, load_index
from app.errors import DataError
from app.trec_io import PassageCollection, Qrels, read_collection, read_qrels

logger = logging.getLogger(__name__)


@lru_cache(maxsize=1)
def get_settings() -> ServiceSettings:
    return ServiceSettings.from_env()


def _unavailable(detail: str) -> HTTPException:
    return HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=detail)


@lru_cache(maxsize=4)
def _load_collection(path: str) -> PassageCollection:
    return read_collection(path)


@lru_cache(maxsize=4)
def _load_index(index_path: str, collection_path: str) -> InvertedIndex:
    if index_path:
        return load_index(index_path)
    logger.info("No index file configured; building one from %s", collection_path)
    return build_index(_load_collection(collection_path), TokenizerConfig())


@lru_cache(maxsize=4)
def _load_qrels(path: str) -> Qrels:
    return read_qrels(path)


def get_collection(settings: ServiceSettings = Depends(get_settings)) -> PassageCollection:
    """
    Passage collection named by SENSITIVITY_COLLECTION_PATH

    Raises:
        HTTPException: 503 when the path is unset or the file cannot be loaded
    """
    if settings.collection_path is None:
        raise _unavailable("SENSITIVITY_COLLECTION_PATH is not configured")
    try:
        return _load_collection(str(settings.collection_path))
    except DataError as exc:
        raise _unavailable(f"collection unavailable: {exc}") from exc


def get_index(settings: ServiceSettings = Depends(get_settings)) -> InvertedIndex:
    if settings.index_path is None and settings.collection_path is None:
        raise _unavailable("neither SENSITIVITY_INDEX_PATH nor SENSITIVITY_COLLECTION_PATH is configured")
    try:
        return _load_index(
            str(settings.index_path) if settings.index_path else "",
            str(settings.collection_path) if settings.collection_path else "",
        )
    except DataError as exc:
        raise _unavailable(f"index unavailable: {exc}") from exc


def get_gold_qrels(settings: ServiceSettings = Depends(get_settings)) -> Qrels:
    if settings.qrels_path is None:
        raise _unavailable("SENSITIVITY_QRELS_PATH is not configured")
    try:
        return _load_qrels(str(settings.qrels_path))
    except DataError as exc:
        raise _unavailable(f"qrels unavailable: {exc}") from exc


def clear_caches() -> None:
    """Forget loaded artifacts (used when the environment changes, e.g. in tests)."""
    for cached in (get_settings, _load_collection, _load_index, _load_qrels):
        cached.cache_clear()
