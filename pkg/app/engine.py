"""
BM25 retrieval engine
In-memory inverted index supporting short-query search and query-by-passage
"""

import logging
import math
import re
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from nltk.stem.porter import PorterStemmer
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from app.errors import DataError, IndexFormatError, UnknownPassageError
from app.trec_io import PassageCollection, PassageId, RankedList, Run, TopicId

logger = logging.getLogger(__name__)

_WORD = re.compile(r"[^\W_]+", re.UNICODE)
_stemmer = PorterStemmer()

INDEX_MAGIC = b"SNSX"
INDEX_VERSION = 1
_FLAG_STEM = 0x1


class Bm25Params(BaseModel):
    model_config = ConfigDict(frozen=True)

    k1: float = Field(0.9, ge=0.0)
    b: float = Field(0.4, ge=0.0, le=1.0)


class TokenizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    stem: bool = True


@lru_cache(maxsize=200_000)
def _stem(token: str) -> str:
    # Porter is not idempotent ("agreed" -> "agre" -> "agr"); stem until stable
    current = _stemmer.stem(token)
    while True:
        again = _stemmer.stem(current)
        if again == current:
            return current
        current = again


def tokenize(text: str, stem: bool = True) -> List[str]:
    """Lowercase, split on non-alphanumeric runs, optionally Porter-stem to a fixpoint."""
    tokens = [match.group(0) for match in _WORD.finditer(text.lower())]
    if stem:
        tokens = [_stem(token) for token in tokens]
    return [token for token in tokens if token]


@dataclass
class InvertedIndex:
    postings: Dict[str, Tuple[Tuple[PassageId, int], ...]]
    doc_lengths: Dict[PassageId, int]
    stem: bool = True
    n_docs: int = field(init=False)
    avg_doc_length: float = field(init=False)
    _tf: Dict[str, Dict[PassageId, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.n_docs = len(self.doc_lengths)
        self.avg_doc_length = (
            math.fsum(self.doc_lengths.values()) / self.n_docs if self.n_docs else 0.0
        )
        self._tf = {term: dict(plist) for term, plist in self.postings.items()}

    def document_frequency(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.document_frequency(term)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def _term_weight(self, params: Bm25Params, idf: float, tf: int, passage: PassageId) -> float:
        norm = 1.0 - params.b + params.b * self.doc_lengths[passage] / self.avg_doc_length
        return idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)

    def score(self, params: Bm25Params, query: Counter, passage: PassageId) -> float:
        if passage not in self.doc_lengths:
            raise UnknownPassageError(f"passage {passage} is not in the index")
        total = 0.0
        for term in sorted(query):
            tf = self._tf.get(term, {}).get(passage)
            if tf:
                total += query[term] * self._term_weight(params, self.idf(term), tf, passage)
        return total

    def rank(self, params: Bm25Params, query: Counter, depth: int) -> List[Tuple[PassageId, float]]:
        # term-at-a-time in the same term order as score(), so totals are bit-identical
        totals: Dict[PassageId, float] = {}
        for term in sorted(query):
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            count = query[term]
            for passage, tf in plist:
                totals[passage] = totals.get(passage, 0.0) + count * self._term_weight(
                    params, idf, tf, passage
                )
        ranked = sorted(totals.items(), key=lambda item: (-item[1], item[0]))
        return ranked[:depth]


def build_index(collection: PassageCollection, config: Optional[TokenizerConfig] = None) -> InvertedIndex:
    config = config or TokenizerConfig()
    if not len(collection):
        raise DataError("cannot index an empty collection")

    postings: Dict[str, List[Tuple[PassageId, int]]] = {}
    doc_lengths: Dict[PassageId, int] = {}
    for passage in collection.ids():
        tokens = tokenize(collection.text(passage), stem=config.stem)
        doc_lengths[passage] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((passage, tf))

    # passages were visited in sorted order, so every posting list is sorted
    index = InvertedIndex(
        postings={term: tuple(plist) for term, plist in postings.items()},
        doc_lengths=doc_lengths,
        stem=config.stem,
    )
    if index.avg_doc_length == 0.0:
        raise DataError("collection contains no indexable tokens")
    logger.info(
        "Indexed %d passages, %d terms, avg length %.2f",
        index.n_docs,
        len(index.postings),
        index.avg_doc_length,
    )
    return index


def bm25_score(index: InvertedIndex, params: Bm25Params, query_terms: Iterable[str], passage: PassageId) -> float:
    return index.score(params, Counter(query_terms), passage)


def search(index: InvertedIndex, params: Bm25Params, query: str, depth: int, topic: Optional[TopicId] = None, tag: str = "bm25") -> RankedList:
    query_terms = Counter(tokenize(query, stem=index.stem))
    ranked = index.rank(params, query_terms, depth)
    return RankedList.from_scores(topic or "query", ranked, tag=tag)


def query_by_passage(
    index: InvertedIndex,
    params: Bm25Params,
    seed: PassageId,
    collection: PassageCollection,
    depth: int,
    max_query_terms: Optional[int] = None,
    topic: Optional[TopicId] = None,
    tag: str = "qbp",
) -> RankedList:
    """Rank the collection using the full text of a passage as the query."""
    if seed not in collection:
        raise UnknownPassageError(f"seed passage {seed} is not in the collection")
    tokens = tokenize(collection.text(seed), stem=index.stem)
    if max_query_terms is not None:
        tokens = tokens[:max_query_terms]
    ranked = index.rank(params, Counter(tokens), depth)
    return RankedList.from_scores(topic or seed, ranked, tag=tag)


def query_by_passage_run(
    index: InvertedIndex,
    params: Bm25Params,
    seeds: Mapping[TopicId, PassageId],
    collection: PassageCollection,
    depth: int,
    tag: str = "qbp",
    max_query_terms: Optional[int] = None,
    workers: int = 1,
    progress: bool = False,
) -> Run:
    """Query-by-passage for many seeds; list i is filed under seeds' key i."""
    topics = sorted(seeds)

    def _one(topic: TopicId) -> RankedList:
        return query_by_passage(
            index, params, seeds[topic], collection, depth,
            max_query_terms=max_query_terms, topic=topic, tag=tag,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lists = list(tqdm(pool.map(_one, topics), total=len(topics), desc=tag, disable=not progress))
    else:
        lists = [_one(topic) for topic in tqdm(topics, desc=tag, disable=not progress)]
    return Run(lists=dict(zip(topics, lists)), tag=tag)


def top_hit_rate(rankings: Mapping[str, RankedList], expected: Mapping[str, PassageId]) -> float:
    """Fraction of keys in `expected` whose ranking puts the expected passage first."""
    if not expected:
        return 0.0
    hits = 0
    for key, passage in expected.items():
        ranked = rankings.get(key)
        if ranked is not None and ranked.entries and ranked.entries[0].passage == passage:
            hits += 1
    return hits / len(expected)


def self_retrieval_rate(
    index: InvertedIndex,
    params: Bm25Params,
    collection: PassageCollection,
    seeds: Sequence[PassageId],
    depth: int = 1,
) -> float:
    """Fraction of seeds that come back at rank 1 for their own text."""
    rankings = {seed: query_by_passage(index, params, seed, collection, depth) for seed in seeds}
    return top_hit_rate(rankings, {seed: seed for seed in seeds})


# --- on-disk layout -------------------------------------------------------
#
#   magic "SNSX" | u16 version | u16 flags | u32 n_docs
#   n_docs  x (u16 id_len | id | u32 length)
#   u32 n_terms
#   n_terms x (u16 term_len | term | u32 n_postings | n_postings x (u32 ordinal | u32 tf))
#
# all integers little-endian; strings utf-8; docs and terms in sorted order


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def save_index(index: InvertedIndex, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc_ids = sorted(index.doc_lengths)
    ordinal = {pid: position for position, pid in enumerate(doc_ids)}

    chunks = [INDEX_MAGIC, struct.pack("<HHI", INDEX_VERSION, _FLAG_STEM if index.stem else 0, len(doc_ids))]
    for pid in doc_ids:
        chunks.append(_pack_str(pid))
        chunks.append(struct.pack("<I", index.doc_lengths[pid]))
    terms = sorted(index.postings)
    chunks.append(struct.pack("<I", len(terms)))
    for term in terms:
        plist = index.postings[term]
        chunks.append(_pack_str(term))
        chunks.append(struct.pack("<I", len(plist)))
        chunks.append(b"".join(struct.pack("<II", ordinal[pid], tf) for pid, tf in plist))
    path.write_bytes(b"".join(chunks))
    logger.info("Wrote index (%d docs, %d terms) to %s", len(doc_ids), len(terms), path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def unpack(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise IndexFormatError("index file is truncated")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def string(self) -> str:
        (length,) = self.unpack("<H")
        if self.offset + length > len(self.data):
            raise IndexFormatError("index file is truncated")
        raw = self.data[self.offset:self.offset + length]
        self.offset += length
        return raw.decode("utf-8")


def load_index(path: Path) -> InvertedIndex:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read index {path}: {exc}") from exc
    if data[:4] != INDEX_MAGIC:
        raise IndexFormatError(f"{path} is not an index file (bad magic)")

    reader = _Reader(data)
    reader.offset = 4
    version, flags, n_docs = reader.unpack("<HHI")
    if version != INDEX_VERSION:
        raise IndexFormatError(f"{path}: unsupported index version {version}")

    doc_ids: List[PassageId] = []
    doc_lengths: Dict[PassageId, int] = {}
    for _ in range(n_docs):
        pid = reader.string()
        (length,) = reader.unpack("<I")
        doc_ids.append(pid)
        doc_lengths[pid] = length

    (n_terms,) = reader.unpack("<I")
    postings: Dict[str, Tuple[Tuple[PassageId, int], ...]] = {}
    for _ in range(n_terms):
        term = reader.string()
        (n_postings,) = reader.unpack("<I")
        plist = []
        for _ in range(n_postings):
            position, tf = reader.unpack("<II")
            if position >= n_docs:
                raise IndexFormatError(f"{path}: posting refers to unknown document {position}")
            plist.append((doc_ids[position], tf))
        postings[term] = tuple(plist)
    if reader.offset != len(data):
        raise IndexFormatError(f"{path}: trailing bytes after index body")

    return InvertedIndex(postings=postings, doc_lengths=doc_lengths, stem=bool(flags & _FLAG_STEM))
