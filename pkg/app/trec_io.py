"""
TREC / MSMARCO file formats
Parsing, validation and writing of collections, topics, runs and qrels
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

from app.errors import ConflictError, DataError, DuplicateError, ParseError

logger = logging.getLogger(__name__)

TopicId = str
PassageId = str


def _check_token(value: str, what: str, line_no: Optional[int] = None) -> str:
    if not value or any(ch.isspace() for ch in value):
        raise ParseError(f"{what} {value!r} must be a non-empty token without whitespace", line_no)
    return value


def _lines(data: bytes) -> Iterator[Tuple[int, str]]:
    """Yield (1-based line number, text) for non-blank lines."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"input is not valid UTF-8: {exc}") from exc
    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if line.strip():
            yield line_no, line


def format_score(score: float) -> str:
    # repr is the shortest decimal string that reads back to the same float
    return repr(float(score))


@dataclass(frozen=True)
class ScoredEntry:
    passage: PassageId
    rank: int
    score: float


@dataclass(frozen=True)
class RankedList:
    """One topic's ranking: descending score, ascending passage id on ties."""

    topic: TopicId
    entries: Tuple[ScoredEntry, ...] = ()
    tag: str = ""

    def __post_init__(self):
        _check_token(self.topic, "topic id")
        seen: Set[PassageId] = set()
        previous: Optional[ScoredEntry] = None
        for position, entry in enumerate(self.entries, start=1):
            _check_token(entry.passage, "passage id")
            if entry.rank != position:
                raise DataError(f"topic {self.topic}: rank {entry.rank} at position {position}")
            if not math.isfinite(entry.score):
                raise DataError(f"topic {self.topic}: non-finite score for {entry.passage}")
            if entry.passage in seen:
                raise DuplicateError(f"topic {self.topic}: passage {entry.passage} listed twice")
            if previous is not None and (
                entry.score > previous.score
                or (entry.score == previous.score and entry.passage < previous.passage)
            ):
                raise DataError(
                    f"topic {self.topic}: entries out of order at rank {entry.rank}"
                )
            seen.add(entry.passage)
            previous = entry

    @classmethod
    def from_scores(
        cls,
        topic: TopicId,
        scores: Iterable[Tuple[PassageId, float]],
        tag: str = "",
        depth: Optional[int] = None,
    ) -> "RankedList":
        """Sort (passage, score) pairs into a ranked list, optionally truncated."""
        pairs = sorted(((pid, float(score)) for pid, score in scores), key=lambda item: (-item[1], item[0]))
        if depth is not None:
            pairs = pairs[:depth]
        entries = tuple(
            ScoredEntry(passage=pid, rank=rank, score=score)
            for rank, (pid, score) in enumerate(pairs, start=1)
        )
        return cls(topic=topic, entries=entries, tag=tag)

    def passages(self) -> List[PassageId]:
        return [entry.passage for entry in self.entries]

    def truncate(self, depth: int) -> "RankedList":
        if depth >= len(self.entries):
            return self
        return RankedList(topic=self.topic, entries=self.entries[:depth], tag=self.tag)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Run:
    lists: Dict[TopicId, RankedList] = field(default_factory=dict)
    tag: str = ""

    def __post_init__(self):
        if any(ranked.entries for ranked in self.lists.values()):
            _check_token(self.tag, "run tag")
        for topic, ranked in self.lists.items():
            if ranked.topic != topic:
                raise DataError(f"run {self.tag}: list for {ranked.topic} filed under {topic}")
            if ranked.tag != self.tag:
                raise DataError(f"run {self.tag}: topic {topic} carries tag {ranked.tag!r}")

    def topics(self) -> List[TopicId]:
        return sorted(self.lists)

    def get(self, topic: TopicId) -> Optional[RankedList]:
        return self.lists.get(topic)

    def __len__(self) -> int:
        return len(self.lists)


@dataclass(frozen=True)
class Qrels:
    """Per-topic judged passages with strictly positive grades."""

    judgments: Dict[TopicId, Dict[PassageId, int]] = field(default_factory=dict)

    def __post_init__(self):
        for topic, grades in self.judgments.items():
            if not grades:
                raise DataError(f"qrels topic {topic} has no judged passages")
            for passage, grade in grades.items():
                if grade < 1:
                    raise DataError(f"qrels topic {topic}: non-positive grade {grade} for {passage}")

    def topics(self) -> List[TopicId]:
        return sorted(self.judgments)

    def relevant(self, topic: TopicId) -> frozenset:
        return frozenset(self.judgments.get(topic, {}))

    def grades(self, topic: TopicId) -> Dict[PassageId, int]:
        return dict(self.judgments.get(topic, {}))

    def restrict(self, topics: Iterable[TopicId]) -> "Qrels":
        keep = set(topics)
        return Qrels({topic: dict(grades) for topic, grades in self.judgments.items() if topic in keep})

    def __len__(self) -> int:
        return len(self.judgments)


@dataclass(frozen=True)
class QrelsStats:
    n_topics: int
    label_histogram: Dict[int, int]

    @property
    def single_label_fraction(self) -> float:
        if not self.n_topics:
            return 0.0
        return self.label_histogram.get(1, 0) / self.n_topics

    def render(self) -> str:
        lines = [f"n_topics={self.n_topics}"]
        for labels, count in sorted(self.label_histogram.items()):
            share = 100.0 * count / self.n_topics if self.n_topics else 0.0
            noun = "label" if labels == 1 else "labels"
            lines.append(f"{labels} {noun}: {count} ({share:.1f}%)")
        return "\n".join(lines)


@dataclass(frozen=True)
class PassageCollection:
    entries: Dict[PassageId, str] = field(default_factory=dict)
    degenerate: frozenset = frozenset()

    def text(self, passage: PassageId) -> str:
        return self.entries[passage]

    def ids(self) -> List[PassageId]:
        return sorted(self.entries)

    def __contains__(self, passage: object) -> bool:
        return passage in self.entries

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class TopicSet:
    entries: Dict[TopicId, str] = field(default_factory=dict)

    def text(self, topic: TopicId) -> str:
        return self.entries[topic]

    def __contains__(self, topic: object) -> bool:
        return topic in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def parse_run(data: bytes, depth_cap: Optional[int] = None) -> Run:
    """
    Parse a 6-column TREC run: topic Q0 passage rank score tag.

    Input ranks are ignored; each topic is re-sorted by descending score with
    ascending passage id on ties and re-ranked 1..n, then cut at depth_cap.
    """
    if depth_cap is not None and depth_cap < 1:
        raise ParseError(f"depth cap must be positive, got {depth_cap}")

    scores: Dict[TopicId, Dict[PassageId, float]] = {}
    tags: Set[str] = set()
    for line_no, line in _lines(data):
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(f"expected 6 columns, found {len(parts)}", line_no)
        topic, q0, passage, rank_text, score_text, tag = parts
        if q0 != "Q0":
            raise ParseError(f"second column must be 'Q0', found {q0!r}", line_no)
        try:
            int(rank_text)
        except ValueError as exc:
            raise ParseError(f"non-numeric rank {rank_text!r}", line_no) from exc
        try:
            score = float(score_text)
        except ValueError as exc:
            raise ParseError(f"non-numeric score {score_text!r}", line_no) from exc
        if not math.isfinite(score):
            raise ParseError(f"non-finite score {score_text!r}", line_no)

        per_topic = scores.setdefault(topic, {})
        if passage in per_topic:
            raise DuplicateError(f"line {line_no}: duplicate entry for topic {topic}, passage {passage}")
        per_topic[passage] = score
        tags.add(tag)

    if len(tags) > 1:
        raise ParseError(f"run mixes several tags: {', '.join(sorted(tags))}")
    tag = next(iter(tags), "")
    lists = {
        topic: RankedList.from_scores(topic, per_topic.items(), tag=tag, depth=depth_cap)
        for topic, per_topic in scores.items()
    }
    return Run(lists=lists, tag=tag)


def write_run(run: Run) -> bytes:
    lines = []
    for topic in run.topics():
        for entry in run.lists[topic].entries:
            lines.append(
                f"{topic} Q0 {entry.passage} {entry.rank} {format_score(entry.score)} {run.tag}\n"
            )
    return "".join(lines).encode("utf-8")


def parse_qrels(data: bytes, lenient: bool = False) -> Qrels:
    """
    Parse 4-column TREC qrels: topic iteration passage grade.

    Grade-0 lines are an error unless lenient, in which case they are dropped.
    """
    judgments: Dict[TopicId, Dict[PassageId, int]] = {}
    dropped = 0
    for line_no, line in _lines(data):
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 columns, found {len(parts)}", line_no)
        topic, _iteration, passage, grade_text = parts
        try:
            grade = int(grade_text)
        except ValueError as exc:
            raise ParseError(f"non-integer grade {grade_text!r}", line_no) from exc
        if grade < 1:
            if not lenient:
                raise ParseError(f"non-positive grade {grade} for {topic}/{passage}", line_no)
            dropped += 1
            continue

        per_topic = judgments.setdefault(topic, {})
        if passage in per_topic and per_topic[passage] != grade:
            raise ConflictError(
                f"line {line_no}: conflicting grades {per_topic[passage]} and {grade} for {topic}/{passage}"
            )
        per_topic[passage] = grade

    if dropped:
        logger.warning("Dropped %d non-positive qrels line(s)", dropped)
    return Qrels(judgments)


def write_qrels(qrels: Qrels) -> bytes:
    lines = []
    for topic in qrels.topics():
        grades = qrels.judgments[topic]
        for passage in sorted(grades):
            lines.append(f"{topic} 0 {passage} {grades[passage]}\n")
    return "".join(lines).encode("utf-8")


def _parse_tsv(data: bytes, what: str) -> Dict[str, str]:
    entries: Dict[str, str] = {}
    for line_no, line in _lines(data):
        if "\t" not in line:
            raise ParseError(f"{what} line has no tab separator", line_no)
        key, text = line.split("\t", 1)
        key = _check_token(key.strip(), f"{what} id", line_no)
        if key in entries:
            raise DuplicateError(f"line {line_no}: duplicate {what} id {key}")
        entries[key] = text
    return entries


def load_collection(data: bytes) -> PassageCollection:
    entries = _parse_tsv(data, "passage")
    degenerate = frozenset(pid for pid, text in entries.items() if not text.strip())
    if degenerate:
        logger.warning("Collection holds %d passage(s) with empty text", len(degenerate))
    logger.info("Loaded collection with %d passages", len(entries))
    return PassageCollection(entries=entries, degenerate=degenerate)


def load_topics(data: bytes) -> TopicSet:
    entries = _parse_tsv(data, "topic")
    logger.info("Loaded %d topics", len(entries))
    return TopicSet(entries=entries)


def qrels_stats(qrels: Qrels) -> QrelsStats:
    histogram = Counter(len(grades) for grades in qrels.judgments.values())
    return QrelsStats(n_topics=len(qrels), label_histogram=dict(sorted(histogram.items())))


# --- file helpers ---------------------------------------------------------


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_run(path: Path, depth_cap: Optional[int] = None) -> Run:
    try:
        return parse_run(_read_bytes(path), depth_cap=depth_cap)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def read_qrels(path: Path, lenient: bool = False) -> Qrels:
    try:
        qrels = parse_qrels(_read_bytes(path), lenient=lenient)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    logger.info("Loaded qrels for %d topics from %s", len(qrels), path)
    return qrels


def read_collection(path: Path) -> PassageCollection:
    return load_collection(_read_bytes(path))


def read_topics(path: Path) -> TopicSet:
    return load_topics(_read_bytes(path))


def read_runs_dir(directory: Path, depth_cap: Optional[int] = None) -> Dict[str, Run]:
    """Load every regular file in a directory as one system run, keyed by tag."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"run directory {directory} does not exist")

    runs: Dict[str, Run] = {}
    for path in sorted(p for p in directory.iterdir() if p.is_file() and not p.name.startswith(".")):
        run = read_run(path, depth_cap=depth_cap)
        name = run.tag or path.stem
        if name in runs:
            raise DuplicateError(f"run tag {name!r} appears in more than one file ({path.name})")
        runs[name] = run
    logger.info("Loaded %d system runs from %s", len(runs), directory)
    return runs


def write_run_file(run: Run, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_run(run))
    return path


def write_qrels_file(qrels: Qrels, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_qrels(qrels))
    return path


def write_tsv(entries: Mapping[str, str], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(f"{key}\t{entries[key]}\n" for key in sorted(entries))
    path.write_bytes(body.encode("utf-8"))
    return path
