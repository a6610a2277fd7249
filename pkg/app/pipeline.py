"""
Sensitivity sweep orchestration
Loads inputs, builds seed rankings per family, sweeps d, evaluates every
system on every metric, compares orderings against the gold reference,
and writes the report and judgment worksheet files
"""

import json
import logging
import random
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from app.config import ExperimentConfig
from app.correlate import SystemOrdering, kendall_tau, rank_systems, weighted_tau
from app.engine import Bm25Params, InvertedIndex, TokenizerConfig, build_index, top_hit_rate
from app.errors import ConfigError, ReportError, SamplingError
from app.extrapolate import (
    ExtrapolatedQrels,
    GoldSet,
    SeedSource,
    bm25_seed,
    build_fused_seed,
    external_seed,
    extrapolate_seed,
    select_gold,
    write_additions,
    write_extrapolated,
)
from app.fusion import RbcParams
from app.metrics import MetricId, ScoreTable, evaluate_many
from app.trec_io import (
    PassageCollection,
    Qrels,
    Run,
    TopicId,
    TopicSet,
    read_collection,
    read_qrels,
    read_run,
    read_runs_dir,
    read_topics,
)

logger = logging.getLogger(__name__)


@dataclass
class ExperimentInputs:
    collection: PassageCollection
    gold_qrels: Qrels
    runs: Dict[str, Run]
    topics: Optional[TopicSet] = None
    external_first_stage: Optional[Run] = None
    external_second_stage: Optional[Run] = None


@dataclass(frozen=True)
class ScoreRow:
    family: str
    metric: str
    d: int
    mean: float


@dataclass(frozen=True)
class TauRow:
    family: str
    metric: str
    d: int
    tau_unweighted: float
    tau_weighted: float


@dataclass(frozen=True)
class SystemMeanRow:
    family: str
    metric: str
    d: int
    system: str
    mean: float


@dataclass
class SweepResult:
    families: List[str]
    metrics: List[str]
    d_max: int
    scores: List[ScoreRow] = field(default_factory=list)
    taus: List[TauRow] = field(default_factory=list)
    system_means: List[SystemMeanRow] = field(default_factory=list)
    reference: Dict[str, SystemOrdering] = field(default_factory=dict)
    gold_tables: Dict[str, ScoreTable] = field(default_factory=dict)
    tables: Dict[Tuple[str, str, int], ScoreTable] = field(default_factory=dict)
    extrapolated: Dict[str, ExtrapolatedQrels] = field(default_factory=dict)
    seeds: Dict[str, SeedSource] = field(default_factory=dict)
    gold: Optional[GoldSet] = None
    manifest: Dict[str, Any] = field(default_factory=dict)

    def score(self, family: str, metric: str, d: int) -> float:
        for row in self.scores:
            if (row.family, row.metric, row.d) == (family, metric, d):
                return row.mean
        raise KeyError((family, metric, d))

    def tau(self, family: str, metric: str, d: int) -> TauRow:
        for row in self.taus:
            if (row.family, row.metric, row.d) == (family, metric, d):
                return row
        raise KeyError((family, metric, d))


def load_inputs(config: ExperimentConfig) -> ExperimentInputs:
    runs = read_runs_dir(config.runs_dir, depth_cap=config.run_depth)
    return ExperimentInputs(
        collection=read_collection(config.collection),
        gold_qrels=read_qrels(config.gold_qrels, lenient=config.lenient_qrels),
        runs=runs,
        topics=read_topics(config.topics) if config.topics else None,
        external_first_stage=(
            read_run(config.external_first_stage, depth_cap=config.seed_depth)
            if config.external_first_stage
            else None
        ),
        external_second_stage=(
            read_run(config.external_second_stage, depth_cap=config.rerun_depth)
            if config.external_second_stage
            else None
        ),
    )


def build_seed_source(
    family: str,
    gold: GoldSet,
    index: InvertedIndex,
    inputs: ExperimentInputs,
    config: ExperimentConfig,
) -> SeedSource:
    params = Bm25Params(k1=config.k1, b=config.b)
    if family == "BM":
        return bm25_seed(
            gold, index, params, inputs.collection, config.seed_depth,
            max_query_terms=config.max_query_terms,
        )
    if family == "TCT":
        if inputs.external_first_stage is None:
            raise ConfigError("family TCT requires an external first-stage run")
        return external_seed(gold, inputs.external_first_stage)
    if family == "FUS":
        return build_fused_seed(
            gold,
            index,
            params,
            inputs.collection,
            external=inputs.external_first_stage,
            external_second_stage=inputs.external_second_stage,
            fan_out=config.fan_out,
            rerun_depth=config.rerun_depth,
            rbc=RbcParams(phi=config.rbc_phi, depth=config.fused_depth),
            first_stage_depth=config.seed_depth,
            exclude_gold=config.exclude_gold_from_fanout,
            max_query_terms=config.max_query_terms,
        )
    raise ConfigError(f"unknown family {family!r}")


def _check_inputs(inputs: ExperimentInputs, config: ExperimentConfig) -> Qrels:
    if not config.families:
        raise ConfigError("nothing to sweep")
    if len(inputs.runs) < 2:
        raise ConfigError(f"a sweep needs at least 2 system runs, found {len(inputs.runs)}")

    qrels = inputs.gold_qrels
    if inputs.topics is not None:
        unjudged = sorted(set(inputs.topics.entries) - set(qrels.judgments))
        if unjudged:
            logger.warning("Excluding %d topic(s) with no judgments", len(unjudged))
        qrels = qrels.restrict(inputs.topics.entries)
        if not len(qrels):
            raise ConfigError("no topic in the topic file has judgments")

    largest_gold = max((len(grades) for grades in qrels.judgments.values()), default=0)
    needed = config.d_max + largest_gold
    if config.seed_depth < needed:
        raise ConfigError(
            f"seed_depth ({config.seed_depth}) must be >= d_max + max|G(q)| = {needed}"
        )
    if "FUS" in config.families and config.fused_depth < needed:
        raise ConfigError(
            f"fused_depth ({config.fused_depth}) must be >= d_max + max|G(q)| = {needed}"
        )
    return qrels


def sweep(inputs: ExperimentInputs, config: ExperimentConfig) -> SweepResult:
    qrels = _check_inputs(inputs, config)
    metrics = [MetricId.parse(label) for label in config.metrics]
    gold = select_gold(qrels, config.rng_seed)
    index = build_index(inputs.collection, TokenizerConfig(stem=config.stem))

    result = SweepResult(
        families=list(config.families),
        metrics=[metric.label for metric in metrics],
        d_max=config.d_max,
        gold=gold,
    )

    for metric in metrics:
        table = evaluate_many(inputs.runs, qrels, metric, workers=config.workers)
        result.gold_tables[metric.label] = table
        result.reference[metric.label] = rank_systems(table.system_means())

    self_retrieval: Dict[str, float] = {}
    for family in config.families:
        source = build_seed_source(family, gold, index, inputs, config)
        depth = config.fused_depth if family == "FUS" else config.seed_depth
        widest = extrapolate_seed(gold, source, config.d_max, depth=depth, allow_partial=config.allow_partial)
        result.seeds[family] = source
        result.extrapolated[family] = widest
        self_retrieval[family] = top_hit_rate(source.rankings, gold.designated)

        steps = tqdm(range(config.d_max + 1), desc=f"sweep {family}", disable=not config.progress)
        for d in steps:
            judged = widest.truncate(d).to_qrels()
            for metric in metrics:
                table = evaluate_many(inputs.runs, judged, metric, workers=config.workers)
                means = table.system_means()
                ordering = rank_systems(means)
                reference = result.reference[metric.label]
                result.scores.append(ScoreRow(family, metric.label, d, table.mean()))
                result.taus.append(
                    TauRow(
                        family,
                        metric.label,
                        d,
                        kendall_tau(reference, ordering).tau,
                        weighted_tau(reference, ordering, symmetric=config.symmetric_tau).tau,
                    )
                )
                result.system_means.extend(
                    SystemMeanRow(family, metric.label, d, system, mean) for system, mean in means.items()
                )
                if config.keep_tables:
                    result.tables[(family, metric.label, d)] = table
        logger.info(
            "Family %s: swept d=0..%d over %d systems (%d topics excluded)",
            family,
            config.d_max,
            len(inputs.runs),
            len(widest.excluded),
        )

    result.manifest = {
        "families": list(config.families),
        "metrics": result.metrics,
        "d_max": config.d_max,
        "rng_seed": config.rng_seed,
        "systems": sorted(inputs.runs),
        "topics": len(qrels),
        "self_retrieval_at_1": self_retrieval,
        "seed_params": {family: source.params for family, source in result.seeds.items()},
        "excluded_topics": {family: list(eq.excluded) for family, eq in result.extrapolated.items()},
    }
    return result


def write_sweep_artifacts(result: SweepResult, config: ExperimentConfig, out: Path) -> List[Path]:
    """Extrapolated qrels at d_max, ordered additions, and the run manifest."""
    out = Path(out)
    written: List[Path] = []
    try:
        for family, extrapolated in result.extrapolated.items():
            qrels_path, manifest_path = write_extrapolated(
                extrapolated,
                out / "qrels" / f"{family}.d{extrapolated.d}.qrels",
                rng_seed=config.rng_seed,
                seed_params=result.seeds[family].params,
            )
            written += [qrels_path, manifest_path]
            written.append(write_additions(extrapolated, out / "qrels" / f"{family}.additions.tsv"))

        manifest = {
            **result.manifest,
            "config": json.loads(config.model_dump_json()),
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        manifest_path = out / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(manifest_path)
    except OSError as exc:
        raise ReportError(f"cannot write sweep artifacts to {out}: {exc}") from exc
    return written


def run_sweep(config: ExperimentConfig) -> SweepResult:
    inputs = load_inputs(config)
    result = sweep(inputs, config)
    if config.output_dir is not None:
        write_sweep_artifacts(result, config, config.output_dir)
    return result


def prepare_fused_seed(
    config: ExperimentConfig,
) -> Tuple[SeedSource, GoldSet, PassageCollection, Optional[TopicSet]]:
    """Fused seed rankings for worksheet sampling; system runs are not read."""
    collection = read_collection(config.collection)
    qrels = read_qrels(config.gold_qrels, lenient=config.lenient_qrels)
    topics = read_topics(config.topics) if config.topics else None
    if topics is not None:
        qrels = qrels.restrict(topics.entries)
        if not len(qrels):
            raise ConfigError("no topic in the topic file has judgments")
    inputs = ExperimentInputs(
        collection=collection,
        gold_qrels=qrels,
        runs={},
        topics=topics,
        external_first_stage=(
            read_run(config.external_first_stage, depth_cap=config.seed_depth)
            if config.external_first_stage
            else None
        ),
        external_second_stage=(
            read_run(config.external_second_stage, depth_cap=config.rerun_depth)
            if config.external_second_stage
            else None
        ),
    )
    gold = select_gold(qrels, config.rng_seed)
    index = build_index(collection, TokenizerConfig(stem=config.stem))
    return build_seed_source("FUS", gold, index, inputs, config), gold, collection, topics


# --- judgment worksheet ---------------------------------------------------

WORKSHEET_COLUMNS = [
    "topic",
    "query",
    "rank",
    "passage",
    "passage_text",
    "anchor",
    "anchor_text",
    "gold_identical",
    "consensus",
]
_YES = {"yes", "y", "1", "true"}
_NO = {"no", "n", "0", "false"}


@dataclass(frozen=True)
class WorksheetRow:
    topic: TopicId
    query: str
    rank: int
    passage: str
    passage_text: str
    anchor: str
    anchor_text: str
    gold_identical: bool
    consensus: str = ""


def sample_for_judgment(
    fused_seed: SeedSource,
    gold: GoldSet,
    collection: PassageCollection,
    n: int,
    ranks: Sequence[int],
    rng_seed: int,
    topics: Optional[TopicSet] = None,
) -> List[WorksheetRow]:
    """
    Draw n topics and list the fused-ranking passages at the given ranks,
    each beside the topic's anchor passage g(q) for side-by-side judging.
    """
    if fused_seed.kind != "fused":
        raise SamplingError(f"judgment sampling needs a fused seed source, got {fused_seed.kind}")
    rank_list = sorted(set(ranks))
    if not rank_list or rank_list[0] < 1:
        raise SamplingError(f"ranks must be positive integers, got {list(ranks)}")

    eligible = sorted(topic for topic in fused_seed.rankings if topic in gold.designated)
    if n < 1 or n > len(eligible):
        raise SamplingError(f"cannot sample {n} topics from {len(eligible)} eligible")
    chosen = sorted(random.Random(rng_seed).sample(eligible, n))

    rows: List[WorksheetRow] = []
    for topic in chosen:
        ranked = fused_seed.rankings[topic]
        if rank_list[-1] > len(ranked):
            raise SamplingError(
                f"topic {topic}: rank {rank_list[-1]} exceeds fused ranking depth {len(ranked)}"
            )
        anchor = gold.anchor(topic)
        query = topics.entries.get(topic, "") if topics is not None else ""
        for rank in rank_list:
            passage = ranked.entries[rank - 1].passage
            rows.append(
                WorksheetRow(
                    topic=topic,
                    query=query,
                    rank=rank,
                    passage=passage,
                    passage_text=collection.entries.get(passage, ""),
                    anchor=anchor,
                    anchor_text=collection.entries.get(anchor, ""),
                    gold_identical=passage == anchor,
                )
            )
    return rows


def write_worksheet(rows: Sequence[WorksheetRow], path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame([asdict(row) for row in rows], columns=WORKSHEET_COLUMNS)
        frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
    except OSError as exc:
        raise ReportError(f"cannot write worksheet {path}: {exc}") from exc
    return path


def read_worksheet(path: Path) -> List[WorksheetRow]:
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError) as exc:
        raise ReportError(f"cannot read worksheet {path}: {exc}") from exc
    missing = [column for column in WORKSHEET_COLUMNS if column not in frame.columns]
    if missing:
        raise ReportError(f"worksheet {path} lacks column(s): {', '.join(missing)}")
    return [
        WorksheetRow(
            topic=record["topic"],
            query=record["query"],
            rank=int(record["rank"]),
            passage=record["passage"],
            passage_text=record["passage_text"],
            anchor=record["anchor"],
            anchor_text=record["anchor_text"],
            gold_identical=record["gold_identical"].strip().lower() == "true",
            consensus=record["consensus"],
        )
        for record in frame.to_dict(orient="records")
    ]


def tally_worksheet(rows: Sequence[WorksheetRow]) -> Dict[int, Tuple[int, int]]:
    """rank -> (judged 'as relevant as' the anchor, judged at all)."""
    tally: Dict[int, List[int]] = {}
    for row in rows:
        verdict = row.consensus.strip().lower()
        counts = tally.setdefault(row.rank, [0, 0])
        if not verdict:
            continue
        if verdict in _YES:
            counts[0] += 1
        elif verdict not in _NO:
            raise ReportError(f"topic {row.topic} rank {row.rank}: unrecognised consensus {row.consensus!r}")
        counts[1] += 1
    return {rank: (yes, judged) for rank, (yes, judged) in sorted(tally.items())}


def render_tally(tally: Mapping[int, Tuple[int, int]]) -> str:
    return ", ".join(f"{yes}/{judged}" for _, (yes, judged) in sorted(tally.items()))


# --- report -----------------------------------------------------------------


def _frame(rows: Sequence[Any], columns: List[str]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=columns)


def _summary_text(result: SweepResult, worksheet: Optional[Sequence[WorksheetRow]]) -> str:
    lines = ["Mean score over systems and topics", ""]
    scores = _frame(result.scores, ["family", "metric", "d", "mean"])
    if not scores.empty:
        table = scores.pivot_table(index="d", columns=["family", "metric"], values="mean")
        lines.append(table.to_string(float_format=lambda value: f"{value:.4f}"))
    lines += ["", "Kendall's tau against the gold ordering (unweighted / weighted)", ""]
    for row in result.taus:
        if row.d == result.d_max:
            lines.append(
                f"{row.family:<4} {row.metric:<8} d={row.d:<3} {row.tau_unweighted:.4f} / {row.tau_weighted:.4f}"
            )
    if worksheet:
        tally = tally_worksheet(worksheet)
        lines += [
            "",
            "Fraction judged to be 'as relevant as' the anchor",
            "  ".join(f"d={rank}" for rank in tally),
            render_tally(tally),
        ]
    return "\n".join(lines) + "\n"


def emit_report(
    result: SweepResult, out: Path, worksheet: Optional[Sequence[WorksheetRow]] = None
) -> List[Path]:
    """Write scores.csv, tau.csv, means.csv, plot.tsv and summary.txt."""
    if not result.families:
        raise ConfigError("nothing to sweep")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        scores = _frame(result.scores, ["family", "metric", "d", "mean"])
        taus = _frame(result.taus, ["family", "metric", "d", "tau_unweighted", "tau_weighted"])
        means = _frame(result.system_means, ["family", "metric", "d", "system", "mean"])

        plot = pd.concat(
            [
                scores.rename(columns={"mean": "value"}).assign(series="score"),
                taus.melt(
                    id_vars=["family", "metric", "d"],
                    value_vars=["tau_unweighted", "tau_weighted"],
                    var_name="series",
                    value_name="value",
                ),
            ],
            ignore_index=True,
        )[["family", "metric", "d", "series", "value"]]
        plot = plot.sort_values(["family", "metric", "series", "d"], kind="mergesort").reset_index(drop=True)

        paths = {
            "scores.csv": scores,
            "tau.csv": taus,
            "means.csv": means,
        }
        written: List[Path] = []
        for name, frame in paths.items():
            target = out / name
            frame.to_csv(target, index=False, lineterminator="\n")
            written.append(target)
        plot_path = out / "plot.tsv"
        plot.to_csv(plot_path, sep="\t", index=False, lineterminator="\n")
        written.append(plot_path)

        summary_path = out / "summary.txt"
        summary_path.write_text(_summary_text(result, worksheet), encoding="utf-8")
        written.append(summary_path)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    logger.info("Wrote %d report files to %s", len(written), out)
    return written
