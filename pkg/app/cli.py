"""
Command-line entry point.

    python -m app.cli <subcommand> [options]

Exit codes: 0 success, 1 internal error, 2 configuration error, 3 data error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from app.config import configure_logging, load_experiment_config, validation_message
from app.correlate import kendall_tau, rank_systems, weighted_tau
from app.engine import (
    Bm25Params,
    TokenizerConfig,
    build_index,
    load_index,
    query_by_passage,
    query_by_passage_run,
    save_index,
    search,
)
from app.errors import EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, ConfigError, DataError, SensitivityError
from app.extrapolate import (
    bm25_seed,
    build_fused_seed,
    external_seed,
    extrapolate_seed,
    select_gold,
    write_extrapolated,
)
from app.fusion import RbcParams, rbc_fuse_runs
from app.metrics import MetricId, evaluate_many
from app.pipeline import (
    emit_report,
    prepare_fused_seed,
    read_worksheet,
    render_tally,
    run_sweep,
    sample_for_judgment,
    tally_worksheet,
    write_worksheet,
)
from app.synthetic import make_synthetic_experiment, write_synthetic
from app.trec_io import (
    Run,
    qrels_stats,
    read_collection,
    read_qrels,
    read_run,
    read_runs_dir,
    read_topics,
    write_run,
    write_run_file,
)

logger = logging.getLogger("app.cli")

DEFAULT_METRICS = ["RR@10", "AP@10", "NDCG@10"]


def _ints(value: str) -> List[int]:
    try:
        return [int(item) for item in value.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from exc


def _words(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _add_bm25_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k1", type=float, default=0.9, help="BM25 k1 (default: 0.9)")
    parser.add_argument("--b", type=float, default=0.4, help="BM25 b (default: 0.4)")
    parser.add_argument("--no-stem", action="store_true", help="disable Porter stemming")


def _bm25(args: argparse.Namespace) -> Bm25Params:
    return Bm25Params(k1=args.k1, b=args.b)


def _load_or_build_index(args: argparse.Namespace, collection=None):
    if getattr(args, "index", None):
        return load_index(args.index)
    if collection is None:
        raise ConfigError("either --index or --collection is required")
    return build_index(collection, TokenizerConfig(stem=not args.no_stem))


def _emit_run(run: Run, out: Optional[Path]) -> None:
    if out:
        write_run_file(run, out)
        logger.info("Wrote run %r (%d topics) to %s", run.tag, len(run), out)
    else:
        sys.stdout.write(write_run(run).decode("utf-8"))


# --- subcommands ------------------------------------------------------------


def cmd_index(args: argparse.Namespace) -> int:
    collection = read_collection(args.collection)
    index = build_index(collection, TokenizerConfig(stem=not args.no_stem))
    save_index(index, args.out)
    return EXIT_OK


def cmd_search(args: argparse.Namespace) -> int:
    collection = read_collection(args.collection) if args.collection else None
    index = _load_or_build_index(args, collection)
    params = _bm25(args)
    if args.query:
        ranked = search(index, params, args.query, args.depth, tag=args.tag)
        _emit_run(Run(lists={ranked.topic: ranked}, tag=args.tag), args.out)
        return EXIT_OK
    if not args.topics:
        raise ConfigError("search needs --query or --topics")
    topics = read_topics(args.topics)
    lists = {
        topic: search(index, params, topics.text(topic), args.depth, topic=topic, tag=args.tag)
        for topic in sorted(topics.entries)
    }
    _emit_run(Run(lists=lists, tag=args.tag), args.out)
    return EXIT_OK


def cmd_qbp(args: argparse.Namespace) -> int:
    collection = read_collection(args.collection)
    index = _load_or_build_index(args, collection)
    params = _bm25(args)
    if args.passage:
        ranked = query_by_passage(
            index, params, args.passage, collection, args.depth,
            max_query_terms=args.max_query_terms, tag=args.tag,
        )
        _emit_run(Run(lists={ranked.topic: ranked}, tag=args.tag), args.out)
        return EXIT_OK
    if args.qrels:
        gold = select_gold(read_qrels(args.qrels, lenient=args.lenient), args.rng_seed)
        seeds = dict(gold.designated)
    elif args.all_passages:
        seeds = {pid: pid for pid in collection.ids()}
    else:
        raise ConfigError("qbp needs --passage, --qrels or --all-passages")
    run = query_by_passage_run(
        index, params, seeds, collection, args.depth, tag=args.tag,
        max_query_terms=args.max_query_terms, workers=args.workers, progress=args.progress,
    )
    _emit_run(run, args.out)
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    runs = [read_run(path, depth_cap=args.input_depth) for path in args.runs]
    fused = rbc_fuse_runs(runs, RbcParams(phi=args.phi, depth=args.depth), tag=args.tag)
    _emit_run(fused, args.out)
    return EXIT_OK


def cmd_extrapolate(args: argparse.Namespace) -> int:
    collection = read_collection(args.collection)
    gold = select_gold(read_qrels(args.qrels, lenient=args.lenient), args.rng_seed)
    params = _bm25(args)
    external = read_run(args.external_first, depth_cap=args.seed_depth) if args.external_first else None
    second = read_run(args.external_second, depth_cap=args.rerun_depth) if args.external_second else None

    if args.family == "TCT":
        if external is None:
            raise ConfigError("family TCT requires --external-first")
        source = external_seed(gold, external)
        depth = args.seed_depth
    else:
        index = _load_or_build_index(args, collection)
        if args.family == "BM":
            source = bm25_seed(gold, index, params, collection, args.seed_depth, max_query_terms=args.max_query_terms)
            depth = args.seed_depth
        else:
            rbc = RbcParams(phi=args.phi, depth=args.fused_depth)
            source = build_fused_seed(
                gold, index, params, collection,
                external=external, external_second_stage=second,
                fan_out=args.fan_out, rerun_depth=args.rerun_depth, rbc=rbc,
                first_stage_depth=args.seed_depth, exclude_gold=args.exclude_gold,
                max_query_terms=args.max_query_terms,
            )
            depth = args.fused_depth

    extrapolated = extrapolate_seed(gold, source, args.d, depth=depth, allow_partial=args.allow_partial)
    qrels_path, manifest_path = write_extrapolated(extrapolated, args.out, rng_seed=args.rng_seed, seed_params=source.params)
    logger.info("Wrote %s and %s", qrels_path, manifest_path)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    qrels = read_qrels(args.qrels, lenient=args.lenient)
    runs: Dict[str, Run] = {}
    if args.runs_dir:
        runs.update(read_runs_dir(args.runs_dir, depth_cap=args.depth_cap))
    for path in args.runs or []:
        run = read_run(path, depth_cap=args.depth_cap)
        runs[run.tag or Path(path).stem] = run
    if not runs:
        raise ConfigError("evaluate needs --runs or --runs-dir")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scores, means = [], []
    for label in args.metric or DEFAULT_METRICS:
        table = evaluate_many(runs, qrels, MetricId.parse(label), workers=args.workers)
        scores.append(table.to_frame())
        means.append(table.means_frame())
        for system, mean in table.system_means().items():
            print(f"{system}\t{table.metric.label}\t{mean:.4f}")
    pd.concat(scores, ignore_index=True).to_csv(out / "scores.csv", index=False, lineterminator="\n")
    pd.concat(means, ignore_index=True).to_csv(out / "means.csv", index=False, lineterminator="\n")
    return EXIT_OK


def _read_means(path: Path, metric: Optional[str]):
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read means file {path}: {exc}") from exc
    if not {"system", "mean"} <= set(frame.columns):
        raise DataError(f"{path} needs 'system' and 'mean' columns")
    if metric is not None and {"metric", "k"} <= set(frame.columns):
        parsed = MetricId.parse(metric)
        frame = frame[(frame["metric"] == parsed.kind) & (frame["k"] == parsed.cutoff)]
    return rank_systems(list(zip(frame["system"].astype(str), frame["mean"].astype(float))))


def cmd_correlate(args: argparse.Namespace) -> int:
    reference = _read_means(args.reference, args.metric)
    other = _read_means(args.other, args.metric)
    tau = kendall_tau(reference, other)
    tau_w = weighted_tau(reference, other, symmetric=args.symmetric)
    print(f"n_systems\t{tau.n_systems}")
    print(f"tau_unweighted\t{tau.tau:.6f}")
    print(f"tau_weighted\t{tau_w.tau:.6f}")
    return EXIT_OK


def _experiment_overrides(args: argparse.Namespace) -> dict:
    return {
        "d_max": args.d_max,
        "families": args.families,
        "output_dir": args.output_dir,
        "rng_seed": args.rng_seed,
        "rbc_phi": args.phi,
        "workers": args.workers,
        "allow_partial": True if args.allow_partial else None,
        "progress": True if args.progress else None,
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_experiment_config(args.config, _experiment_overrides(args))
    if config.output_dir is None:
        raise ConfigError("sweep needs an output directory (config output_dir or --output-dir)")
    result = run_sweep(config)
    worksheet = read_worksheet(args.worksheet) if args.worksheet else None
    emit_report(result, config.output_dir, worksheet=worksheet)
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    config = load_experiment_config(args.config, {"rng_seed": args.rng_seed})
    fused, gold, collection, topics = prepare_fused_seed(config)
    rows = sample_for_judgment(
        fused, gold, collection, n=args.n, ranks=args.ranks, rng_seed=args.sample_seed, topics=topics
    )
    write_worksheet(rows, args.out)
    flagged = sum(1 for row in rows if row.gold_identical)
    logger.info("Wrote %d worksheet rows (%d identical to the anchor) to %s", len(rows), flagged, args.out)
    return EXIT_OK


def cmd_tally(args: argparse.Namespace) -> int:
    tally = tally_worksheet(read_worksheet(args.worksheet))
    print("  ".join(f"d={rank}" for rank in tally))
    print(render_tally(tally))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    print(qrels_stats(read_qrels(args.qrels, lenient=args.lenient)).render())
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    experiment = make_synthetic_experiment(
        n_passages=args.passages, n_topics=args.topics, n_systems=args.systems, seed=args.seed
    )
    config_path = write_synthetic(experiment, args.out, d_max=args.d_max)
    print(config_path)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port, reload=False)
    return EXIT_OK


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensitivity",
        description="Qrels sensitivity analysis: extrapolated judgments, score sweeps and ordering stability.",
    )
    parser.add_argument("--log-level", default=None, help="logging level (default: SENSITIVITY_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and save a BM25 index")
    p.add_argument("--collection", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-stem", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="BM25 search for a query or a topic file")
    p.add_argument("--collection", type=Path)
    p.add_argument("--index", type=Path)
    p.add_argument("--query")
    p.add_argument("--topics", type=Path)
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--tag", default="bm25")
    p.add_argument("--out", type=Path)
    _add_bm25_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("qbp", help="query-by-passage rankings")
    p.add_argument("--collection", type=Path, required=True)
    p.add_argument("--index", type=Path)
    p.add_argument("--passage")
    p.add_argument("--qrels", type=Path, help="rank for g(q) of every judged topic")
    p.add_argument("--all-passages", action="store_true", help="rank for every passage (second-stage runs)")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--max-query-terms", type=int)
    p.add_argument("--tag", default="bm25-qbp")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--progress", action="store_true")
    p.add_argument("--out", type=Path)
    _add_bm25_flags(p)
    p.set_defaults(func=cmd_qbp)

    p = sub.add_parser("fuse", help="RBC fusion of run files")
    p.add_argument("runs", type=Path, nargs="+")
    p.add_argument("--phi", type=float, default=0.98)
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--input-depth", type=int)
    p.add_argument("--tag", default="rbc")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("extrapolate", help="build extrapolated qrels for one family and d")
    p.add_argument("--collection", type=Path, required=True)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--index", type=Path)
    p.add_argument("--family", choices=["BM", "TCT", "FUS"], default="BM")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed-depth", type=int, default=100)
    p.add_argument("--fused-depth", type=int, default=100)
    p.add_argument("--rerun-depth", type=int, default=100)
    p.add_argument("--fan-out", type=int, default=5)
    p.add_argument("--phi", type=float, default=0.98)
    p.add_argument("--external-first", type=Path)
    p.add_argument("--external-second", type=Path)
    p.add_argument("--exclude-gold", action="store_true", help="drop G(q) before picking fan-out queries")
    p.add_argument("--max-query-terms", type=int)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    _add_bm25_flags(p)
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("evaluate", help="score runs against qrels")
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--runs", type=Path, nargs="*")
    p.add_argument("--runs-dir", type=Path)
    p.add_argument("--metric", action="append", default=None)
    p.add_argument("--depth-cap", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("correlate", help="Kendall's tau between two per-system means files")
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--other", type=Path, required=True)
    p.add_argument("--metric")
    p.add_argument("--symmetric", action="store_true")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("sweep", help="run the full sensitivity sweep")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--d-max", type=int)
    p.add_argument("--families", type=_words)
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--rng-seed", type=int)
    p.add_argument("--phi", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--progress", action="store_true")
    p.add_argument("--worksheet", type=Path, help="filled judgment worksheet to summarise")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sample", help="draw a judgment worksheet from the fused rankings")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--ranks", type=_ints, default=[1, 2, 10])
    p.add_argument("--rng-seed", type=int)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("tally", help="summarise a filled judgment worksheet")
    p.add_argument("worksheet", type=Path)
    p.set_defaults(func=cmd_tally)

    p = sub.add_parser("stats", help="qrels label histogram")
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write a synthetic desk-scale experiment")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--passages", type=int, default=200)
    p.add_argument("--topics", type=int, default=25)
    p.add_argument("--systems", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-max", type=int, default=20)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    handler: Callable[[argparse.Namespace], int] = args.func
    try:
        return handler(args)
    except SensitivityError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("invalid parameter: %s", validation_message(exc))
        return EXIT_CONFIG
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
