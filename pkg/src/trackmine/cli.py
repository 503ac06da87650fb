"""Command line entry point: ``trackmine <command> [options]``.

Usage errors exit with status 1 and bad input data with status 2.
Any option can also come from a TOML file passed with ``--config``; keys
use the option's long name with dashes or underscores, either at top level
or inside a table named after the command. Command-line flags win.
The log level is read from ``TRACKMINE_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .clustering import HdbscanConfig, KMeansConfig, hdbscan_fit, kmeans_fit
from .core import AnnotatedTrack, Track
from .embedding import SUMMARY_MODES, pca_fit, pca_transform, summarize_tracks
from .evaluation import (
    LabeledEvalSet,
    cluster_report,
    distribution_report,
    eval_filter,
    outlier_curve,
    parse_fraction_range,
)
from .merge import MergeConfig, compression_report, merge_tracklets
from .synthetic import SyntheticSpec, write_collection

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("trackmine")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    p = _Parser(prog="trackmine", description="Track mining, clustering and evaluation pipeline.")
    p.add_argument("--config", type=Path, help="TOML file with option defaults")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    m = sub.add_parser("merge", help="merge selected tracklets into tracks")
    m.add_argument("--tracklets", type=Path, required=True)
    m.add_argument("--timeline", type=Path, required=True)
    m.add_argument("--out", type=Path, required=True)
    m.add_argument("--gamma", type=float, default=0.5)
    m.add_argument("--lambda-min", type=float, default=0.5)
    m.add_argument("--validate", action="store_true", help="skip malformed lines instead of aborting")

    s = sub.add_parser("summarize", help="one representative embedding per track")
    s.add_argument("--crops", type=Path, required=True, help="crop embeddings, row ids '<track>/<crop>'")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--mode", choices=SUMMARY_MODES, default="closest-to-mean")

    r = sub.add_parser("reduce", help="PCA dimensionality reduction")
    r.add_argument("--in", dest="input", type=Path, required=True)
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--dims", type=int, default=50)
    r.add_argument("--model-out", type=Path, help="save the fitted PCA model as JSON")
    r.add_argument("--model", type=Path, help="apply a saved PCA model instead of fitting")

    c = sub.add_parser("cluster", help="cluster track embeddings")
    c.add_argument("--in", dest="input", type=Path, required=True)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--algo", choices=("kmeans", "hdbscan"), default="hdbscan")
    c.add_argument("--k", type=int)
    c.add_argument("--min-cluster-size", type=int, default=30)
    c.add_argument("--min-samples", type=int)
    c.add_argument("--n-init", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("evaluate", help="AMI against annotations over outlier fractions")
    e.add_argument("--result", type=Path, required=True)
    e.add_argument("--annotations", type=Path, required=True)
    e.add_argument("--min-instances", type=int, default=30)
    e.add_argument("--fractions", default="0:0.5:0.05")
    e.add_argument("--average-method", choices=("arithmetic", "max"), default="arithmetic")
    e.add_argument("--out", type=Path, help="curve CSV (default: stdout)")

    sim = sub.add_parser("simulate", help="write a synthetic long-tail collection")
    sim.add_argument("--out", type=Path, required=True)
    defaults = SyntheticSpec()
    sim.add_argument("--n-categories", type=int, default=defaults.n_categories)
    sim.add_argument("--zipf-exponent", type=float, default=defaults.zipf_exponent)
    sim.add_argument("--n-tracks", type=int, default=defaults.n_tracks)
    sim.add_argument("--embedding-dims", type=int, default=defaults.embedding_dims)
    sim.add_argument("--cluster-spread", type=float, default=defaults.cluster_spread)
    sim.add_argument("--center-separation", type=float, default=defaults.center_separation)
    sim.add_argument("--outlier-fraction", type=float, default=defaults.outlier_fraction)
    sim.add_argument("--tracking-error-fraction", type=float, default=defaults.tracking_error_fraction)
    sim.add_argument("--seed", type=int, default=defaults.seed)
    sim.add_argument("--fragmentation-rate", type=float,
                     help="also write a fragmented tracklet stream and timeline")

    rep = sub.add_parser("report", help="dataset statistics and cluster summaries")
    rep.add_argument("--dir", type=Path, help="run cross-file ingestion checks on a directory")
    rep.add_argument("--tracks", type=Path)
    rep.add_argument("--annotations", type=Path)
    rep.add_argument("--result", type=Path)
    rep.add_argument("--cutoff", type=int, default=30)
    rep.add_argument("--min-cluster-display", type=int, default=80)
    rep.add_argument("--json", dest="as_json", action="store_true", help="print JSON instead of text")
    for name, sp in sub.choices.items():
        sp.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="TOML file with option defaults")
    return p


def _apply_config(parser: _Parser, command: str, path: Path) -> None:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"bad config {path}: {exc}") from exc
    values = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    section = cfg.get(command, {})
    if isinstance(section, dict):
        values.update(section)
    sub = parser._subparsers._group_actions[0].choices[command]
    dests = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    by_flag = {}
    for a in sub._actions:
        for opt in a.option_strings:
            by_flag[opt.lstrip("-")] = a.dest
    defaults = {}
    for key, value in values.items():
        dest = by_flag.get(key) or by_flag.get(key.replace("_", "-")) or (key if key in dests else None)
        if dest is None:
            raise UsageError(f"config key {key!r} is not an option of '{command}'")
        action = dests[dest]
        if action.type is not None and value is not None and not isinstance(value, bool):
            value = action.type(value)
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config value {value!r} for {key!r} not in {sorted(action.choices)}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    # options that were satisfied by the file are no longer mandatory on the command line
    for dest in defaults:
        dests[dest].required = False


def _parse(argv) -> argparse.Namespace:
    parser = _build_parser()
    # locate the command and config file before required options are enforced
    pre = _Parser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    if known.config is not None and known.command in COMMANDS:
        _apply_config(parser, known.command, known.config)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("trackmine: a command is required (see --help)")
    return args


# ---------------------------------------------------------------- commands

def cmd_merge(args) -> int:
    errors: list = []
    strict = not args.validate
    tracklets = io.read_tracklets(args.tracklets, strict=strict, errors=errors)
    timeline = io.read_timeline(args.timeline, strict=strict, errors=errors)
    for err in errors:
        log.warning("skipped: %s", err)
    known = {t.id for t in tracklets}
    missing = timeline.referenced_ids() - known
    if missing:
        raise io.DataError(f"timeline references unknown tracklet {sorted(missing, key=str)[0]!r}", args.timeline)
    cfg = MergeConfig(gamma=args.gamma, lambda_min=args.lambda_min)
    tracks = merge_tracklets(tracklets, timeline, cfg)
    io.write_tracks(args.out, tracks)
    frames = len(timeline.frames)
    per_frame = sum(len(v) for v in timeline.frames.values()) / frames if frames else 0.0
    stats = compression_report(len(tracklets), len(tracks), per_frame, frames)
    print(f"tracklets {len(tracklets)} -> tracks {len(tracks)} "
          f"(tracklet factor {stats.tracklet_factor:.3f})")
    return EXIT_OK


def cmd_summarize(args) -> int:
    crops = io.read_embeddings(args.crops)
    track_ids = [io.embedding_track_id(r) for r in crops.row_ids]
    out = summarize_tracks(crops, track_ids, mode=args.mode)
    io.write_embeddings(args.out, out)
    print(f"{crops.rows} crops -> {out.rows} track embeddings")
    return EXIT_OK


def cmd_reduce(args) -> int:
    emb = io.read_embeddings(args.input)
    if args.model is not None:
        model = io.read_pca(args.model)
        if model.dims != emb.dims:
            raise io.DataError(f"model expects {model.dims} dims, data has {emb.dims}", args.input)
    else:
        limit = min(emb.rows - 1, emb.dims)
        if not 1 <= args.dims <= limit:
            raise UsageError(f"--dims must lie in [1, {limit}] for {emb.rows}x{emb.dims} input")
        model = pca_fit(emb.data, args.dims)
    reduced = pca_transform(model, emb.data)
    io.write_embeddings(args.out, type(emb)(reduced.astype(np.float32), emb.row_ids))
    if args.model_out is not None:
        io.write_pca(args.model_out, model)
    print(f"{emb.dims} -> {model.n_components} dims, {emb.rows} rows")
    return EXIT_OK


def cmd_cluster(args) -> int:
    emb = io.read_embeddings(args.input)
    if args.algo == "kmeans":
        if args.k is None:
            raise UsageError("--k is required for kmeans")
        if emb.rows < args.k:
            raise io.DataError(f"{emb.rows} rows is fewer than k={args.k}", args.input)
        result = kmeans_fit(emb.data, KMeansConfig(k=args.k, n_init=args.n_init, seed=args.seed))
    else:
        cfg = HdbscanConfig(
            min_cluster_size=args.min_cluster_size, min_samples=args.min_samples, seed=args.seed
        )
        result = hdbscan_fit(emb.data, cfg)
    io.write_result(args.out, result, emb.row_ids)
    print(f"{result.n_clusters} clusters, noise fraction {result.noise_fraction:.4f}")
    return EXIT_OK


def _annotated(annotations: dict) -> list[AnnotatedTrack]:
    return [AnnotatedTrack(Track(tid, (), ()), ann) for tid, ann in annotations.items()]


def cmd_evaluate(args) -> int:
    result, row_ids = io.read_result(args.result)
    annotations = io.read_annotations(args.annotations)
    filtered = eval_filter(_annotated(annotations), args.min_instances)
    for reason, count in filtered.excluded.items():
        log.info("excluded %d tracks: %s", count, reason)
    print("excluded: " + ", ".join(f"{k}={v}" for k, v in filtered.excluded.items()), file=sys.stderr)
    truth = {str(t.track.id): t.annotation.category for t in filtered.retained}
    evalset = LabeledEvalSet.from_result(result, row_ids, truth)
    if len(evalset) == 0:
        raise io.DataError("no clustered row has a retained annotation", args.result)
    try:
        fractions = parse_fraction_range(args.fractions)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    curve = outlier_curve(evalset, fractions, average_method=args.average_method)
    text = curve.to_csv()
    if args.out is None:
        sys.stdout.write(text)
    else:
        io.write_curve(args.out, curve)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = SyntheticSpec(
        n_categories=args.n_categories,
        zipf_exponent=args.zipf_exponent,
        n_tracks=args.n_tracks,
        embedding_dims=args.embedding_dims,
        cluster_spread=args.cluster_spread,
        center_separation=args.center_separation,
        outlier_fraction=args.outlier_fraction,
        tracking_error_fraction=args.tracking_error_fraction,
        seed=args.seed,
    )
    paths = write_collection(args.out, spec, args.fragmentation_rate)
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    out: dict = {}
    text: list[str] = []
    if args.dir is not None:
        if not args.dir.is_dir():
            raise io.DataError("not a directory", args.dir)
        rep = io.ingest_validate(args.dir)
        out["ingest"] = rep.as_dict()
        text.append(rep.to_text())
    annotations = io.read_annotations(args.annotations) if args.annotations else None
    if annotations is not None:
        if args.tracks is not None:
            tracks = io.read_tracks(args.tracks)
            pairs = io.annotated_tracks(tracks, annotations)
        else:
            pairs = _annotated(annotations)
        dist = distribution_report(pairs, cutoff=args.cutoff)
        out["distribution"] = dist.as_dict()
        text.append(dist.to_text())
        if args.result is not None:
            result, row_ids = io.read_result(args.result)
            truth = {tid: a.category for tid, a in annotations.items() if a.kind == "category"}
            evalset = LabeledEvalSet.from_result(result, row_ids, truth)
            known = {t.track.label for t in pairs if t.track.label is not None} if args.tracks else None
            summary = cluster_report(result, row_ids, evalset, args.min_cluster_display, known)
            out["clusters"] = summary.as_dict()
            text.append(summary.to_text())
    if not out:
        raise UsageError("report needs --dir or --annotations")
    if args.as_json:
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        print("\n".join(text), end="")
    return EXIT_OK


COMMANDS = {
    "merge": cmd_merge,
    "summarize": cmd_summarize,
    "reduce": cmd_reduce,
    "cluster": cmd_cluster,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    level = os.environ.get("TRACKMINE_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    try:
        args = _parse(sys.argv[1:] if argv is None else list(argv))
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except io.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invalid parameter values (e.g. gamma outside (0, 1])
        print(f"trackmine: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
