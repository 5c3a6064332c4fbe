"""Command-line front end: ingest, fit, coarsen, report, synth."""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, synth
from .analysis import DEFAULT_EPSILON, calendar_report, cluster_map, entity_report, mi_contributions
from .corpus import CorpusError, CsvSchema, ingest_csv, read_coordinates, write_csv
from .criterion import SPATIAL, TEMPORAL, ModelError
from .export import (
    FormatError, load_model, save_dendrogram, save_model, write_calendar, write_contributions, write_curve,
    write_geojson,
)
from .hierarchy import CutError, coarsen, cut
from .optimizer import OptimizerConfig, fit_spatial, fit_temporal

log = logging.getLogger("mdlcocluster")

ENV_PREFIX = "MDLCC_"
CONFIG_KEYS = {
    "seed": int,
    "restarts": int,
    "max_preclusters": int,
    "post_opt_passes": int,
    "cost_tolerance": float,
    "threads": int,
    "epsilon": float,
}
DEFAULTS = {"seed": 0, "restarts": 4, "max_preclusters": None, "post_opt_passes": 2,
            "cost_tolerance": 1e-9, "threads": 1, "epsilon": DEFAULT_EPSILON}


class CliError(Exception):
    pass


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    return values


def _convert(key, value):
    try:
        return CONFIG_KEYS[key](value)
    except ValueError:
        raise CliError(f"bad value {value!r} for {key}") from None


def resolve_config(args) -> dict:
    """Defaults < config file < environment < flags."""
    config = dict(DEFAULTS)
    if getattr(args, "config", None):
        config.update(read_config_file(args.config))
    for key in CONFIG_KEYS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            config[key] = _convert(key, env)
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            config[key] = flag
    return config


def optimizer_config(config: dict) -> OptimizerConfig:
    return OptimizerConfig(seed=config["seed"], restarts=config["restarts"],
                           max_preclusters=config["max_preclusters"], post_opt_passes=config["post_opt_passes"],
                           cost_tolerance=config["cost_tolerance"], threads=config["threads"])


def _schema(args) -> CsvSchema:
    return CsvSchema(source=args.source_col, destination=args.destination_col or None,
                     timestamp=args.timestamp_col or None, count=args.count_col or None, delimiter=args.delimiter,
                     count_required=False)


def _ingest(args):
    ignore = []
    if args.ignore:
        ignore = [line.strip() for line in Path(args.ignore).read_text(encoding="utf-8").splitlines() if line.strip()]
    return ingest_csv(args.input, _schema(args), ignore=ignore)


def _write_manifest(path, command, args, config, corpus, outputs, start):
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "corpus_digest": corpus.digest if corpus is not None else None,
        "outputs": [str(p) for p in outputs],
        "versions": {"mdlcocluster": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
        "wall_time": time.perf_counter() - start,
    }
    Path(path).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def _manifest_path(args, default: Path) -> Path:
    return Path(args.manifest) if getattr(args, "manifest", None) else default


def cmd_ingest(args) -> int:
    start = time.perf_counter()
    corpus = _ingest(args)
    summary = {"sources": corpus.n_sources, "destinations": corpus.n_destinations,
               "timestamps": corpus.n_timestamps, "cells": corpus.n_cells, "total": corpus.total,
               "digest": corpus.digest}
    outputs = []
    if args.output:
        write_csv(corpus, args.output)
        outputs.append(args.output)
        _write_manifest(_manifest_path(args, Path(str(args.output) + ".manifest.json")), "ingest", args,
                        {}, corpus, outputs, start)
    print(json.dumps(summary))
    return 0


def cmd_fit(args) -> int:
    start = time.perf_counter()
    config = resolve_config(args)
    corpus = _ingest(args)
    progress = None
    if args.verbose:
        def progress(step, cost, k0, k1):
            if step % 50 == 0 or (k0 == 1 and k1 == 1):
                print(f"step {step} cost {cost:.3f} k_sources {k0} k_columns {k1}", file=sys.stderr)
    fitter = fit_spatial if args.kind == SPATIAL else fit_temporal
    result = fitter(corpus, optimizer_config(config), progress=progress)
    save_model(args.output, result.model, corpus, result, config)
    _write_manifest(_manifest_path(args, Path(str(args.output) + ".manifest.json")), "fit", args, config,
                    corpus, [args.output], start)
    print(json.dumps({"cost": result.cost, "null_cost": result.null_cost, "k_sources": result.model.k_sources,
                      "k_columns": result.model.k_columns, "wall_time": round(result.wall_time, 3)}))
    return 0


def cmd_coarsen(args) -> int:
    start = time.perf_counter()
    corpus = _ingest(args)
    model, doc = load_model(args.model, corpus)
    null_cost = doc.get("fit", {}).get("null_cost")
    dendrogram = coarsen(model, corpus)
    if null_cost is not None and abs(null_cost - dendrogram.null_cost) > 1e-6:
        raise CliError("stored null cost disagrees with the corpus")
    target = {k: v for k, v in (("tau", args.tau), ("clusters", args.clusters), ("sources", args.sources),
                                ("columns", args.destinations if args.destinations is not None else args.segments))
              if v is not None}
    cut_model = cut(dendrogram, **target)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / "dendrogram.json", outdir / "curve.csv", outdir / "cut_model.json"]
    save_dendrogram(paths[0], dendrogram, corpus)
    write_curve(paths[1], dendrogram)
    save_model(paths[2], cut_model, corpus)
    _write_manifest(_manifest_path(args, outdir / "manifest.json"), "coarsen", args, target, corpus, paths, start)
    print(json.dumps({"steps": len(dendrogram.steps), "cut_k_sources": cut_model.k_sources,
                      "cut_k_columns": cut_model.k_columns, "cut_cost": cut_model.cost}))
    return 0


def cmd_report(args) -> int:
    start = time.perf_counter()
    config = resolve_config(args)
    corpus = _ingest(args)
    model, _ = load_model(args.model, corpus)
    out = Path(args.output)
    report = mi_contributions(model, corpus, config["epsilon"])
    summary = {"mutual_information": report.mutual_information}
    if args.format == "mi":
        write_contributions(out, report, bits=args.bits)
    elif args.format == "geojson":
        if not args.coords:
            raise CliError("--coords is required for geojson reports")
        coords = read_coordinates(args.coords)
        if args.focus is None:
            records, skipped = cluster_map(model, corpus, coords)
        else:
            records, skipped = entity_report(report, model, corpus, coords, args.focus)
        write_geojson(out, records)
        summary.update(features=len(records), skipped=skipped)
    else:
        if model.kind != TEMPORAL:
            raise CliError("calendar reports need a temporal model")
        days, grid = calendar_report(model, corpus, config["epsilon"])
        write_calendar(out, days, grid)
    _write_manifest(_manifest_path(args, Path(str(out) + ".manifest.json")), "report", args, config, corpus,
                    [out], start)
    print(json.dumps(summary))
    return 0


def cmd_synth(args) -> int:
    if args.shape == "two-block":
        corpus = synth.two_block(args.calls_per_pair)
    elif args.shape == "two-regime":
        corpus = synth.two_regime(args.days, args.switch, args.calls_per_day)
    elif args.shape == "uniform":
        corpus = synth.uniform(args.sources, args.destinations, args.calls, args.seed)
    elif args.shape == "planted":
        corpus = synth.planted_blocks(args.sources, args.destinations, args.calls, args.groups, args.affinity,
                                      args.seed)
    else:
        corpus = synth.planted_seasonal(args.sources, args.days, args.groups, args.calls, args.seed)
    write_csv(corpus, args.output)
    print(json.dumps({"cells": corpus.n_cells, "total": corpus.total, "digest": corpus.digest}))
    return 0


def _add_input(p):
    p.add_argument("input", help="event CSV with a header row")
    p.add_argument("--source-col", default="source")
    p.add_argument("--destination-col", default="destination", help="empty string for none")
    p.add_argument("--timestamp-col", default="timestamp", help="empty string for none")
    p.add_argument("--count-col", default="count", help="multiplicity column (optional in the file)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--ignore", help="file listing entity ids to drop, one per line")


def _add_optimizer(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-preclusters", dest="max_preclusters", type=int)
    p.add_argument("--post-opt-passes", dest="post_opt_passes", type=int)
    p.add_argument("--tolerance", dest="cost_tolerance", type=float)
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdlcocluster", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate an event CSV and export the canonical corpus")
    _add_input(p)
    p.add_argument("-o", "--output")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit a spatial or temporal co-clustering")
    p.add_argument("kind", choices=[SPATIAL, TEMPORAL])
    _add_input(p)
    _add_optimizer(p)
    p.add_argument("-o", "--output", required=True, help="model JSON path")
    p.add_argument("--manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("coarsen", help="build the merge dendrogram and cut it")
    p.add_argument("model")
    _add_input(p)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--tau", type=float)
    target.add_argument("--clusters", type=int, help="number of biclusters")
    target.add_argument("--sources", type=int)
    target.add_argument("--destinations", type=int)
    target.add_argument("--segments", type=int)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_coarsen)

    p = sub.add_parser("report", help="mutual-information, map and calendar reports")
    p.add_argument("model")
    _add_input(p)
    p.add_argument("--format", choices=["mi", "geojson", "calendar"], default="mi")
    p.add_argument("--focus", type=int)
    p.add_argument("--coords")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--bits", action="store_true")
    p.add_argument("--config")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a planted-structure corpus")
    p.add_argument("shape", choices=["two-block", "two-regime", "uniform", "planted", "seasonal"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sources", type=int, default=1000)
    p.add_argument("--destinations", type=int, default=1000)
    p.add_argument("--calls", type=int, default=1_000_000)
    p.add_argument("--groups", type=int, default=10)
    p.add_argument("--affinity", type=float, default=0.9)
    p.add_argument("--days", type=int, default=20)
    p.add_argument("--switch", type=int, default=10)
    p.add_argument("--calls-per-day", type=int, default=5)
    p.add_argument("--calls-per-pair", type=int, default=25)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CorpusError, ModelError, FormatError, CutError, CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
