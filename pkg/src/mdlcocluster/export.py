"""File formats: model / dendrogram JSON, report CSVs and GeoJSON."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ContributionReport, EntityRecord
from .corpus import EventCorpus
from .criterion import (
    SPATIAL, TEMPORAL, CoclusterModel, ModelError, SpatialModel, TemporalModel, block_stats, problem_for,
)
from .hierarchy import MergeDendrogram, MergeStep
from .optimizer import FitResult

MODEL_FORMAT = "mdlcocluster/model"
DENDROGRAM_FORMAT = "mdlcocluster/dendrogram"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def _load(path, expected_format):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != expected_format:
        raise FormatError(f"{path} is not a {expected_format} document")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported {expected_format} version {doc.get('version')}")
    return doc


def _partition(model: CoclusterModel, corpus: EventCorpus) -> dict:
    out = {"sources": {name: int(c) for name, c in zip(corpus.sources, model.source_clusters) if c >= 0}}
    if model.kind == SPATIAL:
        out["destinations"] = {name: int(c) for name, c in zip(corpus.destinations, model.column_clusters)
                               if c >= 0}
    else:
        out["segments"] = [{"first": corpus.timestamp_label(a), "last": corpus.timestamp_label(b),
                            "first_index": a, "last_index": b} for a, b in model.intervals()]
    return out


def model_document(model: CoclusterModel, corpus: EventCorpus, result: FitResult | None = None,
                   config: dict | None = None) -> dict:
    stats = block_stats(model, problem_for(corpus, model.kind))
    doc = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "generator": f"mdlcocluster {__version__}",
        "kind": model.kind,
        "corpus_digest": corpus.digest,
        "cost": model.cost,
        "k_sources": model.k_sources,
        ("k_destinations" if model.kind == SPATIAL else "k_segments"): model.k_columns,
        "partition": _partition(model, corpus),
        "statistics": {
            "source_sizes": stats.row_sizes.tolist(),
            "source_counts": stats.row_counts.tolist(),
            "column_sizes": stats.col_sizes.tolist(),
            "column_counts": stats.col_counts.tolist(),
            "blocks": stats.blocks.tolist(),
        },
    }
    if result is not None:
        doc["fit"] = {
            "null_cost": result.null_cost,
            "null_selected": result.null_selected,
            "restart_costs": result.restart_costs,
            "trace": result.trace,
        }
    if config is not None:
        doc["config"] = config
    return doc


def save_model(path, model: CoclusterModel, corpus: EventCorpus, result: FitResult | None = None,
               config: dict | None = None) -> None:
    _dump(model_document(model, corpus, result, config), path)


def model_from_document(doc: dict, corpus: EventCorpus, check_digest: bool = True) -> CoclusterModel:
    if check_digest and doc["corpus_digest"] != corpus.digest:
        raise FormatError("model was fitted on a different corpus (digest mismatch)")
    part = doc["partition"]
    rows = np.full(corpus.n_sources, -1, dtype=np.int64)
    index = {name: i for i, name in enumerate(corpus.sources)}
    try:
        for name, c in part["sources"].items():
            rows[index[name]] = c
        if doc["kind"] == SPATIAL:
            cols = np.full(corpus.n_destinations, -1, dtype=np.int64)
            dindex = {name: i for i, name in enumerate(corpus.destinations)}
            for name, c in part["destinations"].items():
                cols[dindex[name]] = c
            model = SpatialModel(rows, cols)
        elif doc["kind"] == TEMPORAL:
            intervals = [(s["first_index"], s["last_index"]) for s in part["segments"]]
            model = TemporalModel.from_intervals(rows, intervals, corpus.n_timestamps)
        else:
            raise FormatError(f"unknown model kind {doc['kind']!r}")
    except KeyError as exc:
        raise FormatError(f"model references unknown entity {exc}") from None
    except ModelError as exc:
        raise FormatError(str(exc)) from None
    problem_for(corpus, model.kind).check(model)
    model.cost = doc.get("cost")
    return model


def load_model(path, corpus: EventCorpus, check_digest: bool = True) -> tuple[CoclusterModel, dict]:
    doc = _load(path, MODEL_FORMAT)
    return model_from_document(doc, corpus, check_digest), doc


def dendrogram_document(dendrogram: MergeDendrogram, corpus: EventCorpus) -> dict:
    return {
        "format": DENDROGRAM_FORMAT,
        "version": FORMAT_VERSION,
        "kind": dendrogram.kind,
        "corpus_digest": corpus.digest,
        "best_cost": dendrogram.best_cost,
        "null_cost": dendrogram.null_cost,
        "leaf": _partition(dendrogram.leaf, corpus),
        "steps": [
            {"axis": s.axis, "a": s.a, "b": s.b, "cost": s.cost, "tau": s.tau,
             "k_sources": s.k_sources, "k_columns": s.k_columns}
            for s in dendrogram.steps
        ],
    }


def save_dendrogram(path, dendrogram: MergeDendrogram, corpus: EventCorpus) -> None:
    _dump(dendrogram_document(dendrogram, corpus), path)


def load_dendrogram(path, corpus: EventCorpus) -> MergeDendrogram:
    doc = _load(path, DENDROGRAM_FORMAT)
    leaf = model_from_document({"kind": doc["kind"], "partition": doc["leaf"], "corpus_digest": doc["corpus_digest"],
                                "cost": doc["best_cost"]}, corpus)
    steps = [MergeStep(**s) for s in doc["steps"]]
    return MergeDendrogram(leaf, doc["best_cost"], doc["null_cost"], steps)


CURVE_HEADER = ["clusters", "tau", "cost"]
CONTRIBUTION_HEADER = ["source_cluster", "dest_cluster_or_segment", "joint_count", "contribution", "label"]


def write_curve(path, dendrogram: MergeDendrogram) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for k, tau, cost in dendrogram.points():
            w.writerow([k, repr(float(tau)), repr(float(cost))])


def write_contributions(path, report: ContributionReport, bits: bool = False) -> None:
    scale = 1 / np.log(2) if bits else 1.0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONTRIBUTION_HEADER)
        for i, j, joint, contrib, label in report.rows():
            w.writerow([i, j, joint, repr(float(contrib * scale)), label])


def write_calendar(path, days: list[str], grid) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster"] + list(days))
        for i, row in enumerate(grid):
            w.writerow([i] + [str(v) for v in row])


def geojson(records: list[EntityRecord]) -> dict:
    """FeatureCollection of Point features in (lon, lat) order."""
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [r.lon, r.lat]},
                "properties": {"id": r.label, "cluster": r.cluster, "contribution": r.contribution,
                               "label": r.classification, "size": r.size},
            }
            for r in records
        ],
    }


def write_geojson(path, records: list[EntityRecord]) -> None:
    _dump(geojson(records), path)
