"""MDL co-clustering of sparse event logs (source x destination, source x time)."""

__version__ = "0.1.0"

from .analysis import calendar_report, classify, entity_report, mi_contributions  # noqa: E402
from .corpus import CoordinateTable, CorpusError, CsvSchema, EventCorpus, EventRecord, from_records, ingest_csv  # noqa: E402
from .criterion import SpatialModel, TemporalModel, model_cost, spatial_cost, temporal_cost  # noqa: E402
from .estimators import SpatialCoclustering, TemporalCoclustering  # noqa: E402
from .hierarchy import coarsen, cut, informativity_curve, informativity_rate  # noqa: E402
from .optimizer import FitResult, OptimizerConfig, fit_spatial, fit_temporal  # noqa: E402

__all__ = [
    "CoordinateTable", "CorpusError", "CsvSchema", "EventCorpus", "EventRecord", "FitResult", "OptimizerConfig",
    "SpatialCoclustering", "SpatialModel", "TemporalCoclustering", "TemporalModel", "calendar_report", "classify",
    "coarsen", "cut", "entity_report", "fit_spatial", "fit_temporal", "from_records", "informativity_curve",
    "informativity_rate", "ingest_csv", "mi_contributions", "model_cost", "spatial_cost", "temporal_cost",
]
