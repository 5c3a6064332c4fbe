"""Event corpus: interned entity dictionaries and sparse (source, destination, day) counts."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class EventRecord:
    source_id: str
    destination_id: str | None = None
    timestamp: int | str | dt.date | None = None
    count: int = 1

    def __post_init__(self):
        if int(self.count) < 1:
            raise CorpusError(f"record count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for event CSV files."""

    source: str = "source"
    destination: str | None = "destination"
    timestamp: str | None = "timestamp"
    count: str | None = None
    delimiter: str = ","
    count_required: bool = True  # False: a missing count column means one call per row


def _parse_timestamp(value) -> int | dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, (dt.date, int, np.integer)):
        return value if isinstance(value, dt.date) else int(value)
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return dt.date.fromisoformat(text[:10])
    except ValueError:
        raise CorpusError(f"unparseable timestamp {value!r}") from None


class EventCorpus:
    """Immutable sparse count store over (source, destination, timestamp).

    Timestamps are stored as day indices relative to the earliest observed
    day; ``timestamps`` holds the sorted distinct day indices and the
    time axis of ``cells`` indexes into it.
    """

    def __init__(
        self,
        sources: Sequence[str],
        destinations: Sequence[str],
        timestamps: Sequence[int],
        src: np.ndarray,
        dst: np.ndarray,
        time: np.ndarray,
        counts: np.ndarray,
        origin: int | dt.date | None = 0,
    ):
        self.sources = tuple(sources)
        self.destinations = tuple(destinations)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.origin = origin
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        time = np.asarray(time, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if not (len(src) == len(dst) == len(time) == len(counts)):
            raise CorpusError("cell arrays have mismatched lengths")
        if (counts < 0).any():
            raise CorpusError("negative cell count")
        if len(self.timestamps) == 0:
            raise CorpusError("corpus needs at least one timestamp")
        n_dst = max(len(self.destinations), 1)
        if len(src) and (src.max() >= len(self.sources) or dst.max() >= n_dst
                         or time.max() >= len(self.timestamps)
                         or min(src.min(), dst.min(), time.min()) < 0):
            raise CorpusError("cell index out of range")
        keep = counts > 0
        src, dst, time, counts = src[keep], dst[keep], time[keep], counts[keep]
        # aggregate duplicates, sorted by (source, destination, time)
        key = (src * n_dst + dst) * len(self.timestamps) + time
        uniq, inverse = np.unique(key, return_inverse=True)
        summed = np.bincount(inverse, weights=counts, minlength=len(uniq)).astype(np.int64)
        self.src = (uniq // len(self.timestamps)) // n_dst
        self.dst = (uniq // len(self.timestamps)) % n_dst
        self.time = uniq % len(self.timestamps)
        self.counts = summed
        for arr in (self.src, self.dst, self.time, self.counts):
            arr.setflags(write=False)

    @property
    def has_destinations(self) -> bool:
        return len(self.destinations) > 0

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def n_destinations(self) -> int:
        return len(self.destinations)

    @property
    def n_timestamps(self) -> int:
        return len(self.timestamps)

    @property
    def n_cells(self) -> int:
        return len(self.counts)

    @cached_property
    def total(self) -> int:
        return int(self.counts.sum())

    @cached_property
    def source_marginals(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.counts, minlength=self.n_sources).astype(np.int64)

    @cached_property
    def destination_marginals(self) -> np.ndarray:
        return np.bincount(self.dst, weights=self.counts,
                           minlength=self.n_destinations).astype(np.int64)[: self.n_destinations]

    @cached_property
    def time_marginals(self) -> np.ndarray:
        return np.bincount(self.time, weights=self.counts, minlength=self.n_timestamps).astype(np.int64)

    def cells(self) -> dict[tuple[int, int, int], int]:
        return {(int(i), int(j), int(t)): int(c)
                for i, j, t, c in zip(self.src, self.dst, self.time, self.counts)}

    def spatial_matrix(self) -> sp.csr_matrix:
        """Source x destination counts summed over time."""
        if not self.has_destinations:
            raise CorpusError("corpus has no destination data")
        return self._matrix(self.dst, self.n_destinations)

    def temporal_matrix(self) -> sp.csr_matrix:
        """Source x distinct-timestamp counts summed over destinations."""
        return self._matrix(self.time, self.n_timestamps)

    def _matrix(self, cols, n_cols) -> sp.csr_matrix:
        mat = sp.coo_matrix((self.counts.astype(np.int64), (self.src, cols)),
                            shape=(self.n_sources, n_cols)).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    def timestamp_label(self, index: int) -> str:
        """Original label (ISO date or integer) of a distinct timestamp."""
        day = int(self.timestamps[index])
        if isinstance(self.origin, dt.date):
            return (self.origin + dt.timedelta(days=day)).isoformat()
        return str(day + int(self.origin or 0))

    @cached_property
    def digest(self) -> str:
        """Content digest independent of dictionary order."""
        rows = sorted(
            (self.sources[i], self.destinations[j] if self.has_destinations else "",
             self.timestamp_label(t), int(c))
            for i, j, t, c in zip(self.src, self.dst, self.time, self.counts)
        )
        h = hashlib.sha256()
        for row in rows:
            h.update("\x1f".join(map(str, row)).encode())
            h.update(b"\x1e")
        return h.hexdigest()

    def __repr__(self):
        return (f"EventCorpus(n_sources={self.n_sources}, n_destinations={self.n_destinations}, "
                f"n_timestamps={self.n_timestamps}, cells={self.n_cells}, total={self.total})")


def from_records(records: Iterable[EventRecord], ignore: Iterable[str] = ()) -> EventCorpus:
    """Build a corpus from records; dense indices follow first-seen order."""
    ignore = set(ignore)
    sources: dict[str, int] = {}
    destinations: dict[str, int] = {}
    src, dst, raw_time, counts = [], [], [], []
    with_dst = with_time = None
    for rec in records:
        if rec.source_id in ignore or (rec.destination_id is not None and rec.destination_id in ignore):
            continue
        has_d, has_t = rec.destination_id is not None, rec.timestamp is not None
        if with_dst is None:
            with_dst, with_time = has_d, has_t
        elif (has_d, has_t) != (with_dst, with_time):
            raise CorpusError("records mix present and missing destination/timestamp fields")
        src.append(sources.setdefault(rec.source_id, len(sources)))
        dst.append(destinations.setdefault(rec.destination_id, len(destinations)) if has_d else 0)
        raw_time.append(_parse_timestamp(rec.timestamp) if has_t else 0)
        counts.append(int(rec.count))
    if not counts:
        raise CorpusError("empty corpus")
    kinds = {type(t) for t in raw_time}
    if len(kinds) > 1:
        raise CorpusError("timestamps mix ISO dates and integer day indices")
    if dt.date in kinds:
        origin = min(raw_time)
        days = np.array([(t - origin).days for t in raw_time], dtype=np.int64)
    else:
        origin = int(min(raw_time))
        days = np.array(raw_time, dtype=np.int64) - origin
    distinct, time = np.unique(days, return_inverse=True)
    return EventCorpus(list(sources), list(destinations), distinct, np.array(src), np.array(dst),
                       time, np.array(counts, dtype=np.int64), origin=origin)


def ingest_csv(path, schema: CsvSchema | None = None, ignore: Iterable[str] = ()) -> EventCorpus:
    """Read an event CSV with a header row into a corpus.

    Duplicate (source, destination, timestamp) rows are summed.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        header = next(reader, None)
        if header is None:
            raise CorpusError("empty corpus")
        header = [h.strip() for h in header]

        def column(name, required):
            if name is None:
                return None
            if name not in header:
                if required:
                    raise CorpusError(f"missing column {name!r} in {path}")
                return None
            return header.index(name)

        i_src = column(schema.source, True)
        i_dst = column(schema.destination, False)
        i_time = column(schema.timestamp, False)
        i_cnt = column(schema.count, schema.count_required) if schema.count else None
        if i_dst is None and i_time is None:
            raise CorpusError("schema needs a destination or a timestamp column")

        def records():
            for lineno, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != len(header):
                    raise CorpusError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                try:
                    count = int(row[i_cnt]) if i_cnt is not None else 1
                    stamp = _parse_timestamp(row[i_time]) if i_time is not None else None
                except (ValueError, CorpusError) as exc:
                    raise CorpusError(f"{path}:{lineno}: {exc}") from None
                if count <= 0:
                    raise CorpusError(f"{path}:{lineno}: count must be positive, got {count}")
                yield EventRecord(row[i_src].strip(),
                                  row[i_dst].strip() if i_dst is not None else None,
                                  stamp, count)

        return from_records(records(), ignore=ignore)


def write_csv(corpus: EventCorpus, path) -> None:
    """Export the corpus as ``source,destination,timestamp,count`` rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["source"] + (["destination"] if corpus.has_destinations else []) + ["timestamp", "count"]
        w.writerow(header)
        for i, j, t, c in zip(corpus.src, corpus.dst, corpus.time, corpus.counts):
            row = [corpus.sources[i]]
            if corpus.has_destinations:
                row.append(corpus.destinations[j])
            row += [corpus.timestamp_label(t), int(c)]
            w.writerow(row)


def project_spatial(corpus: EventCorpus) -> EventCorpus:
    """Collapse the time axis onto one pseudo-timestamp."""
    if not corpus.has_destinations:
        raise CorpusError("corpus has no destination data")
    return EventCorpus(corpus.sources, corpus.destinations, [0], corpus.src, corpus.dst,
                       np.zeros_like(corpus.time), corpus.counts, origin=0)


def project_temporal(corpus: EventCorpus) -> EventCorpus:
    """Collapse the destination axis."""
    return EventCorpus(corpus.sources, (), corpus.timestamps, corpus.src, np.zeros_like(corpus.dst),
                       corpus.time, corpus.counts, origin=corpus.origin)


@dataclass
class CoordinateTable:
    """Entity label -> (latitude, longitude) in degrees."""

    positions: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for label, (lat, lon) in self.positions.items():
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise CorpusError(f"coordinate out of range for {label!r}: ({lat}, {lon})")

    def __contains__(self, label):
        return label in self.positions

    def __getitem__(self, label):
        return self.positions[label]

    def __len__(self):
        return len(self.positions)


def read_coordinates(path) -> CoordinateTable:
    """Read an ``id,lat,lon`` CSV."""
    positions = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "lat", "lon"} - set(reader.fieldnames or ())
        if missing:
            raise CorpusError(f"coordinate file lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                positions[row["id"].strip()] = (float(row["lat"]), float(row["lon"]))
            except (TypeError, ValueError):
                raise CorpusError(f"{path}:{lineno}: malformed coordinate row") from None
    return CoordinateTable(positions)
