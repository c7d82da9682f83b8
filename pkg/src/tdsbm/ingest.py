"""Parse trip CSVs, clean them, and bucket them into an hourly multilayer network."""
from __future__ import annotations

import bisect
import csv
import io
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, tzinfo
from typing import IO, Iterable, Mapping, Optional, Sequence, Union
from zoneinfo import ZoneInfo

from .network import MultilayerNetwork

REQUIRED_FIELDS = ("start_time", "end_time", "origin_station", "destination_station")
OPTIONAL_FIELDS = ("origin_lat", "origin_lon", "destination_lat", "destination_lon")


class SchemaError(ValueError):
    """The input file lacks a column named in the column map."""


@dataclass(frozen=True)
class TripRecord:
    start_time: datetime
    end_time: datetime
    origin_station: str
    destination_station: str
    origin_coords: Optional[tuple[float, float]] = None
    destination_coords: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.start_time.tzinfo is None or self.end_time.tzinfo is None:
            raise ValueError("trip timestamps must be timezone-aware")
        if self.end_time < self.start_time:
            raise ValueError("trip ends before it starts")
        if not self.origin_station or not self.destination_station:
            raise ValueError("station identifiers must be non-empty")

    @property
    def duration_minutes(self) -> float:
        return (self.end_time - self.start_time).total_seconds() / 60.0


@dataclass(frozen=True)
class RowError:
    row: int
    message: str


@dataclass(frozen=True)
class CleaningPolicy:
    """Trip filters. A trip is kept iff ``min < duration < max`` (minutes)."""

    min_duration_minutes: float = 2.0
    max_duration_minutes: float = 90.0
    excluded_stations: frozenset = frozenset()
    weekdays_only: bool = True
    timezone: str = "UTC"

    def __post_init__(self):
        if not 0 < self.min_duration_minutes < self.max_duration_minutes:
            raise ValueError("need 0 < min_duration_minutes < max_duration_minutes")
        object.__setattr__(self, "excluded_stations", frozenset(str(s) for s in self.excluded_stations))
        ZoneInfo(self.timezone)

    @classmethod
    def la(cls, **kw):
        return cls(min_duration_minutes=2, max_duration_minutes=90, **kw)

    sf = la

    @classmethod
    def nyc(cls, **kw):
        return cls(min_duration_minutes=2, max_duration_minutes=120, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["excluded_stations"] = sorted(self.excluded_stations)
        return d


@dataclass
class CleaningReport:
    input_count: int = 0
    removed_short: int = 0
    removed_long: int = 0
    removed_excluded_station: int = 0
    removed_isolated_station: int = 0
    removed_weekend: int = 0
    output_count: int = 0
    isolated_stations: list[str] = field(default_factory=list)

    @property
    def removal_fraction(self) -> float:
        if self.input_count == 0:
            return 0.0
        return (self.input_count - self.output_count) / self.input_count

    def to_dict(self) -> dict:
        d = asdict(self)
        d["removal_fraction"] = self.removal_fraction
        return d


def _zone(tz: Union[str, tzinfo, None]) -> Optional[tzinfo]:
    if tz is None or isinstance(tz, tzinfo):
        return tz
    return ZoneInfo(tz)


def parse_timestamp(text: str, tz: Optional[tzinfo] = None, fmt: Optional[str] = None) -> datetime:
    """Parse ``YYYY-MM-DD HH:MM:SS`` or ISO-8601; naive values are placed in ``tz``."""
    text = text.strip()
    if fmt:
        dt = datetime.strptime(text, fmt)
    else:
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        if tz is None:
            raise ValueError(f"timestamp {text!r} has no offset and no timezone was given")
        dt = dt.replace(tzinfo=tz)
    return dt


def _coords(row, lat_col, lon_col):
    if not lat_col or not lon_col:
        return None
    lat, lon = row.get(lat_col, "").strip(), row.get(lon_col, "").strip()
    if not lat or not lon:
        return None
    return (float(lat), float(lon))


def parse_trips(
    source: Union[IO[bytes], IO[str], bytes, str],
    column_map: Mapping[str, str],
    tz: Union[str, tzinfo, None] = "UTC",
    delimiter: str = ",",
    time_format: Optional[str] = None,
) -> tuple[list[TripRecord], list[RowError]]:
    """Read trips from a header-bearing delimited file.

    ``column_map`` maps the logical fields ``start_time``, ``end_time``,
    ``origin_station``, ``destination_station`` (and optionally
    ``origin_lat``/``origin_lon``/``destination_lat``/``destination_lon``) to
    column names. Malformed rows are returned as :class:`RowError` with their
    1-based data row number; they are never silently dropped.
    """
    missing = [f for f in REQUIRED_FIELDS if f not in column_map]
    if missing:
        raise SchemaError(f"column map lacks required fields: {missing}")
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    if isinstance(source, str):
        source = io.StringIO(source)
    if isinstance(source, (io.BufferedIOBase, io.RawIOBase)) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
    zone = _zone(tz)

    reader = csv.DictReader(source, delimiter=delimiter)
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    absent = [c for f, c in column_map.items() if c not in header]
    if absent:
        raise SchemaError(f"input lacks mapped column(s): {absent}")

    c = column_map
    trips: list[TripRecord] = []
    errors: list[RowError] = []
    for n, row in enumerate(reader, start=1):
        try:
            origin = (row.get(c["origin_station"]) or "").strip()
            dest = (row.get(c["destination_station"]) or "").strip()
            if not origin or not dest:
                raise ValueError("missing station identifier")
            start = parse_timestamp(row.get(c["start_time"]) or "", zone, time_format)
            end = parse_timestamp(row.get(c["end_time"]) or "", zone, time_format)
            trips.append(TripRecord(
                start, end, origin, dest,
                _coords(row, c.get("origin_lat"), c.get("origin_lon")),
                _coords(row, c.get("destination_lat"), c.get("destination_lon")),
            ))
        except (ValueError, TypeError) as exc:
            errors.append(RowError(n, str(exc)))
    return trips, errors


def _drop_isolated(trips: list[TripRecord]) -> tuple[list[TripRecord], list[str]]:
    """Repeatedly drop stations lacking a departure or an arrival, with all their trips."""
    dropped: list[str] = []
    while True:
        departures = Counter(t.origin_station for t in trips)
        arrivals = Counter(t.destination_station for t in trips)
        stations = set(departures) | set(arrivals)
        bad = {s for s in stations if departures[s] == 0 or arrivals[s] == 0}
        if not bad:
            return trips, dropped
        dropped.extend(sorted(bad))
        trips = [t for t in trips if t.origin_station not in bad and t.destination_station not in bad]


def clean_trips(trips: Iterable[TripRecord], policy: CleaningPolicy) -> tuple[list[TripRecord], CleaningReport]:
    """Apply duration, station, weekday and isolated-station filters.

    Each removed trip is charged to the first filter it fails, in the order
    short, long, excluded station, weekend, isolated station. Self-loop trips
    are kept.
    """
    zone = ZoneInfo(policy.timezone)
    report = CleaningReport()
    kept = []
    for t in trips:
        report.input_count += 1
        d = t.duration_minutes
        if d <= policy.min_duration_minutes:
            report.removed_short += 1
        elif d >= policy.max_duration_minutes:
            report.removed_long += 1
        elif t.origin_station in policy.excluded_stations or t.destination_station in policy.excluded_stations:
            report.removed_excluded_station += 1
        elif policy.weekdays_only and t.start_time.astimezone(zone).weekday() >= 5:
            report.removed_weekend += 1
        else:
            kept.append(t)
    before = len(kept)
    kept, dropped = _drop_isolated(kept)
    report.removed_isolated_station = before - len(kept)
    report.isolated_stations = dropped
    report.output_count = len(kept)
    return kept, report


def _hour_of_day(dt: datetime) -> float:
    return dt.hour + dt.minute / 60.0 + (dt.second + dt.microsecond / 1e6) / 3600.0


def build_network(
    trips: Sequence[TripRecord],
    n_layers: int = 24,
    bucket_boundaries: Optional[Sequence[float]] = None,
    timezone: Union[str, tzinfo, None] = None,
) -> MultilayerNetwork:
    """Count trips per (origin, destination, start-hour bucket).

    Without ``bucket_boundaries`` the day is split into ``n_layers`` equal
    buckets (hours when ``n_layers == 24``). ``bucket_boundaries`` are the
    left edges of the buckets in hours, starting at 0 and increasing; bucket
    ``t`` covers ``[b[t], b[t+1])`` and the last one runs to 24. Start times
    are converted to ``timezone`` first (default: each trip's own offset).
    Nodes are the sorted station identifiers.
    """
    trips = list(trips)
    if not trips:
        raise ValueError("no trips to build a network from")
    if bucket_boundaries is None:
        if n_layers < 1:
            raise ValueError("n_layers must be positive")
        bounds = [24.0 * k / n_layers for k in range(n_layers)]
    else:
        bounds = [float(b) for b in bucket_boundaries]
        if len(bounds) != n_layers:
            raise ValueError(f"{len(bounds)} boundaries given for {n_layers} layers")
        if bounds[0] != 0 or any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])) or bounds[-1] >= 24:
            raise ValueError("bucket boundaries must start at 0 and increase strictly below 24")
    zone = _zone(timezone)

    coords: dict[str, Optional[tuple[float, float]]] = {}
    for t in trips:
        for s, xy in ((t.origin_station, t.origin_coords), (t.destination_station, t.destination_coords)):
            if coords.get(s) is None:
                coords[s] = xy
    ids = sorted(coords)
    index = {s: k for k, s in enumerate(ids)}

    src, dst, layer = [], [], []
    for t in trips:
        start = t.start_time.astimezone(zone) if zone is not None else t.start_time
        src.append(index[t.origin_station])
        dst.append(index[t.destination_station])
        layer.append(bisect.bisect_right(bounds, _hour_of_day(start)) - 1)
    return MultilayerNetwork.from_entries(
        src, dst, layer, [1] * len(src), len(ids), n_layers, ids, [coords[s] for s in ids]
    )
