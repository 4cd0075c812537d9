"""Raw telemetry parsing and alignment onto a regular time grid.

Every stream is a comma-separated table with a header row and an integer
millisecond timestamp as its first column.  Parsed streams become
:class:`EventLog` objects, which are then resampled (observations) or
interpolated (context) onto a :class:`TimeGrid`.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .config import GAP_LIMIT_MINUTES
from .errors import InputError, SchemaError

logger = logging.getLogger(__name__)

MINUTE_MS = 60_000
GAP_LIMIT_MS = GAP_LIMIT_MINUTES * MINUTE_MS


class StreamKind(str, enum.Enum):
    SAA = "SAA"
    DMOP = "DMOP"
    FTL = "FTL"
    EVTF = "EVTF"
    LTDATA = "LTDATA"
    POWER = "POWER"


@dataclass(frozen=True)
class StreamSchema:
    time_column: str
    numeric: tuple[str, ...] = ()
    symbolic: tuple[str, ...] = ()
    # accepted in the header but not loaded
    ignored: tuple[str, ...] = ()
    end_column: str | None = None
    # POWER: any number of value columns sharing this prefix
    prefix: str | None = None


SCHEMAS: dict[StreamKind, StreamSchema] = {
    StreamKind.SAA: StreamSchema("ut_ms", numeric=("sa", "sx", "sy", "sz")),
    StreamKind.LTDATA: StreamSchema(
        "ut_ms",
        numeric=("sunmars_km", "solarconstantmars"),
        ignored=("earthmars_km", "sunmarsearthangle_deg",
                 "eclipseduration_min", "occultationduration_min"),
    ),
    StreamKind.DMOP: StreamSchema("ut_ms", symbolic=("subsystem",)),
    StreamKind.FTL: StreamSchema("utb_ms", symbolic=("type",),
                                 ignored=("flagcomms",), end_column="ute_ms"),
    StreamKind.EVTF: StreamSchema("ut_ms", symbolic=("description",)),
    StreamKind.POWER: StreamSchema("ut_ms", prefix="NPWD"),
}

NUMERIC_KINDS = frozenset({StreamKind.SAA, StreamKind.LTDATA, StreamKind.POWER})


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-sorted records of one telemetry stream.

    ``values`` is a float matrix for numeric streams and an object matrix of
    strings for symbolic ones (DMOP command, FTL event type, EVTF
    description).  FTL records additionally carry ``ends``.
    """

    kind: StreamKind
    times: np.ndarray
    columns: tuple[str, ...]
    values: np.ndarray
    ends: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def labels(self) -> np.ndarray:
        if self.kind in NUMERIC_KINDS:
            raise TypeError(f"{self.kind.value} log has no symbolic payload")
        return self.values[:, 0]

    def select(self, mask: np.ndarray) -> EventLog:
        return EventLog(
            self.kind,
            _frozen(self.times[mask].copy()),
            self.columns,
            _frozen(self.values[mask].copy()),
            None if self.ends is None else _frozen(self.ends[mask].copy()),
        )

    def before(self, boundary: int) -> EventLog:
        """Records stamped strictly before ``boundary``."""
        return self.select(self.times < boundary)


def make_log(kind: StreamKind | str, times, values, columns=None, ends=None) -> EventLog:
    """Build a sorted, de-duplicated log from in-memory records."""
    kind = StreamKind(kind)
    schema = SCHEMAS[kind]
    times = np.asarray(times, dtype=np.int64).reshape(-1)
    values = np.asarray(values, dtype=np.float64 if kind in NUMERIC_KINDS else object)
    if times.size == 0:
        width = len(columns) if columns is not None else (
            values.shape[-1] if values.ndim == 2 else len(schema.numeric or schema.symbolic))
        values = values.reshape(0, width)
    else:
        values = values.reshape(times.size, -1)
    if columns is None:
        if schema.prefix is not None:
            columns = tuple(f"{schema.prefix}{i:04d}" for i in range(values.shape[1]))
        else:
            columns = schema.numeric or schema.symbolic
    columns = tuple(columns)
    if values.shape[1] != len(columns):
        raise SchemaError(
            f"{kind.value}: payload arity {values.shape[1]} does not match "
            f"{len(columns)} columns")
    if ends is not None:
        ends = np.asarray(ends, dtype=np.int64).reshape(-1)
        bad = np.flatnonzero(ends < times)
        if bad.size:
            i = int(bad[0])
            raise SchemaError(
                f"{kind.value}: record {i} ends before it starts "
                f"({int(ends[i])} < {int(times[i])})")
    elif schema.end_column is not None:
        raise SchemaError(f"{kind.value} records require end times")
    if np.any(times < 0):
        raise SchemaError(f"{kind.value}: negative timestamp")

    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    if ends is not None:
        ends = ends[order]
    keep = _dedupe_last(kind, times, values, ends)
    return EventLog(
        kind,
        _frozen(times[keep]),
        columns,
        _frozen(values[keep]),
        None if ends is None else _frozen(ends[keep]),
    )


def _dedupe_last(kind, times, values, ends) -> np.ndarray:
    """Indices surviving duplicate removal, keeping the last record.

    Numeric streams collapse on the timestamp alone.  Symbolic streams may
    legitimately log several distinct events in one millisecond, so only
    exact (timestamp, payload) repeats collapse there.
    """
    n = times.size
    if n == 0:
        return np.arange(0)
    if kind in NUMERIC_KINDS:
        last = np.ones(n, dtype=bool)
        last[:-1] = times[1:] != times[:-1]
        return np.flatnonzero(last)
    seen: dict[tuple, int] = {}
    for i in range(n):
        key = (int(times[i]), tuple(values[i]),
               None if ends is None else int(ends[i]))
        seen.pop(key, None)
        seen[key] = i
    return np.sort(np.fromiter(seen.values(), dtype=np.int64, count=len(seen)))


def _check_header(path: Path, kind: StreamKind, header: list[str]) -> list[str]:
    schema = SCHEMAS[kind]
    header = [h.strip() for h in header]
    if not header or header[0] != schema.time_column:
        raise SchemaError(
            f"{path}: {kind.value} table must start with column "
            f"'{schema.time_column}', got {header[:1]}")
    rest = header[1:]
    if len(set(rest)) != len(rest):
        raise SchemaError(f"{path}: duplicate column names in header")
    if schema.prefix is not None:
        unknown = [c for c in rest if not c.startswith(schema.prefix)]
        if unknown:
            raise SchemaError(f"{path}: unknown column(s) {unknown}")
        if not rest:
            raise SchemaError(f"{path}: no {schema.prefix}* value columns")
        return rest
    required = list(schema.numeric) + list(schema.symbolic)
    if schema.end_column:
        required.append(schema.end_column)
    allowed = set(required) | set(schema.ignored)
    unknown = [c for c in rest if c not in allowed]
    if unknown:
        raise SchemaError(f"{path}: unknown column(s) {unknown} for {kind.value}")
    absent = [c for c in required if c not in rest]
    if absent:
        raise SchemaError(f"{path}: missing column(s) {absent} for {kind.value}")
    return rest


def _first_bad_line(raw: pd.Series, parsed: pd.Series) -> int | None:
    bad = parsed.isna().to_numpy() & (raw.str.strip() != "").to_numpy()
    hits = np.flatnonzero(bad)
    # +2: one header line, one-based numbering
    return int(hits[0]) + 2 if hits.size else None


def _integer_column(path: Path, frame: pd.DataFrame, name: str) -> np.ndarray:
    raw = frame[name]
    parsed = pd.to_numeric(raw.str.strip(), errors="coerce")
    line = _first_bad_line(raw, parsed)
    missing = np.flatnonzero(parsed.isna().to_numpy())
    if line is None and missing.size:
        line = int(missing[0]) + 2
    if line is not None:
        raise SchemaError(
            f"{path}: line {line}: malformed timestamp {raw.iloc[line - 2]!r} in '{name}'")
    values = parsed.to_numpy(dtype=np.float64)
    if np.any(values != np.round(values)) or np.any(values < 0):
        i = int(np.flatnonzero((values != np.round(values)) | (values < 0))[0])
        raise SchemaError(
            f"{path}: line {i + 2}: '{name}' must be a non-negative integer")
    return values.astype(np.int64)


def parse_stream(path: str | Path, kind: StreamKind | str) -> EventLog:
    """Parse one telemetry table into a sorted :class:`EventLog`.

    Empty files yield empty logs.  Malformed rows raise
    :class:`~mexpower.errors.SchemaError` naming the offending line.
    """
    path = Path(path)
    kind = StreamKind(kind)
    schema = SCHEMAS[kind]
    if not path.exists():
        raise InputError(f"{path}: no such file")

    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if header is None or not any(h.strip() for h in header):
        if schema.prefix is not None:
            return make_log(kind, [], np.zeros((0, 0)), columns=())
        ends = [] if schema.end_column else None
        return make_log(kind, [], np.zeros((0, len(schema.numeric or schema.symbolic))),
                        ends=ends)
    rest = _check_header(path, kind, header)

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False,
                            skipinitialspace=True, encoding="utf-8")
    except pd.errors.ParserError as exc:
        raise SchemaError(f"{path}: malformed row: {exc}") from exc
    frame.columns = [c.strip() for c in frame.columns]

    times = _integer_column(path, frame, schema.time_column)
    ends = None
    if schema.end_column:
        ends = _integer_column(path, frame, schema.end_column)
        bad = np.flatnonzero(ends < times)
        if bad.size:
            raise SchemaError(
                f"{path}: line {int(bad[0]) + 2}: event ends before it starts")

    if kind in NUMERIC_KINDS:
        columns = tuple(rest) if schema.prefix else schema.numeric
        values = np.empty((len(frame), len(columns)), dtype=np.float64)
        for j, name in enumerate(columns):
            raw = frame[name]
            parsed = pd.to_numeric(raw.str.strip(), errors="coerce")
            line = _first_bad_line(raw, parsed)
            if line is not None:
                raise SchemaError(
                    f"{path}: line {line}: non-numeric value "
                    f"{raw.iloc[line - 2]!r} in '{name}'")
            values[:, j] = parsed.to_numpy(dtype=np.float64)
    else:
        columns = schema.symbolic
        values = frame[list(columns)].to_numpy(dtype=object)
        for j, name in enumerate(columns):
            empty = np.flatnonzero(frame[name].str.strip().to_numpy() == "")
            if empty.size:
                raise SchemaError(f"{path}: line {int(empty[0]) + 2}: empty '{name}'")
        values = np.vectorize(str.strip, otypes=[object])(values) if len(frame) else values

    return make_log(kind, times, values, columns=columns, ends=ends)


@dataclass(frozen=True)
class TimeGrid:
    """Half-open partition of ``[t_first, t_last)`` into ``delta_t``-minute
    intervals; the final interval is truncated at ``t_last``."""

    t_first: int
    t_last: int
    delta_t: int

    @property
    def step_ms(self) -> int:
        return self.delta_t * MINUTE_MS

    @property
    def n_intervals(self) -> int:
        return -((self.t_first - self.t_last) // self.step_ms)

    @property
    def starts(self) -> np.ndarray:
        return self.t_first + np.arange(self.n_intervals, dtype=np.int64) * self.step_ms

    @property
    def edges(self) -> np.ndarray:
        edges = self.t_first + np.arange(self.n_intervals + 1, dtype=np.int64) * self.step_ms
        edges[-1] = self.t_last
        return edges

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    def locate(self, times) -> np.ndarray:
        """Interval index of each timestamp; -1 before the grid, n after it."""
        times = np.asarray(times, dtype=np.int64)
        idx = np.searchsorted(self.edges, times, side="right") - 1
        return np.where(times >= self.t_last, self.n_intervals, idx)

    def to_dict(self) -> dict:
        return {"t_first": self.t_first, "t_last": self.t_last, "delta_t": self.delta_t}


def build_grid(t_first: int, t_last: int, delta_t: int) -> TimeGrid:
    if int(delta_t) != delta_t or delta_t <= 0:
        raise ValueError(f"delta_t must be a positive integer number of minutes, got {delta_t}")
    if not t_first < t_last:
        raise ValueError(f"empty time span [{t_first}, {t_last})")
    return TimeGrid(int(t_first), int(t_last), int(delta_t))


def grid_for_logs(logs, delta_t: int) -> TimeGrid:
    """Grid spanning the first to the last timestamp over all given logs."""
    firsts, lasts = [], []
    for log in logs:
        if len(log):
            firsts.append(int(log.times[0]))
            last = int(log.times[-1]) if log.ends is None else int(log.ends.max())
            lasts.append(last)
    if not firsts:
        raise ValueError("cannot build a grid from empty logs")
    return build_grid(min(firsts), max(lasts), delta_t)


@dataclass(frozen=True, eq=False)
class AlignedSeries:
    """Values on a grid: one row per interval, ``missing`` flags whole rows."""

    grid: TimeGrid
    columns: tuple[str, ...]
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        n = self.grid.n_intervals
        if self.values.shape != (n, len(self.columns)) or self.missing.shape != (n,):
            raise SchemaError("aligned series shape does not match its grid")


def _aligned(grid, columns, values, missing) -> AlignedSeries:
    values = np.array(values, dtype=np.float64)
    missing = np.asarray(missing, dtype=bool) | ~np.isfinite(values).all(axis=1)
    values[missing] = np.nan
    return AlignedSeries(grid, tuple(columns), _frozen(values), _frozen(missing))


def _column_missing(t, starts, ends, counts, gap_limit_ms) -> np.ndarray:
    m = t.size
    if m == 0:
        return np.ones(starts.size, dtype=bool)
    big = np.diff(t) > gap_limit_ms
    cum = np.concatenate([[0], np.cumsum(big)])
    k_lo = np.searchsorted(t, starts, side="right") - 1
    k_hi = np.searchsorted(t, ends, side="left") - 1
    lo = np.maximum(k_lo, 0)
    hi = np.minimum(k_hi, m - 2)
    n_big = np.where(hi >= lo, cum[np.maximum(hi, -1) + 1] - cum[lo], 0)
    lead = np.where(k_lo < 0, np.minimum(t[0], ends) - starts, 0)
    trail = np.where(t[-1] < ends, ends - np.maximum(t[-1], starts), 0)
    return (counts == 0) | (n_big > 0) | (lead > gap_limit_ms) | (trail > gap_limit_ms)


def resample_targets(power: EventLog, grid: TimeGrid,
                     gap_limit_ms: int = GAP_LIMIT_MS) -> AlignedSeries:
    """Mean observation per interval.

    A row is missing when, for any line, the measurements covering the
    interval leave a hole longer than ``gap_limit_ms``.
    """
    if power.kind is not StreamKind.POWER:
        raise SchemaError(f"expected a POWER log, got {power.kind.value}")
    edges = grid.edges
    starts, ends = edges[:-1], edges[1:]
    n, k = grid.n_intervals, len(power.columns)
    out = np.full((n, k), np.nan)
    missing = np.zeros(n, dtype=bool)
    for j in range(k):
        valid = np.isfinite(power.values[:, j])
        t = power.times[valid]
        v = power.values[valid, j]
        idx = np.searchsorted(t, edges, side="left")
        counts = np.diff(idx)
        csum = np.concatenate([[0.0], np.cumsum(v)])
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, j] = (csum[idx[1:]] - csum[idx[:-1]]) / counts
        missing |= _column_missing(t, starts, ends, counts, gap_limit_ms)
    return _aligned(grid, power.columns, out, missing)


def interpolate(times: np.ndarray, values: np.ndarray, query,
                gap_limit_ms: int | None = GAP_LIMIT_MS) -> np.ndarray:
    """Piecewise-linear interpolation of each column of ``values`` at ``query``.

    Queries falling strictly inside a gap longer than ``gap_limit_ms`` come
    back NaN; so do queries outside the sampled range.  With
    ``gap_limit_ms=None`` every gap is bridged and the ends are held
    constant.
    """
    query = np.asarray(query, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64).reshape(np.asarray(times).size, -1)
    out = np.full((query.size, values.shape[1]), np.nan)
    for j in range(values.shape[1]):
        valid = np.isfinite(values[:, j])
        t = np.asarray(times, dtype=np.int64)[valid]
        v = values[valid, j]
        if t.size == 0:
            continue
        if t.size == 1:
            hit = query == t[0] if gap_limit_ms is not None else np.ones(query.size, bool)
            out[hit, j] = v[0]
            continue
        k = np.clip(np.searchsorted(t, query, side="right") - 1, 0, t.size - 2)
        t0, t1 = t[k], t[k + 1]
        w = (query - t0) / (t1 - t0)
        inside = (query >= t[0]) & (query <= t[-1])
        if gap_limit_ms is None:
            w = np.clip(w, 0.0, 1.0)
            inside = np.ones(query.size, dtype=bool)
        else:
            exact = (query == t0) | (query == t1)
            inside &= exact | ((t1 - t0) <= gap_limit_ms)
        col = v[k] * (1.0 - w) + v[k + 1] * w
        col = np.where(w == 0.0, v[k], np.where(w == 1.0, v[k + 1], col))
        out[inside, j] = col[inside]
    return out


def align_context(log: EventLog, grid: TimeGrid,
                  gap_limit_ms: int | None = GAP_LIMIT_MS) -> AlignedSeries:
    """Sample a numeric context stream at the interval start boundaries."""
    if log.kind not in (StreamKind.SAA, StreamKind.LTDATA):
        raise SchemaError(f"align_context needs SAA or LTDATA, got {log.kind.value}")
    values = interpolate(log.times, log.values, grid.starts, gap_limit_ms)
    return _aligned(grid, log.columns, values, np.zeros(grid.n_intervals, dtype=bool))


def write_table(path: str | Path, times, columns, values) -> None:
    frame = pd.DataFrame(np.asarray(values, dtype=np.float64), columns=list(columns))
    frame.insert(0, "ut_ms", np.asarray(times, dtype=np.int64))
    frame.to_csv(path, index=False, na_rep="", lineterminator="\n")


def read_table(path: str | Path) -> tuple[np.ndarray, tuple[str, ...], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.columns[0] != "ut_ms":
        raise SchemaError(f"{path}: first column must be 'ut_ms'")
    times = frame["ut_ms"].to_numpy(dtype=np.int64)
    columns = tuple(frame.columns[1:])
    values = frame[list(columns)].to_numpy(dtype=np.float64)
    return times, columns, values


def save_aligned(series: AlignedSeries, path: str | Path) -> None:
    write_table(path, series.grid.starts, series.columns, series.values)


def load_aligned(path: str | Path, grid: TimeGrid) -> AlignedSeries:
    times, columns, values = read_table(path)
    if times.size != grid.n_intervals or np.any(times != grid.starts):
        raise SchemaError(f"{path}: rows do not match the time grid")
    return _aligned(grid, columns, values, ~np.isfinite(values).all(axis=1))


__all__ = [
    "StreamKind", "EventLog", "TimeGrid", "AlignedSeries",
    "parse_stream", "make_log", "build_grid", "grid_for_logs",
    "resample_targets", "align_context", "interpolate",
    "write_table", "read_table", "save_aligned", "load_aligned",
    "MINUTE_MS", "GAP_LIMIT_MS",
]
