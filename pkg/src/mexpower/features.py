"""Feature families computed on a time grid.

* energy influx through the solar panels and the six cuboid faces,
* historical (lagged cumulative) influx,
* DMOP command features: time since last activation and binary triggers,
* FTL pointing-event time proportions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import THETA_MINUTES, default_horizons
from .errors import SchemaError
from .ingest import (
    GAP_LIMIT_MS,
    MINUTE_MS,
    AlignedSeries,
    EventLog,
    StreamKind,
    TimeGrid,
    interpolate,
    read_table,
    write_table,
)

logger = logging.getLogger(__name__)

SURFACES = ("panels", "px", "mx", "py", "my", "pz", "mz")
FAMILIES = ("influx", "historical", "dmop_tsla", "dmop_indicator", "ftl")


def effective_area(alpha):
    """Effective area of a unit surface seen at solar aspect angle ``alpha`` (degrees)."""
    return np.maximum(np.cos(np.deg2rad(alpha)), 0.0)


@dataclass(frozen=True, eq=False)
class SurfaceSet:
    """Solar aspect angle series for each of the seven surfaces."""

    times: np.ndarray
    angles: np.ndarray
    names: tuple[str, ...] = SURFACES

    def __post_init__(self):
        if self.angles.shape != (self.times.size, len(self.names)):
            raise SchemaError("surface angle matrix does not match its timestamps")
        finite = self.angles[np.isfinite(self.angles)]
        if finite.size and (finite.min() < 0 or finite.max() > 180):
            raise SchemaError("solar aspect angles must lie in [0, 180] degrees")


def surfaces_from_saa(saa: EventLog) -> SurfaceSet:
    """Panel angle plus the angle of each outer face normal.

    The SAA columns give the angle to the +x, +y and +z axes; the opposite
    face normal points the other way, hence ``180 - angle``.
    """
    if saa.kind is not StreamKind.SAA:
        raise SchemaError(f"expected an SAA log, got {saa.kind.value}")
    col = {name: saa.values[:, i] for i, name in enumerate(saa.columns)}
    angles = np.column_stack([
        col["sa"],
        col["sx"], 180.0 - col["sx"],
        col["sy"], 180.0 - col["sy"],
        col["sz"], 180.0 - col["sz"],
    ]) if len(saa) else np.zeros((0, 7))
    return SurfaceSet(saa.times, angles)


_SHADOW = re.compile(r"^(?:(?P<body>\w+?)_)?(?P<kind>PENUMBRA|UMBRA)_(?P<edge>START|END)$")
_FAR = np.iinfo(np.int64).max // 4


def _merge(starts: np.ndarray, ends: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Union of half-open ranges as sorted, disjoint ranges."""
    if starts.size == 0:
        return starts.astype(np.int64), ends.astype(np.int64)
    order = np.argsort(starts, kind="stable")
    s, e = starts[order], ends[order]
    out_s, out_e = [int(s[0])], [int(e[0])]
    for a, b in zip(s[1:], e[1:]):
        if a <= out_e[-1]:
            out_e[-1] = max(out_e[-1], int(b))
        else:
            out_s.append(int(a))
            out_e.append(int(b))
    return np.array(out_s, dtype=np.int64), np.array(out_e, dtype=np.int64)


def _inside(starts, ends, times) -> np.ndarray:
    times = np.asarray(times, dtype=np.int64)
    if starts.size == 0:
        return np.zeros(times.shape, dtype=bool)
    idx = np.searchsorted(starts, times, side="right") - 1
    return (idx >= 0) & (times < ends[np.maximum(idx, 0)])


@dataclass(frozen=True, eq=False)
class UmbraSeries:
    """Shadow intervals; evaluates to 0 in umbra, 0.5 in penumbra, 1 in sunlight."""

    umbra: tuple[np.ndarray, np.ndarray]
    penumbra: tuple[np.ndarray, np.ndarray]

    def at(self, times) -> np.ndarray:
        in_umbra = _inside(*self.umbra, times)
        in_penumbra = _inside(*self.penumbra, times)
        return np.where(in_umbra, 0.0, np.where(in_penumbra, 0.5, 1.0))


def umbra_series(evtf: EventLog | None) -> UmbraSeries:
    """Pair the START/END shadow events of every body into intervals.

    An END without a preceding START opens at the beginning of time, a START
    never closed runs to the end of time.
    """
    ranges = {"UMBRA": ([], []), "PENUMBRA": ([], [])}
    if evtf is not None and len(evtf):
        if evtf.kind is not StreamKind.EVTF:
            raise SchemaError(f"expected an EVTF log, got {evtf.kind.value}")
        depth: dict[tuple[str, str], int] = {}
        opened: dict[tuple[str, str], int] = {}
        for t, label in zip(evtf.times, evtf.labels):
            m = _SHADOW.match(str(label).strip().upper())
            if m is None:
                continue
            key = (m["body"] or "", m["kind"])
            level = depth.get(key, 0)
            if m["edge"] == "START":
                if level == 0:
                    opened[key] = int(t)
                depth[key] = level + 1
            elif level == 0:
                ranges[m["kind"]][0].append(-_FAR)
                ranges[m["kind"]][1].append(int(t))
            else:
                depth[key] = level - 1
                if level == 1:
                    ranges[m["kind"]][0].append(opened.pop(key))
                    ranges[m["kind"]][1].append(int(t))
        for key, start in opened.items():
            ranges[key[1]][0].append(start)
            ranges[key[1]][1].append(_FAR)
    umbra = _merge(np.array(ranges["UMBRA"][0], dtype=np.int64),
                   np.array(ranges["UMBRA"][1], dtype=np.int64))
    penumbra = _merge(np.array(ranges["PENUMBRA"][0], dtype=np.int64),
                      np.array(ranges["PENUMBRA"][1], dtype=np.int64))
    return UmbraSeries(umbra, penumbra)


def umbra_coefficient(evtf: EventLog | UmbraSeries, t):
    series = evtf if isinstance(evtf, UmbraSeries) else umbra_series(evtf)
    out = series.at(np.atleast_1d(t))
    return float(out[0]) if np.ndim(t) == 0 else out


@dataclass(frozen=True, eq=False)
class FeatureBlock:
    grid: TimeGrid
    names: tuple[str, ...]
    values: np.ndarray
    tags: tuple[str, ...]

    def __post_init__(self):
        if self.values.shape != (self.grid.n_intervals, len(self.names)):
            raise SchemaError("feature block shape does not match its grid")
        if len(self.tags) != len(self.names):
            raise SchemaError("one provenance tag per column required")

    @property
    def width(self) -> int:
        return len(self.names)

    @property
    def tag(self) -> str:
        kinds = set(self.tags)
        return kinds.pop() if len(kinds) == 1 else "mixed"

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def _block(grid, names, values, tag) -> FeatureBlock:
    values = np.asarray(values, dtype=np.float64).reshape(grid.n_intervals, len(names))
    values.setflags(write=False)
    return FeatureBlock(grid, tuple(names), values, (tag,) * len(names))


@dataclass(frozen=True, eq=False)
class InfluxMatrix:
    """Energy through each surface per interval, in (solar-constant units x minutes)."""

    grid: TimeGrid
    surfaces: tuple[str, ...]
    values: np.ndarray

    def block(self) -> FeatureBlock:
        return _block(self.grid, [f"influx_{s}" for s in self.surfaces],
                      self.values, "influx")


def _solar_at(solar_const, nodes: np.ndarray) -> np.ndarray:
    if np.isscalar(solar_const):
        return np.full(nodes.size, float(solar_const))
    if isinstance(solar_const, AlignedSeries):
        times, vals = solar_const.grid.starts, solar_const.values
        col = (solar_const.columns.index("solarconstantmars")
               if "solarconstantmars" in solar_const.columns else 0)
    elif isinstance(solar_const, EventLog):
        times, vals = solar_const.times, solar_const.values
        col = (solar_const.columns.index("solarconstantmars")
               if "solarconstantmars" in solar_const.columns else 0)
    else:
        raise TypeError(f"unsupported solar constant source {type(solar_const)!r}")
    # slow stream: bridge every gap
    return interpolate(times, vals[:, col], nodes, gap_limit_ms=None)[:, 0]


def energy_influx(surfaces: SurfaceSet, solar_const, umbra: UmbraSeries,
                  grid: TimeGrid, gap_limit_ms: int = GAP_LIMIT_MS) -> InfluxMatrix:
    """Trapezoid-rule integral of ``A_eff * c * U`` over each interval.

    Integration nodes are the interval boundaries plus every raw SAA sample;
    the umbra coefficient is sampled at the nodes.  Segments lying inside an
    SAA gap longer than ``gap_limit_ms`` are skipped, and an interval with no
    usable segment is NaN.
    """
    edges = grid.edges
    raw = surfaces.times
    inner = raw[(raw > edges[0]) & (raw < edges[-1])]
    nodes = np.unique(np.concatenate([edges, inner]))

    alpha = interpolate(raw, surfaces.angles, nodes, gap_limit_ms)
    c = _solar_at(solar_const, nodes)
    u = umbra.at(nodes)
    g = effective_area(alpha) * (c * u)[:, None]

    dt = np.diff(nodes) / MINUTE_MS
    seg = 0.5 * dt[:, None] * (g[:-1] + g[1:])
    valid = np.isfinite(seg)
    if raw.size >= 2:
        mid = nodes[:-1] + (nodes[1:] - nodes[:-1]) // 2
        j = np.searchsorted(raw, mid, side="right")
        in_range = (j > 0) & (j < raw.size)
        j = np.clip(j, 1, raw.size - 1)
        ok = in_range & ((raw[j] - raw[j - 1]) <= gap_limit_ms)
        valid &= ok[:, None]
    else:
        valid[:] = False
    owner = np.searchsorted(edges, nodes[:-1], side="right") - 1
    n = grid.n_intervals
    out = np.empty((n, len(surfaces.names)))
    for s in range(len(surfaces.names)):
        v = valid[:, s]
        total = np.bincount(owner[v], weights=seg[v, s], minlength=n)
        used = np.bincount(owner[v], minlength=n)
        out[:, s] = np.where(used > 0, total, np.nan)
    out.setflags(write=False)
    return InfluxMatrix(grid, surfaces.names, out)


def historical_features(influx: InfluxMatrix, horizons) -> FeatureBlock:
    """Sum of the last ``H`` intervals of influx, the current one included.

    History before the grid start counts as zero; missing influx values
    count as zero too, and a window with no finite value is NaN.
    """
    horizons = sorted({int(h) for h in horizons})
    if not horizons or horizons[0] <= 0:
        raise ValueError(f"history horizons must be positive integers, got {horizons}")
    energy = np.nan_to_num(influx.values, nan=0.0)
    finite = np.isfinite(influx.values).astype(np.int64)
    n = energy.shape[0]
    acc = np.zeros_like(energy)
    seen = np.zeros_like(finite)
    names, columns = [], []
    done = 0
    for h in horizons:
        for j in range(done, min(h, n)):
            acc[j:] += energy[:n - j]
            seen[j:] += finite[:n - j]
        done = h
        window = np.where(seen > 0, acc, np.nan)
        for s, surface in enumerate(influx.surfaces):
            names.append(f"hist_h{h:03d}_{surface}")
            columns.append(window[:, s].copy())
    values = np.column_stack(columns) if columns else np.zeros((n, 0))
    return _block(influx.grid, names, values, "historical")


@dataclass(frozen=True)
class DmopVocabulary:
    subsystems: frozenset[str]
    pairs: frozenset[tuple[str, str]]
    flight_events: frozenset[str]
    skipped: int = 0

    @property
    def multi_command_subsystems(self) -> tuple[str, ...]:
        counts: dict[str, int] = {}
        for sub, _ in self.pairs:
            counts[sub] = counts.get(sub, 0) + 1
        return tuple(sorted(s for s, c in counts.items() if c >= 2))

    def to_dict(self) -> dict:
        return {
            "subsystems": sorted(self.subsystems),
            "pairs": sorted([list(p) for p in self.pairs]),
            "flight_events": sorted(self.flight_events),
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, data: dict) -> DmopVocabulary:
        return cls(frozenset(data["subsystems"]),
                   frozenset(tuple(p) for p in data["pairs"]),
                   frozenset(data["flight_events"]),
                   int(data.get("skipped", 0)))


def split_command(name: str) -> tuple[str, str, str] | None:
    """Classify a DMOP record.

    ``"MAPO.000005"`` -> ``("fd", "MAPO", "")`` and ``"ASXX383C"`` ->
    ``("cmd", "ASXX", "383C")``.  Records with no command part give None.
    """
    name = name.strip()
    if "." in name:
        event = name.split(".", 1)[0]
        return ("fd", event, "") if event else None
    if len(name) <= 4:
        return None
    return "cmd", name[:4], name[4:]


def dmop_vocabulary(dmop: EventLog) -> DmopVocabulary:
    subsystems, pairs, events = set(), set(), set()
    skipped = 0
    for label in dmop.labels:
        parsed = split_command(str(label))
        if parsed is None:
            skipped += 1
            continue
        kind, head, tail = parsed
        if kind == "fd":
            events.add(head)
        else:
            subsystems.add(head)
            pairs.add((head, tail))
    if skipped:
        logger.warning("skipped %d DMOP records without a command part", skipped)
    return DmopVocabulary(frozenset(subsystems), frozenset(pairs), frozenset(events), skipped)


def _activations(dmop: EventLog, grid: TimeGrid) -> dict[str, np.ndarray]:
    """Sorted interval indices at which each feature key fires."""
    hits: dict[str, list[int]] = {}
    idx = grid.locate(dmop.times)
    for i, label in zip(idx, dmop.labels):
        if not 0 <= i < grid.n_intervals:
            continue
        parsed = split_command(str(label))
        if parsed is None:
            continue
        kind, head, tail = parsed
        if kind == "fd":
            hits.setdefault(f"fd_{head}", []).append(int(i))
        else:
            hits.setdefault(f"sub_{head}", []).append(int(i))
            hits.setdefault(f"cmd_{head}{tail}", []).append(int(i))
    return {k: np.unique(np.array(v, dtype=np.int64)) for k, v in hits.items()}


def _tsla_keys(vocab: DmopVocabulary) -> list[str]:
    keys = [f"fd_{e}" for e in vocab.flight_events]
    keys += [f"cmd_{s}{c}" for s, c in vocab.pairs]
    keys += [f"sub_{s}" for s in vocab.multi_command_subsystems]
    return sorted(keys)


def dmop_time_since(dmop: EventLog, vocab: DmopVocabulary, grid: TimeGrid,
                    theta: float = THETA_MINUTES) -> FeatureBlock:
    """Minutes since the key last fired, saturating at ``theta``.

    Every key starts saturated; an activation inside interval ``i`` resets
    the value to 0 there, and each following interval adds ``delta_t``.
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    fired = _activations(dmop, grid)
    keys = _tsla_keys(vocab)
    n = grid.n_intervals
    rows = np.arange(n, dtype=np.int64)
    values = np.empty((n, len(keys)))
    for j, key in enumerate(keys):
        act = fired.get(key)
        if act is None or act.size == 0:
            values[:, j] = theta
            continue
        pos = np.searchsorted(act, rows, side="right") - 1
        since = (rows - act[np.maximum(pos, 0)]) * float(grid.delta_t)
        values[:, j] = np.where(pos >= 0, np.minimum(since, theta), theta)
    return _block(grid, [f"tsla_{k}" for k in keys], values, "dmop_tsla")


def dmop_indicators(dmop: EventLog, vocab: DmopVocabulary, grid: TimeGrid) -> FeatureBlock:
    fired = _activations(dmop, grid)
    keys = sorted([f"sub_{s}" for s in vocab.subsystems]
                  + [f"fd_{e}" for e in vocab.flight_events])
    values = np.zeros((grid.n_intervals, len(keys)))
    for j, key in enumerate(keys):
        act = fired.get(key)
        if act is not None:
            values[act, j] = 1.0
    return _block(grid, [f"ind_{k}" for k in keys], values, "dmop_indicator")


def ftl_proportions(ftl: EventLog, grid: TimeGrid, types=None) -> FeatureBlock:
    """Fraction of each interval during which an event of each type is in progress."""
    if ftl.kind is not StreamKind.FTL:
        raise SchemaError(f"expected an FTL log, got {ftl.kind.value}")
    bad = np.flatnonzero(ftl.ends < ftl.times)
    if bad.size:
        i = int(bad[0])
        raise SchemaError(f"FTL record {i} ({ftl.labels[i]}) ends before it starts")
    labels = np.array([str(x) for x in ftl.labels], dtype=object)
    if types is None:
        types = sorted(set(labels))
    edges = grid.edges
    lengths = np.diff(edges).astype(np.float64)
    values = np.zeros((grid.n_intervals, len(types)))
    for j, kind in enumerate(types):
        mask = labels == kind
        starts, ends = _merge(ftl.times[mask], ftl.ends[mask])
        if starts.size == 0:
            continue
        covered = np.concatenate([[0], np.cumsum(ends - starts)])

        def coverage(t):
            k = np.searchsorted(starts, t, side="right") - 1
            kk = np.maximum(k, 0)
            part = np.clip(t - starts[kk], 0, ends[kk] - starts[kk])
            return np.where(k >= 0, covered[kk] + part, 0)

        c = coverage(edges)
        values[:, j] = np.diff(c) / lengths
    return _block(grid, [f"ftl_{t}" for t in types], values, "ftl")


def assemble_features(blocks) -> FeatureBlock:
    """Concatenate blocks in family order, columns alphabetical within a family."""
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no feature blocks to assemble")
    grid = blocks[0].grid
    for b in blocks[1:]:
        if b.grid != grid:
            raise SchemaError("feature blocks are defined on different grids")
    cols: dict[str, tuple[str, np.ndarray]] = {}
    for b in blocks:
        for name, tag, j in zip(b.names, b.tags, range(b.width)):
            if name in cols:
                raise SchemaError(f"duplicate feature column {name!r}")
            cols[name] = (tag, b.values[:, j])
    rank = {f: i for i, f in enumerate(FAMILIES)}
    order = sorted(cols, key=lambda name: (rank.get(cols[name][0], len(rank)),
                                           cols[name][0], name))
    if order:
        values = np.column_stack([cols[name][1] for name in order])
    else:
        values = np.zeros((grid.n_intervals, 0))
    values.setflags(write=False)
    return FeatureBlock(grid, tuple(order), values, tuple(cols[n][0] for n in order))


@dataclass
class FeatureManifest:
    grid: TimeGrid
    horizons: tuple[int, ...]
    theta: float
    boundary: int
    vocabulary: DmopVocabulary
    ftl_types: tuple[str, ...]
    columns: tuple[str, ...]
    tags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "format": "mexpower-features/1",
            "grid": self.grid.to_dict(),
            "delta_t": self.grid.delta_t,
            "horizons": list(self.horizons),
            "theta": self.theta,
            "boundary": self.boundary,
            "vocabulary": self.vocabulary.to_dict(),
            "ftl_types": list(self.ftl_types),
            "columns": list(self.columns),
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> FeatureManifest:
        if data.get("format") != "mexpower-features/1":
            raise SchemaError("not a feature manifest")
        return cls(TimeGrid(**data["grid"]), tuple(data["horizons"]), data["theta"],
                   int(data["boundary"]), DmopVocabulary.from_dict(data["vocabulary"]),
                   tuple(data["ftl_types"]), tuple(data["columns"]), tuple(data["tags"]))

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def featurize(logs: dict, grid: TimeGrid, boundary: int, horizons=None,
              theta: float = THETA_MINUTES,
              gap_limit_ms: int = GAP_LIMIT_MS) -> tuple[FeatureBlock, FeatureManifest]:
    """Run every feature family and assemble them.

    ``logs`` maps :class:`StreamKind` to parsed logs; the DMOP vocabulary
    and the FTL event types are taken from records before ``boundary``.
    """
    logs = {StreamKind(k): v for k, v in logs.items()}
    horizons = tuple(sorted(horizons or default_horizons(grid.delta_t)))
    surfaces = surfaces_from_saa(logs[StreamKind.SAA])
    umbra = umbra_series(logs.get(StreamKind.EVTF))
    influx = energy_influx(surfaces, logs[StreamKind.LTDATA], umbra, grid, gap_limit_ms)
    blocks = [influx.block(), historical_features(influx, horizons)]

    dmop = logs.get(StreamKind.DMOP)
    if dmop is not None:
        vocab = dmop_vocabulary(dmop.before(boundary))
        blocks += [dmop_time_since(dmop, vocab, grid, theta),
                   dmop_indicators(dmop, vocab, grid)]
    else:
        vocab = DmopVocabulary(frozenset(), frozenset(), frozenset())

    ftl = logs.get(StreamKind.FTL)
    ftl_types: tuple[str, ...] = ()
    if ftl is not None:
        ftl_types = tuple(sorted({str(x) for x in ftl.before(boundary).labels}))
        blocks.append(ftl_proportions(ftl, grid, ftl_types))

    block = assemble_features(blocks)
    manifest = FeatureManifest(grid, horizons, theta, int(boundary), vocab,
                               ftl_types, block.names, block.tags)
    return block, manifest


def save_features(block: FeatureBlock, manifest: FeatureManifest, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_table(directory / "features.csv", block.grid.starts, block.names, block.values)
    (directory / "features.manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def load_features(directory) -> tuple[FeatureBlock, FeatureManifest]:
    directory = Path(directory)
    manifest = FeatureManifest.from_dict(
        json.loads((directory / "features.manifest.json").read_text()))
    times, names, values = read_table(directory / "features.csv")
    if names != manifest.columns:
        raise SchemaError("feature table columns do not match the manifest")
    if times.size != manifest.grid.n_intervals or np.any(times != manifest.grid.starts):
        raise SchemaError("feature table rows do not match the manifest grid")
    values.setflags(write=False)
    return FeatureBlock(manifest.grid, names, values, manifest.tags), manifest
