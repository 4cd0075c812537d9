"""Synthetic telemetry in the challenge file formats with a known generating model.

Every power line is

    base + sum_s w_s * A_s(t) * c(t) / C_REF * U(t)
         + w_lag * A_lag(t - lag) * c(t - lag) / C_REF * U(t - lag)
         + sum_k a_k * exp(-(t - last_k(t)) / tau_k)
         + noise

with ``A_s = max(cos(angle_s), 0)`` for the seven surfaces, ``U`` the
umbra coefficient and ``last_k(t)`` the latest activation of command ``k``
(no contribution before the first one).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .config import N_TARGETS, TRAIN_START, to_millis
from .errors import ConfigError
from .features import SURFACES, effective_area
from .ingest import MINUTE_MS

C_REF = 590.0
DAY_MINUTES = 1440.0
ANSWER_FORMAT = "mexpower-synth-answer/1"
STREAM_FILES = {"SAA": "saa.csv", "LTDATA": "ltdata.csv", "DMOP": "dmop.csv",
                "FTL": "ftl.csv", "EVTF": "evtf.csv", "POWER": "power.csv"}


@dataclass
class SynthScenario:
    """Scenario parameters; weight fields left as None are drawn from ``seed``.

    Weight fields accept scalars, which broadcast to their full shape:
    ``influx_weights`` (33, 7), ``lag_weights`` (33,), ``lag_surface`` (33,)
    surface indices, ``command_amplitudes`` (33, n_commands),
    ``command_tau_minutes`` (n_commands,), ``base`` (33,).
    """

    duration_days: float = 30.0
    orbit_minutes: float = 420.0
    eclipse_fraction: float = 0.1
    penumbra_minutes: float = 2.0
    n_commands: int = 6
    command_rate_per_day: float = 3.0
    fd_rate_per_day: float = 2.0
    n_active_surfaces: int = 2
    n_active_commands: int = 2
    lag_minutes: float = 60.0
    saa_step_minutes: float = 1.0
    power_step_minutes: float = 2.0
    ftl_types: tuple[str, ...] = ("EARTH", "NADIR")
    noise: float = 0.005
    seed: int = 0
    start_ms: int = to_millis(TRAIN_START)
    influx_weights: object = None
    lag_weights: object = None
    lag_surface: object = None
    command_amplitudes: object = None
    command_tau_minutes: object = None
    base: object = None

    def __post_init__(self):
        self.ftl_types = tuple(self.ftl_types)
        self.validate()

    @property
    def duration_minutes(self) -> float:
        return self.duration_days * DAY_MINUTES

    def validate(self) -> None:
        if not self.duration_days > 0:
            raise ConfigError(f"duration must be positive, got {self.duration_days} days")
        if not self.orbit_minutes > 0:
            raise ConfigError(f"orbit period must be positive, got {self.orbit_minutes}")
        if self.duration_minutes < 2 * self.orbit_minutes:
            raise ConfigError("duration must cover at least two orbit periods")
        if not 0 <= self.eclipse_fraction < 1:
            raise ConfigError(f"eclipse fraction must lie in [0, 1), got {self.eclipse_fraction}")
        if self.penumbra_minutes < 0 or (
                self.eclipse_fraction * self.orbit_minutes + 2 * self.penumbra_minutes
                >= self.orbit_minutes):
            raise ConfigError("shadow intervals must fit inside one orbit")
        if self.n_commands < 0 or not 0 <= self.n_active_commands <= self.n_commands:
            raise ConfigError("need 0 <= n_active_commands <= n_commands")
        if not 0 <= self.n_active_surfaces <= len(SURFACES):
            raise ConfigError(f"n_active_surfaces must lie in [0, {len(SURFACES)}]")
        if self.noise < 0 or not math.isfinite(self.noise):
            raise ConfigError(f"noise must be finite and >= 0, got {self.noise}")
        for name in ("command_rate_per_day", "fd_rate_per_day", "lag_minutes"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("saa_step_minutes", "power_step_minutes"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ftl_types"] = list(self.ftl_types)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d


def load_scenario(path) -> SynthScenario:
    """Scenario from a JSON object; unknown keys are rejected."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> SynthScenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    known = {f.name for f in fields(SynthScenario)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown scenario key(s): {unknown}")
    return SynthScenario(**data)


def command_names(n: int) -> list[str]:
    """One subsystem per command, e.g. ``ABXX100A``."""
    letters = "BCDEFGHJKLMNPQRSTUVWYZ"
    out = []
    for i in range(n):
        sub = "A" + letters[i % len(letters)] + letters[i // len(letters) % len(letters)] + "X"
        out.append(f"{sub}{100 + 7 * i:03d}A")
    return out


def _shaped(value, shape, name) -> np.ndarray:
    try:
        arr = np.broadcast_to(np.asarray(value, dtype=np.float64), shape).copy()
    except ValueError as exc:
        raise ConfigError(f"{name} must broadcast to shape {shape}") from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be finite")
    return arr


def resolve_weights(sc: SynthScenario) -> dict:
    """Full generating weights, drawing any unset field from the scenario seed."""
    rng = np.random.default_rng([sc.seed, 1])
    L, S, K = N_TARGETS, len(SURFACES), sc.n_commands

    active_s = np.sort(rng.choice(S, size=sc.n_active_surfaces, replace=False))
    w = np.zeros((L, S))
    for line in range(L):
        if active_s.size:
            on = rng.random(active_s.size) < 0.7
            on[rng.integers(active_s.size)] = True
            w[line, active_s[on]] = rng.uniform(0.05, 0.3, on.sum())
    lag_w = np.where(rng.random(L) < 0.5, rng.uniform(0.02, 0.1, L), 0.0)
    lag_s = np.argmax(w, axis=1) if active_s.size else np.zeros(L, dtype=int)
    if not active_s.size:
        lag_w[:] = 0.0

    active_k = np.sort(rng.choice(K, size=sc.n_active_commands, replace=False))
    amp = np.zeros((L, K))
    for line in range(L):
        if active_k.size:
            on = rng.random(active_k.size) < 0.6
            amp[line, active_k[on]] = rng.uniform(0.03, 0.2, on.sum())
    tau = rng.uniform(180.0, 600.0, K)
    base = rng.uniform(0.05, 0.5, L)

    influx = w if sc.influx_weights is None else _shaped(sc.influx_weights, (L, S), "influx_weights")
    lag = lag_w if sc.lag_weights is None else _shaped(sc.lag_weights, (L,), "lag_weights")
    lag_surface = (lag_s if sc.lag_surface is None
                   else _shaped(sc.lag_surface, (L,), "lag_surface").astype(np.int64))
    if np.any((lag_surface < 0) | (lag_surface >= S)):
        raise ConfigError(f"lag_surface entries must lie in [0, {S})")
    amps = amp if sc.command_amplitudes is None else _shaped(
        sc.command_amplitudes, (L, K), "command_amplitudes")
    taus = tau if sc.command_tau_minutes is None else _shaped(
        sc.command_tau_minutes, (K,), "command_tau_minutes")
    if np.any(taus <= 0):
        raise ConfigError("command time constants must be positive")
    bases = base if sc.base is None else _shaped(sc.base, (L,), "base")
    return {"influx_weights": influx, "lag_weights": lag,
            "lag_surface": lag_surface.astype(np.int64), "command_amplitudes": amps,
            "command_tau_minutes": taus, "base": bases}


def _angles(sc: SynthScenario, t_min: np.ndarray) -> dict[str, np.ndarray]:
    """Orbit-period sinusoids with a slow per-column modulation, in degrees."""
    rng = np.random.default_rng([sc.seed, 2])
    out = {}
    for col in ("sa", "sx", "sy", "sz"):
        if col == "sa":
            centre, amp = rng.uniform(10, 40), rng.uniform(15, 30)
        else:
            centre, amp = rng.uniform(60, 120), rng.uniform(30, 60)
        phase, slow_phase = rng.uniform(0, 2 * np.pi, 2)
        slow_amp = rng.uniform(10, 30)
        slow_period = rng.uniform(1, 4) * DAY_MINUTES
        a = (centre + amp * np.sin(2 * np.pi * t_min / sc.orbit_minutes + phase)
             + slow_amp * np.sin(2 * np.pi * t_min / slow_period + slow_phase))
        out[col] = np.clip(a, 0.0, 180.0)
    return out


def _surface_areas(angles: dict[str, np.ndarray]) -> np.ndarray:
    sa, sx, sy, sz = (angles[c] for c in ("sa", "sx", "sy", "sz"))
    cols = [sa, sx, 180.0 - sx, sy, 180.0 - sy, sz, 180.0 - sz]
    return np.column_stack([effective_area(c) for c in cols])


def _solar_constant(sc: SynthScenario, t_min):
    phase = np.random.default_rng([sc.seed, 3]).uniform(0, 2 * np.pi)
    return C_REF * (1 + 0.03 * np.sin(2 * np.pi * np.asarray(t_min) / (687 * DAY_MINUTES) + phase))


def _shadows(sc: SynthScenario) -> list[tuple[float, float, float, float]]:
    """(penumbra start, umbra start, umbra end, penumbra end) per orbit, minutes."""
    if sc.eclipse_fraction == 0:
        return []
    umbra = sc.eclipse_fraction * sc.orbit_minutes
    out = []
    k = 0
    while True:
        mid = (k + 0.5) * sc.orbit_minutes
        ps = mid - umbra / 2 - sc.penumbra_minutes
        pe = mid + umbra / 2 + sc.penumbra_minutes
        if pe >= sc.duration_minutes:
            break
        out.append((ps, mid - umbra / 2, mid + umbra / 2, pe))
        k += 1
    return out


def _umbra_at(shadows, t_min: np.ndarray) -> np.ndarray:
    u = np.ones_like(t_min, dtype=np.float64)
    for ps, us, ue, pe in shadows:
        u[(t_min >= ps) & (t_min < pe)] = 0.5
        u[(t_min >= us) & (t_min < ue)] = 0.0
    return u


def _poisson_times(rng, rate_per_day: float, span: float) -> np.ndarray:
    if rate_per_day <= 0:
        return np.zeros(0)
    mean_gap = DAY_MINUTES / rate_per_day
    out = []
    t = rng.exponential(mean_gap)
    while t < span:
        out.append(t)
        t += rng.exponential(mean_gap)
    return np.array(out)


def _to_ms(sc: SynthScenario, t_min) -> np.ndarray:
    return sc.start_ms + np.round(np.asarray(t_min) * MINUTE_MS).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SynthTruth:
    """Raw power sample times and the additive components of every line."""

    times_ms: np.ndarray
    components: dict
    weights: dict
    command_times: dict

    @property
    def power(self) -> np.ndarray:
        return sum(self.components.values())


def _influx_term(sc, weights, areas_at, t_min, shadows) -> np.ndarray:
    flux = areas_at(t_min) * (_solar_constant(sc, t_min) / C_REF * _umbra_at(shadows, t_min))[:, None]
    return flux @ weights.T


def simulate(sc: SynthScenario) -> SynthTruth:
    weights = resolve_weights(sc)
    span = sc.duration_minutes
    t_pow = np.arange(0.0, span + 1e-9, sc.power_step_minutes)
    shadows = _shadows(sc)

    def areas_at(t):
        return _surface_areas(_angles(sc, t))

    influx = _influx_term(sc, weights["influx_weights"], areas_at, t_pow, shadows)
    lagged_t = t_pow - sc.lag_minutes
    lag_flux = areas_at(lagged_t) * (_solar_constant(sc, lagged_t) / C_REF
                                     * _umbra_at(shadows, lagged_t))[:, None]
    lag = lag_flux[:, weights["lag_surface"]] * weights["lag_weights"][None, :]

    rng = np.random.default_rng([sc.seed, 4])
    names = command_names(sc.n_commands)
    command_times = {}
    response = np.zeros((t_pow.size, N_TARGETS))
    for k, name in enumerate(names):
        fires = _poisson_times(rng, sc.command_rate_per_day, span)
        # snap to the millisecond so the files carry exactly these instants
        fires = np.round(fires * MINUTE_MS) / MINUTE_MS
        command_times[name] = fires
        pos = np.searchsorted(fires, t_pow, side="right") - 1
        since = t_pow - fires[np.maximum(pos, 0)] if fires.size else np.zeros_like(t_pow)
        decay = np.where(pos >= 0, np.exp(-since / weights["command_tau_minutes"][k]), 0.0)
        response += decay[:, None] * weights["command_amplitudes"][:, k][None, :]

    noise = np.random.default_rng([sc.seed, 5]).normal(0.0, 1.0, (t_pow.size, N_TARGETS)) * sc.noise
    components = {"base": np.broadcast_to(weights["base"], (t_pow.size, N_TARGETS)).copy(),
                  "influx": influx, "lag": lag, "command": response, "noise": noise}
    return SynthTruth(_to_ms(sc, t_pow), components, weights, command_times)


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def generate(sc: SynthScenario, out_dir) -> dict[str, Path]:
    """Write the six stream tables and ``answer.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth = simulate(sc)
    span = sc.duration_minutes
    paths = {k: out_dir / v for k, v in STREAM_FILES.items()}

    t_saa = np.arange(0.0, span + 1e-9, sc.saa_step_minutes)
    angles = _angles(sc, t_saa)
    _write_csv(paths["SAA"], pd.DataFrame({"ut_ms": _to_ms(sc, t_saa), **angles}))

    t_lt = np.unique(np.append(np.arange(0.0, span, DAY_MINUTES), span))
    c = _solar_constant(sc, t_lt)
    sun_km = np.sqrt(1361.0 / c) * 1.495978707e8
    _write_csv(paths["LTDATA"], pd.DataFrame({
        "ut_ms": _to_ms(sc, t_lt), "sunmars_km": sun_km,
        "earthmars_km": np.full(t_lt.size, 2.0e8), "sunmarsearthangle_deg": np.full(t_lt.size, 20.0),
        "solarconstantmars": c,
        "eclipseduration_min": np.full(t_lt.size, sc.eclipse_fraction * sc.orbit_minutes),
        "occultationduration_min": np.zeros(t_lt.size)}))

    rng = np.random.default_rng([sc.seed, 6])
    dmop_t, dmop_n = [], []
    for name, fires in truth.command_times.items():
        dmop_t.extend(fires)
        dmop_n.extend([name] * fires.size)
    for j, t in enumerate(_poisson_times(rng, sc.fd_rate_per_day, span)):
        dmop_t.append(t)
        dmop_n.append(f"MAPO.{j + 1:07d}")
    order = np.argsort(np.array(dmop_t), kind="mergesort")
    _write_csv(paths["DMOP"], pd.DataFrame({
        "ut_ms": _to_ms(sc, np.array(dmop_t)[order]) if dmop_t else np.zeros(0, dtype=np.int64),
        "subsystem": np.array(dmop_n, dtype=object)[order] if dmop_n else []}))

    ftl_rows = []
    n_orbits = int(span // sc.orbit_minutes)
    for k in range(n_orbits):
        start = k * sc.orbit_minutes + rng.uniform(0, 0.5) * sc.orbit_minutes
        length = rng.uniform(0.1, 0.4) * sc.orbit_minutes
        kind = sc.ftl_types[rng.integers(len(sc.ftl_types))] if sc.ftl_types else None
        if kind is not None:
            ftl_rows.append((start, min(start + length, span), kind, bool(rng.random() < 0.3)))
    _write_csv(paths["FTL"], pd.DataFrame({
        "utb_ms": _to_ms(sc, [r[0] for r in ftl_rows]), "ute_ms": _to_ms(sc, [r[1] for r in ftl_rows]),
        "type": [r[2] for r in ftl_rows], "flagcomms": [r[3] for r in ftl_rows]}))

    evtf = []
    for ps, us, ue, pe in _shadows(sc):
        evtf += [(ps, "MAR_PENUMBRA_START"), (us, "MAR_UMBRA_START"),
                 (ue, "MAR_UMBRA_END"), (pe, "MAR_PENUMBRA_END")]
    for k in range(n_orbits):
        evtf.append(((k + 0.25) * sc.orbit_minutes, "PERICENTRE_PASSAGE"))
    evtf.sort(key=lambda e: e[0])
    _write_csv(paths["EVTF"], pd.DataFrame({
        "ut_ms": _to_ms(sc, [e[0] for e in evtf]), "description": [e[1] for e in evtf]}))

    power = pd.DataFrame(truth.power, columns=power_columns())
    power.insert(0, "ut_ms", truth.times_ms)
    _write_csv(paths["POWER"], power)

    answer = answer_dict(sc, truth.weights)
    paths["ANSWER"] = out_dir / "answer.json"
    paths["ANSWER"].write_text(json.dumps(answer, indent=2, sort_keys=True) + "\n")
    return paths


def power_columns() -> list[str]:
    return [f"NPWD{2000 + 10 * i + 1:04d}" for i in range(N_TARGETS)]


def answer_dict(sc: SynthScenario, weights: dict) -> dict:
    return {
        "format": ANSWER_FORMAT,
        "scenario": sc.to_dict(),
        "surfaces": list(SURFACES),
        "commands": command_names(sc.n_commands),
        "targets": power_columns(),
        "c_ref": C_REF,
        "start_ms": int(sc.start_ms),
        "end_ms": int(_to_ms(sc, sc.duration_minutes)),
        "midpoint_ms": int(_to_ms(sc, sc.duration_minutes / 2)),
        "model": ("base + sum_s influx_weights[s]*A_s(t)*c(t)/c_ref*U(t)"
                  " + lag_weights*A_{lag_surface}(t-lag)*c(t-lag)/c_ref*U(t-lag)"
                  " + sum_k command_amplitudes[k]*exp(-(t-last_k(t))/command_tau_minutes[k])"
                  " + noise*N(0,1)"),
        "weights": {k: np.asarray(v).tolist() for k, v in weights.items()},
    }


def planted_feature_names(answer: dict, horizons) -> list[tuple[str, ...]]:
    """Feature groups driven by nonzero generating weights.

    A weighted (or lagged) surface maps to its influx and history-sum
    columns, which all carry the energy through that surface; a responding
    command maps to its time-since column.
    """
    w = answer["weights"]
    surfaces = answer["surfaces"]
    influx = np.asarray(w["influx_weights"], dtype=np.float64)
    used = set(np.flatnonzero(np.any(influx != 0, axis=0)).tolist())
    lag = np.asarray(w["lag_weights"], dtype=np.float64)
    used |= {int(x) for x in np.asarray(w["lag_surface"])[lag != 0]}
    groups: list[tuple[str, ...]] = []
    for s in sorted(used):
        name = surfaces[s]
        groups.append((f"influx_{name}",) + tuple(f"hist_h{int(h):03d}_{name}" for h in horizons))
    amps = np.asarray(w["command_amplitudes"], dtype=np.float64)
    if amps.size:
        for k in np.flatnonzero(np.any(amps != 0, axis=0)):
            groups.append((f"tsla_cmd_{answer['commands'][k]}",))
    return groups
