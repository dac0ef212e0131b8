"""Semi-Markov ground-truth simulator for schema-compatible synthetic datasets.

Simulates the clock-reset competing-risks process per mission: in each state,
every candidate transition draws a latent time by inverse transform on its
(covariate-scaled) cumulative hazard, the minimum wins, and the clock resets.
Stop arrivals on a regular station grid turn the continuous path into a
panel, so rebuilt episodes reflect the real observation scheme.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .episodes import MissionTrajectory, TrajectoryStop
from .errors import ConfigError, DataError
from .ingestion import time_slot_for
from .states import (
    CENSORED, Episode, StateSpace, Stratum, UnitKey, default_three_state,
    default_four_state,
)


@dataclass(frozen=True)
class ConstantHazard:
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise DataError(f"rate must be >= 0, got {self.rate}")

    def cumulative(self, t: float) -> float:
        return self.rate * t

    def inverse(self, h: float) -> float:
        if self.rate == 0:
            return math.inf
        return h / self.rate


@dataclass(frozen=True)
class WeibullHazard:
    """Cumulative hazard (t / scale) ** shape."""

    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise DataError("Weibull shape and scale must be positive")

    def cumulative(self, t: float) -> float:
        return (t / self.scale) ** self.shape

    def inverse(self, h: float) -> float:
        return self.scale * h ** (1.0 / self.shape)


@dataclass(frozen=True)
class PiecewiseConstantHazard:
    """Rates per interval; ``breaks`` are the interior cut points."""

    breaks: tuple
    rates: tuple

    def __post_init__(self):
        if len(self.rates) != len(self.breaks) + 1:
            raise DataError("need one rate per interval (len(breaks) + 1)")
        if any(r < 0 for r in self.rates):
            raise DataError("rates must be >= 0")
        if any(b <= a for a, b in zip((0.0,) + tuple(self.breaks), self.breaks)):
            raise DataError("breaks must be strictly increasing and positive")

    def cumulative(self, t: float) -> float:
        edges = (0.0,) + tuple(self.breaks) + (math.inf,)
        total = 0.0
        for rate, lo, hi in zip(self.rates, edges, edges[1:]):
            if t <= lo:
                break
            total += rate * (min(t, hi) - lo)
        return total

    def inverse(self, h: float) -> float:
        edges = (0.0,) + tuple(self.breaks) + (math.inf,)
        acc = 0.0
        for rate, lo, hi in zip(self.rates, edges, edges[1:]):
            width = hi - lo
            chunk = rate * width if math.isfinite(width) else math.inf
            if rate > 0 and acc + chunk >= h:
                return lo + (h - acc) / rate
            acc += chunk
        return math.inf


def draw_sojourn(hazard, scale_factor: float, rng) -> float:
    """Inverse-transform draw: solve scale * H(t) = Exp(1)."""
    if scale_factor <= 0:
        return math.inf
    return hazard.inverse(rng.exponential() / scale_factor)


def default_covariate_sampler(names, rng) -> dict:
    """Standard-normal covariates; adverse_weather is Bernoulli(0.52)."""
    values = {}
    for name in names:
        if name == "adverse_weather":
            values[name] = float(rng.random() < 0.52)
        else:
            values[name] = float(rng.standard_normal())
    return values


@dataclass
class IntensitySpec:
    """Ground-truth transition intensities with optional covariate effects."""

    space: StateSpace
    baselines: dict
    beta: dict = field(default_factory=dict)
    covariate_names: tuple = ()
    covariate_sampler: object = None
    horizon: float = 130.0
    stop_interval: float = 4.0
    initial_probs: tuple | None = None

    def __post_init__(self):
        if self.horizon <= 0 or self.stop_interval <= 0:
            raise DataError("horizon and stop_interval must be positive")
        for transition in self.baselines:
            if transition not in self.space.allowed_transitions:
                raise DataError(f"baseline given for disallowed transition {transition}")
        for transition, b in self.beta.items():
            if len(np.atleast_1d(b)) != len(self.covariate_names):
                raise DataError(
                    f"beta for {transition} must have {len(self.covariate_names)} entries"
                )
        if self.covariate_sampler is None:
            self.covariate_sampler = default_covariate_sampler

    def exits(self, state: int):
        return [(t, h) for t, h in sorted(self.baselines.items()) if t[0] == state]


@dataclass
class SimulationResult:
    trajectories: list
    true_episodes: list
    spec: IntensitySpec
    seed: int
    n_missions: int


def representative_delays(space: StateSpace) -> list[float]:
    """One in-band delay value per state, used when emitting panel rows."""
    taus = space.thresholds
    delays = [0.0]
    for k in range(1, space.n_states - 1):
        delays.append((taus[k - 1] + taus[k]) / 2.0)
    delays.append(taus[-1] + 5.0)
    return delays


BASE_MONDAY = datetime.date(2023, 9, 4)


def mission_schedule(m: int) -> tuple[datetime.date, datetime.datetime]:
    """Deterministic weekday date and in-window start time for mission m."""
    week, rest = divmod(m, 60)
    day_idx, slot = divmod(rest, 12)
    date = BASE_MONDAY + datetime.timedelta(days=7 * week + day_idx)
    start = datetime.datetime.combine(date, datetime.time(hour=6 + slot, minute=(m * 13) % 30))
    return date, start


def simulate_sojourns(spec: IntensitySpec, n_missions: int, seed: int) -> SimulationResult:
    """Simulate missions; returns panel trajectories and exact true episodes."""
    master = np.random.SeedSequence(seed)
    children = master.spawn(n_missions)
    delays = representative_delays(spec.space)
    n_stops = int(math.floor(spec.horizon / spec.stop_interval)) + 1

    trajectories, true_episodes = [], []
    for m in range(n_missions):
        rng = np.random.default_rng(children[m])
        date, start = mission_schedule(m)
        mission = f"M{m:05d}"
        z = spec.covariate_sampler(spec.covariate_names, rng)
        z_vec = np.array([z[name] for name in spec.covariate_names])

        if spec.initial_probs is None:
            state = 0
        else:
            state = int(rng.choice(spec.space.n_states, p=spec.initial_probs))

        # continuous clock-reset path: list of (entry_time, state)
        path = [(0.0, state)]
        t = 0.0
        stratum = Stratum(direction=0)
        slot = time_slot_for(start)
        while t < spec.horizon:
            exits = spec.exits(state)
            best_u, best_s = math.inf, None
            for (r, s), hazard in exits:
                beta = spec.beta.get((r, s))
                scale = float(np.exp(beta @ z_vec)) if beta is not None else 1.0
                u = draw_sojourn(hazard, scale, rng)
                if u < best_u:
                    best_u, best_s = u, s
            if best_s is None or t + best_u >= spec.horizon:
                duration = spec.horizon - t
                if duration > 0:
                    true_episodes.append(Episode(
                        unit=UnitKey("SIM", mission, date),
                        stratum=stratum, from_state=state,
                        duration=duration, to_state=CENSORED, covariates=dict(z),
                    ))
                break
            true_episodes.append(Episode(
                unit=UnitKey("SIM", mission, date),
                stratum=stratum, from_state=state,
                duration=best_u, to_state=best_s, covariates=dict(z),
            ))
            t += best_u
            state = best_s
            path.append((t, state))

        # panel observation on the regular stop grid (right-continuous path)
        entry_times = [p[0] for p in path]
        stops = []
        for i in range(n_stops):
            arrival = i * spec.stop_interval
            k = np.searchsorted(entry_times, arrival, side="right") - 1
            stops.append(TrajectoryStop(
                station=f"ST{i:02d}",
                arrival_minutes=arrival,
                delay=delays[path[k][1]],
                covariates=dict(z),
                zone=None,
            ))
        trajectories.append(MissionTrajectory(
            mission=mission, day=date, direction=0, time_slot=slot,
            stops=tuple(stops),
        ))
    return SimulationResult(
        trajectories=trajectories, true_episodes=true_episodes,
        spec=spec, seed=seed, n_missions=n_missions,
    )


def true_elos(spec: IntensitySpec, tau_max: float, state: int,
              z=None, n_mc: int = 100_000, seed: int = 0) -> float:
    """Ground-truth restricted mean sojourn time in ``state``.

    Analytic for all-constant exit rates; high-n Monte Carlo otherwise.
    ``z`` is a covariate dict (defaults to the zero vector).
    """
    z_vec = (np.array([z[n] for n in spec.covariate_names])
             if z else np.zeros(len(spec.covariate_names)))
    exits = spec.exits(state)
    scales = {
        t: float(np.exp(spec.beta[t] @ z_vec)) if t in spec.beta else 1.0
        for t, _ in exits
    }
    if all(isinstance(h, ConstantHazard) for _, h in exits):
        total = sum(h.rate * scales[t] for t, h in exits)
        if total == 0:
            return float(tau_max)
        return (1.0 - math.exp(-total * tau_max)) / total
    rng = np.random.default_rng(seed)
    sojourns = np.full(n_mc, np.inf)
    for t, hazard in exits:
        draws = np.array([draw_sojourn(hazard, scales[t], rng) for _ in range(n_mc)])
        sojourns = np.minimum(sojourns, draws)
    return float(np.minimum(sojourns, tau_max).mean())


WEATHER_ZONES = ("malpensa", "linate", "orio")


def _station_meta(n_stops: int):
    """Zone by route quarter and weather zone by route third, per station."""
    meta = []
    for i in range(n_stops):
        quarter = min(3, i * 4 // n_stops)
        third = min(2, i * 3 // n_stops)
        meta.append((f"ST{i:02d}", f"Z{quarter + 1}", WEATHER_ZONES[third]))
    return meta


def emit_stop_files(result: SimulationResult, outdir, delimiter: str = ",") -> dict:
    """Write stops/weather/frequency files plus station map and ground truth.

    The emitted files are directly ingestible; scheduled arrivals are chosen so
    that scheduled + delay reproduces the simulated panel arrival instants.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = result.spec
    n_stops = int(math.floor(spec.horizon / spec.stop_interval)) + 1
    meta = _station_meta(n_stops)
    rng = np.random.default_rng(np.random.SeedSequence((result.seed, 0xC0FFEE)))

    dates = sorted({traj.day for traj in result.trajectories})
    weather_events = {
        d: ("rain" if rng.random() < 0.52 else "none") for d in dates
    }

    stops_path = outdir / "stops.csv"
    with open(stops_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([
            "current_station", "date", "day_of_week", "mission_code", "line_code",
            "scheduled_arrival", "entry_delay", "exit_delay", "boarded", "alighted",
            "cancelled", "progressive_index",
        ])
        for m, traj in enumerate(result.trajectories):
            _, start = mission_schedule(m)
            for i, stop in enumerate(traj.stops):
                actual = start + datetime.timedelta(minutes=stop.arrival_minutes)
                scheduled = actual - datetime.timedelta(minutes=stop.delay)
                boarded = int(rng.lognormal(mean=2.79, sigma=1.04))
                alighted = int(rng.lognormal(mean=2.85, sigma=1.00))
                writer.writerow([
                    stop.station, traj.day.isoformat(), traj.day.weekday(),
                    traj.mission, "S5",
                    scheduled.strftime("%Y-%m-%d %H:%M:%S"),
                    repr(stop.delay), repr(stop.delay),
                    boarded, alighted, "False", i,
                ])

    weather_path = outdir / "weather.csv"
    with open(weather_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([
            "location", "date", "mean_temperature", "visibility", "mean_wind",
            "event_type",
        ])
        for d in dates:
            for zone in WEATHER_ZONES:
                writer.writerow([
                    zone, d.isoformat(),
                    round(15 + 8 * math.sin(d.toordinal() / 30.0), 1),
                    10.0 if weather_events[d] == "none" else 4.0,
                    round(5 + 10 * rng.random(), 1),
                    weather_events[d],
                ])

    frequency_path = outdir / "frequency.csv"
    with open(frequency_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["station", "hour_window", "trains_per_hour"])
        for sid, _, _ in meta:
            base = int(rng.integers(4, 20))
            for hour in range(6, 21):
                peak = 6 if hour in (7, 8, 9, 17, 18) else 0
                writer.writerow([sid, hour, min(46, base + peak)])

    stations_path = outdir / "stations.yaml"
    stations_payload = {
        "line_code": "S5",
        "stations": [
            {"id": sid, "zone": zone, "weather_zone": wz} for sid, zone, wz in meta
        ],
        "holidays": [],
    }
    stations_path.write_text(
        yaml.safe_dump(stations_payload, sort_keys=False), encoding="utf-8"
    )

    truth_path = outdir / "ground_truth.json"
    truth = {
        "seed": result.seed,
        "n_missions": result.n_missions,
        "horizon": spec.horizon,
        "stop_interval": spec.stop_interval,
        "thresholds": list(spec.space.thresholds),
        "covariates": list(spec.covariate_names),
        "transitions": {
            f"{r}->{s}": {
                "baseline": _describe_hazard(h),
                "beta_true": (np.atleast_1d(spec.beta[(r, s)]).tolist()
                              if (r, s) in spec.beta else None),
            }
            for (r, s), h in sorted(spec.baselines.items())
        },
        "true_elos_at_zero_covariates": {
            str(state): true_elos(spec, spec.horizon, state)
            for state in range(spec.space.n_states)
        },
    }
    truth_path.write_text(json.dumps(truth, indent=2), encoding="utf-8")
    return {
        "stops": stops_path, "weather": weather_path, "frequency": frequency_path,
        "stations": stations_path, "ground_truth": truth_path,
    }


def _describe_hazard(h) -> dict:
    if isinstance(h, ConstantHazard):
        return {"family": "constant", "rate": h.rate}
    if isinstance(h, WeibullHazard):
        return {"family": "weibull", "shape": h.shape, "scale": h.scale}
    if isinstance(h, PiecewiseConstantHazard):
        return {"family": "piecewise", "breaks": list(h.breaks), "rates": list(h.rates)}
    raise DataError(f"unknown hazard family: {type(h).__name__}")


def _hazard_from_config(entry: dict):
    family = entry.get("family", "constant")
    if family == "constant":
        return ConstantHazard(rate=float(entry["rate"]))
    if family == "weibull":
        return WeibullHazard(shape=float(entry["shape"]), scale=float(entry["scale"]))
    if family == "piecewise":
        return PiecewiseConstantHazard(
            breaks=tuple(float(b) for b in entry["breaks"]),
            rates=tuple(float(r) for r in entry["rates"]),
        )
    raise ConfigError(f"unknown baseline family: {family!r}")


def load_intensity_spec(path) -> tuple[IntensitySpec, int, int]:
    """Load a simulation spec file: returns (spec, n_missions, seed)."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    thresholds = raw.get("thresholds", [5, 10])
    adjacent = bool(raw.get("adjacent_only", False))
    if list(thresholds) == [5, 10]:
        space = default_three_state(adjacent=adjacent)
    elif list(thresholds) == [5, 10, 15]:
        space = default_four_state(adjacent=adjacent)
    else:
        raise ConfigError(f"unsupported thresholds in simulation spec: {thresholds}")

    covariates = tuple(raw.get("covariates", []))
    baselines, beta = {}, {}
    for key, entry in raw.get("transitions", {}).items():
        r, s = (int(x) for x in key.split("->"))
        baselines[(r, s)] = _hazard_from_config(entry)
        if entry.get("beta") is not None:
            beta[(r, s)] = np.array([float(b) for b in entry["beta"]])

    spec = IntensitySpec(
        space=space,
        baselines=baselines,
        beta=beta,
        covariate_names=covariates,
        horizon=float(raw.get("horizon", 130.0)),
        stop_interval=float(raw.get("stop_interval", 4.0)),
    )
    return spec, int(raw.get("n_missions", 100)), int(raw.get("seed", 0))
