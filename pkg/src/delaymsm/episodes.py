"""Conversion of per-mission stop sequences into clock-reset sojourn episodes.

The state is taken to change exactly at the arrival where the new state is
first observed (arrivals are the only observation times). The final open
sojourn of each mission is right-censored at the terminal arrival.
"""

from __future__ import annotations

import csv
import datetime
import logging
from dataclasses import dataclass

from .errors import DataError
from .states import (
    CENSORED, Episode, StateSpace, Stratum, TimeSlot, UnitKey, Zone,
    classify_state,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryStop:
    station: str
    arrival_minutes: float          # actual arrival, minutes since first stop
    delay: float
    covariates: dict
    zone: Zone | None = None


@dataclass(frozen=True)
class MissionTrajectory:
    mission: str
    day: datetime.date
    direction: int
    time_slot: TimeSlot | None
    stops: tuple[TrajectoryStop, ...]

    def __post_init__(self):
        if len(self.stops) < 2:
            raise DataError(f"mission {self.mission}/{self.day}: needs at least 2 stops")
        times = [s.arrival_minutes for s in self.stops]
        if any(b < a for a, b in zip(times, times[1:])):
            raise DataError(f"mission {self.mission}/{self.day}: arrival times out of order")


@dataclass(frozen=True)
class Quarantined:
    mission: str
    day: datetime.date
    reason: str


def build_trajectories(rows) -> tuple[list[MissionTrajectory], list[Quarantined]]:
    """Group analysis rows into per-mission trajectories.

    Missions with duplicate stops, time-ordering violations, or fewer than two
    stops are quarantined with a diagnostic instead of raising.
    """
    grouped: dict[tuple, list] = {}
    for row in rows:
        grouped.setdefault((row.unit.mission, row.unit.day), []).append(row)

    trajectories, quarantine = [], []
    for (mission, day), group in sorted(grouped.items()):
        group.sort(key=lambda r: r.progressive_index)
        stations = [r.unit.station for r in group]
        if len(set(stations)) != len(stations):
            quarantine.append(Quarantined(mission, day, "duplicate station stop"))
            continue
        if len(group) < 2:
            quarantine.append(Quarantined(mission, day, "fewer than 2 stops"))
            continue
        t0 = group[0].actual_arrival
        minutes = [(r.actual_arrival - t0).total_seconds() / 60.0 for r in group]
        if any(b < a for a, b in zip(minutes, minutes[1:])):
            quarantine.append(Quarantined(mission, day, "arrival times out of order"))
            continue
        stops = tuple(
            TrajectoryStop(
                station=r.unit.station,
                arrival_minutes=m,
                delay=r.arrival_delay,
                covariates={
                    "boarded": r.boarded,
                    "alighted": r.alighted,
                    "trains_per_hour": r.trains_per_hour,
                    "adverse_weather": r.adverse_weather,
                },
                zone=r.stratum.zone,
            )
            for r, m in zip(group, minutes)
        )
        trajectories.append(MissionTrajectory(
            mission=mission, day=day,
            direction=group[0].stratum.direction,
            time_slot=group[0].stratum.time_slot,
            stops=stops,
        ))
    return trajectories, quarantine


def build_episodes(traj: MissionTrajectory, space: StateSpace,
                   split_zones: bool = False) -> list[Episode]:
    """Scan a trajectory's arrivals into clock-reset episodes.

    A state change between consecutive arrivals closes the current episode at
    the arrival where the new state is first seen. With ``split_zones``, a
    sojourn crossing a zone boundary is censored at the boundary arrival and a
    fresh sojourn opens in the new zone (each zone keeps its own risk set).
    Zero-duration sojourns are merged into the jump rather than emitted.
    """
    stops = traj.stops
    states = [classify_state(s.delay, space) for s in stops]

    episodes: list[Episode] = []
    entry = 0               # index of the stop where the current sojourn began
    cur_state = states[0]

    def stratum(stop: TrajectoryStop) -> Stratum:
        return Stratum(
            direction=traj.direction,
            time_slot=traj.time_slot,
            zone=stop.zone if split_zones else None,
        )

    def emit(to_state: int, end_idx: int) -> None:
        duration = stops[end_idx].arrival_minutes - stops[entry].arrival_minutes
        if duration <= 0:
            return
        episodes.append(Episode(
            unit=UnitKey(stops[entry].station, traj.mission, traj.day),
            stratum=stratum(stops[entry]),
            from_state=cur_state,
            duration=duration,
            to_state=to_state,
            covariates=dict(stops[entry].covariates),
        ))

    for n in range(1, len(stops)):
        zone_crossed = split_zones and stops[n].zone != stops[entry].zone
        if zone_crossed:
            # censor-and-reenter: the old zone's sojourn ends unobserved
            emit(CENSORED, n)
            entry, cur_state = n, states[n]
        elif states[n] != cur_state:
            if space.allowed_transitions and (cur_state, states[n]) not in space.allowed_transitions:
                log.warning(
                    "mission %s/%s: observed disallowed jump %d->%d at stop %s",
                    traj.mission, traj.day, cur_state, states[n], stops[n].station,
                )
            emit(states[n], n)
            entry, cur_state = n, states[n]

    emit(CENSORED, len(stops) - 1)   # terminal censored sojourn (dropped if empty)
    return episodes


def build_all_episodes(trajectories, space: StateSpace,
                       split_zones: bool = False) -> list[Episode]:
    episodes = []
    for traj in trajectories:
        episodes.extend(build_episodes(traj, space, split_zones=split_zones))
    return episodes


EPISODE_BASE_COLUMNS = [
    "station", "mission", "day", "direction", "time_slot", "zone",
    "from_state", "to_state", "duration_min",
]


def write_episodes(episodes: list[Episode], path, delimiter: str = ",") -> None:
    """Delimited episode dump: the interchange format for estimation modules."""
    cov_names = sorted({name for e in episodes for name in e.covariates})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(EPISODE_BASE_COLUMNS + [f"cov_{c}" for c in cov_names])
        for e in episodes:
            row = [
                e.unit.station, e.unit.mission, e.unit.day.isoformat(),
                e.stratum.direction,
                e.stratum.time_slot.value if e.stratum.time_slot else "",
                e.stratum.zone.value if e.stratum.zone else "",
                e.from_state,
                "censored" if e.censored else e.to_state,
                repr(e.duration),
            ]
            for c in cov_names:
                v = e.covariates.get(c)
                row.append("" if v is None else repr(float(v)))
            writer.writerow(row)


def read_episodes(path, delimiter: str = ",") -> list[Episode]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        cov_names = [c[4:] for c in (reader.fieldnames or []) if c.startswith("cov_")]
        episodes = []
        for row in reader:
            covariates = {}
            for c in cov_names:
                v = row[f"cov_{c}"]
                covariates[c] = None if v == "" else float(v)
            episodes.append(Episode(
                unit=UnitKey(
                    row["station"], row["mission"],
                    datetime.date.fromisoformat(row["day"]),
                ),
                stratum=Stratum(
                    direction=int(row["direction"]),
                    time_slot=TimeSlot(row["time_slot"]) if row["time_slot"] else None,
                    zone=Zone(row["zone"]) if row["zone"] else None,
                ),
                from_state=int(row["from_state"]),
                duration=float(row["duration_min"]),
                to_state=CENSORED if row["to_state"] == "censored" else int(row["to_state"]),
                covariates=covariates,
            ))
    return episodes
