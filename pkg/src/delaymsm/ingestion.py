"""Parsing and joining of stop, weather, and frequency files.

Input files are UTF-8 delimited text with headers; station ids are opaque
strings. The output of :func:`build_analysis` is the canonical analysis table
consumed by the episode builder.
"""

from __future__ import annotations

import csv
import datetime
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import yaml

from .errors import ConfigError, DataError
from .states import Stratum, TimeSlot, UnitKey, Zone

ADVERSE_EVENTS = {"rain", "fog", "storm"}

STOP_COLUMNS = [
    "current_station", "date", "day_of_week", "mission_code", "line_code",
    "scheduled_arrival", "entry_delay", "exit_delay", "boarded", "alighted",
    "cancelled", "progressive_index",
]
WEATHER_COLUMNS = [
    "location", "date", "mean_temperature", "visibility", "mean_wind", "event_type",
]
FREQUENCY_COLUMNS = ["station", "hour_window", "trains_per_hour"]


@dataclass(frozen=True)
class StopRecord:
    current_station: str
    date: datetime.date
    day_of_week: int
    mission_code: str
    line_code: str
    scheduled_arrival: datetime.datetime
    entry_delay: float
    exit_delay: float
    boarded: float | None
    alighted: float | None
    cancelled: bool
    progressive_index: int


@dataclass(frozen=True)
class WeatherRecord:
    location: str
    date: datetime.date
    mean_temperature: float
    visibility: float
    mean_wind: float
    event_type: str


@dataclass(frozen=True)
class FrequencyRecord:
    station: str
    hour_window: int
    trains_per_hour: int


@dataclass(frozen=True)
class AnalysisRow:
    unit: UnitKey
    stratum: Stratum
    progressive_index: int
    scheduled_arrival: datetime.datetime
    actual_arrival: datetime.datetime
    arrival_delay: float
    boarded: float | None
    alighted: float | None
    trains_per_hour: float | None
    adverse_weather: int | None   # None when weather is missing for (zone, date)


@dataclass
class Rejection:
    line: int
    reason: str


@dataclass
class StationConfig:
    """Ordered station list (direction-0 order), zone maps, and holidays."""

    order: list[str]
    zones: dict[str, Zone]
    weather_zones: dict[str, str]
    holidays: set[datetime.date]
    line_code: str | None = None

    def index(self, station: str) -> int:
        try:
            return self.order.index(station)
        except ValueError:
            raise DataError(f"station '{station}' is not on the configured line")


def load_station_config(path) -> StationConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "stations" not in raw:
        raise ConfigError(f"{path}: expected a mapping with a 'stations' list")
    order, zones, weather_zones = [], {}, {}
    for entry in raw["stations"]:
        sid = str(entry["id"])
        order.append(sid)
        zones[sid] = Zone(entry["zone"])
        weather_zones[sid] = str(entry["weather_zone"])
    holidays = {
        datetime.date.fromisoformat(str(d)) for d in raw.get("holidays", [])
    }
    return StationConfig(
        order=order, zones=zones, weather_zones=weather_zones,
        holidays=holidays, line_code=raw.get("line_code"),
    )


def _parse_date(value: str) -> datetime.date:
    return datetime.date.fromisoformat(value.strip())


def _parse_timestamp(value: str) -> datetime.datetime:
    return datetime.datetime.strptime(value.strip(), "%Y-%m-%d %H:%M:%S")


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1"):
        return True
    if v in ("false", "0"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_optional_count(value: str) -> float | None:
    v = value.strip()
    if v == "":
        return None
    return float(v)


def _read_rows(path, delimiter, required_columns):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing mandatory columns: {missing}")
        yield from enumerate(reader, start=2)   # line 1 is the header


def parse_stops(path, delimiter: str = ",") -> tuple[list[StopRecord], list[Rejection]]:
    """Parse the stop file; malformed rows go to the rejection list."""
    records, rejections = [], []
    for line_no, row in _read_rows(path, delimiter, STOP_COLUMNS):
        try:
            dow = int(row["day_of_week"])
            if dow == -1:
                raise ValueError("day_of_week -1 marks a run with invalid data")
            if not -1 <= dow <= 6:
                raise ValueError(f"day_of_week out of range: {dow}")
            records.append(StopRecord(
                current_station=row["current_station"].strip(),
                date=_parse_date(row["date"]),
                day_of_week=dow,
                mission_code=row["mission_code"].strip(),
                line_code=row["line_code"].strip(),
                scheduled_arrival=_parse_timestamp(row["scheduled_arrival"]),
                entry_delay=float(row["entry_delay"]),
                exit_delay=float(row["exit_delay"]),
                boarded=_parse_optional_count(row["boarded"]),
                alighted=_parse_optional_count(row["alighted"]),
                cancelled=_parse_bool(row["cancelled"]),
                progressive_index=int(row["progressive_index"]),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            rejections.append(Rejection(line=line_no, reason=str(exc)))
    return records, rejections


def parse_weather(path, delimiter: str = ",") -> tuple[list[WeatherRecord], list[Rejection]]:
    records, rejections = [], []
    for line_no, row in _read_rows(path, delimiter, WEATHER_COLUMNS):
        try:
            records.append(WeatherRecord(
                location=row["location"].strip(),
                date=_parse_date(row["date"]),
                mean_temperature=float(row["mean_temperature"]),
                visibility=float(row["visibility"]),
                mean_wind=float(row["mean_wind"]),
                event_type=row["event_type"].strip().lower(),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            rejections.append(Rejection(line=line_no, reason=str(exc)))
    return records, rejections


def parse_frequency(path, delimiter: str = ",") -> tuple[list[FrequencyRecord], list[Rejection]]:
    records, rejections = [], []
    for line_no, row in _read_rows(path, delimiter, FREQUENCY_COLUMNS):
        try:
            tph = int(row["trains_per_hour"])
            if tph < 0:
                raise ValueError(f"trains_per_hour must be >= 0, got {tph}")
            records.append(FrequencyRecord(
                station=row["station"].strip(),
                hour_window=int(row["hour_window"]),
                trains_per_hour=tph,
            ))
        except (ValueError, KeyError, TypeError) as exc:
            rejections.append(Rejection(line=line_no, reason=str(exc)))
    return records, rejections


def filter_window(stops: list[StopRecord], holidays: set[datetime.date] = frozenset(),
                  line_code: str | None = None
                  ) -> tuple[list[StopRecord], dict[str, int]]:
    """Keep weekday, non-holiday, non-cancelled stops scheduled in [06:00, 20:00).

    When ``line_code`` is set, stops of other lines (non-scheduled or special
    services) are removed as well. Returns the kept stops and per-reason
    removal counts. Idempotent.
    """
    kept = []
    removed = {"weekend": 0, "holiday": 0, "cancelled": 0,
               "out_of_window": 0, "other_line": 0}
    for stop in stops:
        if stop.cancelled:
            removed["cancelled"] += 1
        elif stop.date.weekday() >= 5 or stop.day_of_week in (5, 6):
            removed["weekend"] += 1
        elif stop.date in holidays:
            removed["holiday"] += 1
        elif line_code is not None and stop.line_code != line_code:
            removed["other_line"] += 1
        elif not 6 <= stop.scheduled_arrival.hour < 20:
            removed["out_of_window"] += 1
        else:
            kept.append(stop)
    return kept, removed


def time_slot_for(departure: datetime.datetime | datetime.time) -> TimeSlot:
    """Time band of a mission's origin departure; band boundaries (10:00,
    16:00) belong to the later band."""
    hour = departure.hour
    if 6 <= hour < 10:
        return TimeSlot.MORNING_PEAK
    if 10 <= hour < 16:
        return TimeSlot.OFF_PEAK
    if 16 <= hour < 20:
        return TimeSlot.EVENING_PEAK
    raise DataError(f"departure {departure} outside the 06:00-20:00 window")


def assign_weather(stops: list[StopRecord], weather: list[WeatherRecord],
                   cfg: StationConfig) -> list[tuple[StopRecord, WeatherRecord | None]]:
    """Attach each stop's zone weather record; None marks a missing (zone, date).

    Raises if a station has no configured weather zone.
    """
    by_key = {(w.location, w.date): w for w in weather}
    annotated = []
    for stop in stops:
        zone = cfg.weather_zones.get(stop.current_station)
        if zone is None:
            raise DataError(
                f"station '{stop.current_station}' has no weather zone in the station map"
            )
        annotated.append((stop, by_key.get((zone, stop.date))))
    return annotated


def is_adverse(event_type: str) -> int:
    return int(event_type in ADVERSE_EVENTS)


def assign_stratum(stop: StopRecord, origin_departure: datetime.datetime,
                   direction: int, cfg: StationConfig) -> Stratum:
    """Full stratum (direction, time slot, zone) for one stop."""
    if stop.current_station not in cfg.zones:
        raise DataError(f"station '{stop.current_station}' is not on the configured line")
    return Stratum(
        direction=direction,
        time_slot=time_slot_for(origin_departure),
        zone=cfg.zones[stop.current_station],
    )


def build_analysis(stops: list[StopRecord], weather: list[WeatherRecord],
                   frequency: list[FrequencyRecord], cfg: StationConfig
                   ) -> list[AnalysisRow]:
    """Join filtered stops with weather and frequency into analysis rows.

    Direction and time slot are mission-level attributes derived from the
    mission's first stop; rows whose weather is missing keep
    ``adverse_weather = None`` (excluded from covariate models downstream).
    """
    freq_by_key = {(f.station, f.hour_window): f.trains_per_hour for f in frequency}
    annotated = assign_weather(stops, weather, cfg)
    weather_for = {id(stop): rec for stop, rec in annotated}

    missions: dict[tuple[str, datetime.date], list[StopRecord]] = {}
    for stop in stops:
        missions.setdefault((stop.mission_code, stop.date), []).append(stop)

    rows = []
    for (mission, day), group in missions.items():
        group = sorted(group, key=lambda s: s.progressive_index)
        first, last = group[0], group[-1]
        direction = 0 if cfg.index(first.current_station) <= cfg.index(last.current_station) else 1
        origin_departure = first.scheduled_arrival
        for stop in group:
            stratum = assign_stratum(stop, origin_departure, direction, cfg)
            wrec = weather_for[id(stop)]
            actual = stop.scheduled_arrival + datetime.timedelta(minutes=stop.entry_delay)
            rows.append(AnalysisRow(
                unit=UnitKey(stop.current_station, mission, day),
                stratum=stratum,
                progressive_index=stop.progressive_index,
                scheduled_arrival=stop.scheduled_arrival,
                actual_arrival=actual,
                arrival_delay=stop.entry_delay,
                boarded=stop.boarded,
                alighted=stop.alighted,
                trains_per_hour=freq_by_key.get(
                    (stop.current_station, stop.scheduled_arrival.hour)
                ),
                adverse_weather=None if wrec is None else is_adverse(wrec.event_type),
            ))
    rows.sort(key=lambda r: (r.unit.mission, r.unit.day, r.progressive_index))
    return rows


ANALYSIS_COLUMNS = [
    "station", "mission", "day", "direction", "time_slot", "zone",
    "progressive_index", "scheduled_arrival", "actual_arrival", "arrival_delay",
    "boarded", "alighted", "trains_per_hour", "adverse_weather",
]


def write_analysis(rows: list[AnalysisRow], path, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(ANALYSIS_COLUMNS)
        for r in rows:
            writer.writerow([
                r.unit.station, r.unit.mission, r.unit.day.isoformat(),
                r.stratum.direction,
                r.stratum.time_slot.value if r.stratum.time_slot else "",
                r.stratum.zone.value if r.stratum.zone else "",
                r.progressive_index,
                r.scheduled_arrival.strftime("%Y-%m-%d %H:%M:%S"),
                r.actual_arrival.strftime("%Y-%m-%d %H:%M:%S"),
                repr(r.arrival_delay),
                "" if r.boarded is None else repr(r.boarded),
                "" if r.alighted is None else repr(r.alighted),
                "" if r.trains_per_hour is None else repr(r.trains_per_hour),
                "" if r.adverse_weather is None else r.adverse_weather,
            ])


def read_analysis(path, delimiter: str = ",") -> list[AnalysisRow]:
    rows = []
    for _, row in _read_rows(path, delimiter, ANALYSIS_COLUMNS):
        def opt(value):
            return None if value == "" else float(value)
        rows.append(AnalysisRow(
            unit=UnitKey(row["station"], row["mission"], _parse_date(row["day"])),
            stratum=Stratum(
                direction=int(row["direction"]),
                time_slot=TimeSlot(row["time_slot"]) if row["time_slot"] else None,
                zone=Zone(row["zone"]) if row["zone"] else None,
            ),
            progressive_index=int(row["progressive_index"]),
            scheduled_arrival=_parse_timestamp(row["scheduled_arrival"]),
            actual_arrival=_parse_timestamp(row["actual_arrival"]),
            arrival_delay=float(row["arrival_delay"]),
            boarded=opt(row["boarded"]),
            alighted=opt(row["alighted"]),
            trains_per_hour=opt(row["trains_per_hour"]),
            adverse_weather=None if row["adverse_weather"] == "" else int(row["adverse_weather"]),
        ))
    return rows


def write_rejection_report(path, **sections) -> None:
    """JSON report of rejected rows per input file plus filter counts."""
    payload = {}
    for name, value in sections.items():
        if isinstance(value, list):
            payload[name] = [asdict(r) for r in value]
        else:
            payload[name] = value
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
