"""Domain vocabulary: delay state spaces, strata, episodes, and hazard containers.

All containers here are immutable after construction and safe to share across
workers. Delay states are ordered categories defined by upper thresholds in
minutes; a threshold belongs to the lower state (a delay of exactly 5 minutes
with thresholds (5, 10) is still On Time).
"""

from __future__ import annotations

import bisect
import datetime
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import DataError

#: Sentinel destination for right-censored sojourns.
CENSORED = -1


class TimeSlot(Enum):
    MORNING_PEAK = "morning_peak"   # 06:00-10:00
    OFF_PEAK = "off_peak"           # 10:00-16:00
    EVENING_PEAK = "evening_peak"   # 16:00-20:00


class Zone(Enum):
    Z1 = "Z1"
    Z2 = "Z2"
    Z3 = "Z3"
    Z4 = "Z4"


THREE_STATE_LABELS = ("On Time", "Mild Delay", "Severe Delay")
FOUR_STATE_LABELS = ("On Time", "Mild Delay", "Medium Delay", "Severe Delay")


def fully_connected(n_states: int) -> frozenset[tuple[int, int]]:
    """All ordered off-diagonal pairs on ``n_states`` states."""
    return frozenset(
        (r, s) for r in range(n_states) for s in range(n_states) if r != s
    )


def adjacent_only(n_states: int) -> frozenset[tuple[int, int]]:
    """Only one-level up/down moves between neighbouring states."""
    pairs = set()
    for r in range(n_states - 1):
        pairs.add((r, r + 1))
        pairs.add((r + 1, r))
    return frozenset(pairs)


@dataclass(frozen=True)
class StateSpace:
    """Ordered delay states defined by strictly increasing minute thresholds."""

    thresholds: tuple[float, ...]
    labels: tuple[str, ...]
    allowed_transitions: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not self.thresholds:
            raise DataError("at least one threshold is required")
        if any(t <= 0 for t in self.thresholds):
            raise DataError(f"thresholds must be positive: {self.thresholds}")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise DataError(f"thresholds must be strictly increasing: {self.thresholds}")
        if len(self.labels) != len(self.thresholds) + 1:
            raise DataError(
                f"{len(self.thresholds)} thresholds require "
                f"{len(self.thresholds) + 1} labels, got {len(self.labels)}"
            )
        n = self.n_states
        for r, s in self.allowed_transitions:
            if r == s:
                raise DataError(f"self-loop {r}->{s} is not a transition")
            if not (0 <= r < n and 0 <= s < n):
                raise DataError(f"transition {r}->{s} outside state range 0..{n - 1}")
        outgoing = {r for r, _ in self.allowed_transitions}
        incoming = {s for _, s in self.allowed_transitions}
        for state in range(n):
            if state not in outgoing or state not in incoming:
                raise DataError(
                    f"state {state} ({self.labels[state]}) would be absorbing or "
                    "unreachable; every state needs an outgoing and incoming transition"
                )

    @property
    def n_states(self) -> int:
        return len(self.thresholds) + 1

    def transitions(self) -> list[tuple[int, int]]:
        """Allowed transitions in a stable (row-major) order."""
        return sorted(self.allowed_transitions)


def classify_state(delay_minutes: float, space: StateSpace) -> int:
    """Map a delay (minutes, may be negative for early arrivals) to its state.

    Boundaries belong to the lower state: state k covers the half-open
    interval (tau_{k-1}, tau_k].
    """
    return bisect.bisect_left(space.thresholds, delay_minutes)


def default_three_state(adjacent: bool = False) -> StateSpace:
    """Thresholds (5, 10) minutes; fully connected unless ``adjacent``."""
    structure = adjacent_only(3) if adjacent else fully_connected(3)
    return StateSpace((5.0, 10.0), THREE_STATE_LABELS, structure)


def default_four_state(adjacent: bool = False) -> StateSpace:
    """Thresholds (5, 10, 15) minutes; fully connected unless ``adjacent``."""
    structure = adjacent_only(4) if adjacent else fully_connected(4)
    return StateSpace((5.0, 10.0, 15.0), FOUR_STATE_LABELS, structure)


@dataclass(frozen=True)
class UnitKey:
    """One train arrival: (station, mission, day)."""

    station: str
    mission: str
    day: datetime.date


@dataclass(frozen=True)
class Stratum:
    """Analysis segment: travel direction plus an optional time-slot or zone."""

    direction: int
    time_slot: TimeSlot | None = None
    zone: Zone | None = None

    def __post_init__(self):
        if self.direction not in (0, 1):
            raise DataError(f"direction must be 0 or 1, got {self.direction}")

    def key(self) -> str:
        parts = [f"dir{self.direction}"]
        if self.time_slot is not None:
            parts.append(self.time_slot.value)
        if self.zone is not None:
            parts.append(self.zone.value)
        return "_".join(parts)


@dataclass(frozen=True)
class Episode:
    """One clock-reset sojourn in a delay state.

    ``duration`` is measured from entry into ``from_state``; ``to_state`` is
    either the destination state index or :data:`CENSORED`. Covariates are the
    values observed at state entry (time-fixed within the sojourn).
    """

    unit: UnitKey
    stratum: Stratum
    from_state: int
    duration: float
    to_state: int
    covariates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.duration <= 0:
            raise DataError(f"episode duration must be positive, got {self.duration}")

    @property
    def censored(self) -> bool:
        return self.to_state == CENSORED


@dataclass(frozen=True)
class CumulativeHazard:
    """Right-continuous step estimate of one transition's cumulative hazard.

    ``times`` are the distinct event durations (strictly increasing);
    ``increments`` are dN/Y at those durations; ``events`` and ``at_risk``
    hold the corresponding counts.
    """

    transition: tuple[int, int]
    times: np.ndarray
    increments: np.ndarray
    events: np.ndarray
    at_risk: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "increments", np.asarray(self.increments, dtype=float))
        object.__setattr__(self, "events", np.asarray(self.events, dtype=float))
        object.__setattr__(self, "at_risk", np.asarray(self.at_risk, dtype=float))
        if np.any(np.diff(times) <= 0):
            raise DataError("hazard times must be strictly increasing")
        if np.any(self.increments < 0):
            raise DataError("hazard increments must be non-negative")
        if len(times) and np.any(self.at_risk <= 0):
            raise DataError("at-risk counts must be positive at event times")

    def __call__(self, u: float) -> float:
        """Cumulative hazard at sojourn time ``u`` (right-continuous)."""
        k = np.searchsorted(self.times, u, side="right")
        return float(self.increments[:k].sum())

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @classmethod
    def empty(cls, transition: tuple[int, int]) -> "CumulativeHazard":
        z = np.zeros(0)
        return cls(transition, z, z.copy(), z.copy(), z.copy())


#: Row-sum tolerance for transition probability matrices.
ROW_SUM_TOL = 1e-10


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic S x S matrix P(v, t) of state transition probabilities."""

    states: tuple[str, ...]
    v: float
    t: float
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        n = len(self.states)
        if entries.shape != (n, n):
            raise DataError(f"expected a {n}x{n} matrix, got shape {entries.shape}")
        if np.any(entries < -ROW_SUM_TOL) or np.any(entries > 1 + ROW_SUM_TOL):
            raise DataError("transition probabilities must lie in [0, 1]")
        row_sums = entries.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            raise DataError(f"matrix rows must sum to 1, got {row_sums}")

    def __getitem__(self, rs):
        return self.entries[rs]


@dataclass(frozen=True)
class CoxFit:
    """Fitted per-transition Cox model with its Breslow baseline."""

    transition: tuple[int, int]
    covariate_names: tuple[str, ...]
    coef: np.ndarray
    covariance: np.ndarray
    baseline: CumulativeHazard
    n_events: int
    converged: bool
    log_likelihood: float
    direction: int | None = None
    pinned: tuple[str, ...] = ()

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "covariance", cov)
        p = len(self.covariate_names)
        if coef.shape != (p,) or cov.shape != (p, p):
            raise DataError("coefficient/covariance dimensions must match covariates")
        if not np.allclose(cov, cov.T, atol=1e-8):
            raise DataError("covariance matrix must be symmetric")

    def risk_score(self, covariates: Mapping[str, float]) -> float:
        """exp(beta' z) for a named covariate assignment."""
        z = np.array([covariates[name] for name in self.covariate_names])
        return float(np.exp(self.coef @ z))
