"""Nonparametric transition hazard estimation and derived summaries.

Estimators work on the clock-reset duration scale: the risk set for a
transition out of state r at sojourn time u contains every episode that
started in r and lasted at least u (censored episodes count while at risk).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .episodes import build_all_episodes
from .errors import EstimationError
from .states import (
    CumulativeHazard, Episode, StateSpace, Stratum, TransitionMatrix,
)

log = logging.getLogger(__name__)

#: Negative diagonal factors beyond this tolerance abort the product integral.
DIAGONAL_TOL = 1e-9


def nelson_aalen(episodes: list[Episode], transition: tuple[int, int]) -> CumulativeHazard:
    """Nelson-Aalen step increments dN/Y for one transition."""
    r, s = transition
    durations = np.array([e.duration for e in episodes if e.from_state == r])
    event_durations = np.array([
        e.duration for e in episodes if e.from_state == r and e.to_state == s
    ])
    if len(event_durations) == 0:
        return CumulativeHazard.empty(transition)

    times, counts = np.unique(event_durations, return_counts=True)
    # Y_r(u) = number of sojourns in r with duration >= u
    durations.sort()
    at_risk = len(durations) - np.searchsorted(durations, times, side="left")
    assert np.all(at_risk > 0), "event with empty risk set: impossible by construction"
    return CumulativeHazard(
        transition=transition,
        times=times,
        increments=counts / at_risk,
        events=counts,
        at_risk=at_risk,
    )


@dataclass(frozen=True)
class HazardSet:
    """All per-transition cumulative hazards of one stratum."""

    stratum: Stratum | None
    space: StateSpace
    hazards: dict
    event_grid: np.ndarray

    def hazard(self, transition: tuple[int, int]) -> CumulativeHazard:
        return self.hazards.get(transition, CumulativeHazard.empty(transition))


def make_hazard_set(space: StateSpace, hazards: dict,
                    stratum: Stratum | None = None) -> HazardSet:
    grid = np.unique(np.concatenate(
        [h.times for h in hazards.values()] or [np.zeros(0)]
    ))
    return HazardSet(stratum=stratum, space=space, hazards=dict(hazards), event_grid=grid)


def estimate_hazards(episodes: list[Episode], space: StateSpace,
                     stratum: Stratum | None = None) -> HazardSet:
    """Nelson-Aalen hazards for every allowed transition of one stratum."""
    hazards = {}
    for transition in space.transitions():
        h = nelson_aalen(episodes, transition)
        if h.n_events == 0:
            log.warning("no %s->%s events in stratum %s (data sparsity)",
                        transition[0], transition[1],
                        stratum.key() if stratum else "<all>")
        hazards[transition] = h
    return make_hazard_set(space, hazards, stratum)


def hazard_matrix_increments(hs: HazardSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-event-time S x S increment matrices with mass-conserving diagonal.

    Returns ``(grid, inc)`` where ``inc[k]`` holds dLambda at ``grid[k]``:
    off-diagonals are the per-transition increments aligned on the merged
    grid, the diagonal is minus the off-diagonal row sum.
    """
    grid = hs.event_grid
    n = hs.space.n_states
    inc = np.zeros((len(grid), n, n))
    for (r, s), hazard in hs.hazards.items():
        if len(hazard.times) == 0:
            continue
        idx = np.searchsorted(grid, hazard.times)
        inc[idx, r, s] += hazard.increments
    diag = -inc.sum(axis=2)
    for state in range(n):
        inc[:, state, state] = diag[:, state]
    return grid, inc


def product_integral(grid: np.ndarray, inc: np.ndarray, v: float, t: float,
                     labels: tuple[str, ...]) -> TransitionMatrix:
    """Ordered product of (I + dLambda(u)) over event times in (v, t]."""
    if t < v:
        raise EstimationError(f"interval end {t} precedes start {v}")
    n = len(labels)
    matrix = np.eye(n)
    mask = (grid > v) & (grid <= t)
    for k in np.nonzero(mask)[0]:
        factor = np.eye(n) + inc[k]
        bad = np.nonzero(np.diag(factor) < -DIAGONAL_TOL)[0]
        if len(bad):
            raise EstimationError(
                f"hazard increment above 1 for state {bad[0]} at time {grid[k]:g}; "
                "the risk set is overloaded at this duration"
            )
        matrix = matrix @ factor
    matrix = np.clip(matrix, 0.0, 1.0)
    return TransitionMatrix(states=labels, v=v, t=t, entries=matrix)


def aalen_johansen(hs: HazardSet, v: float, t: float) -> TransitionMatrix:
    """Aalen-Johansen transition probability matrix P(v, t)."""
    grid, inc = hazard_matrix_increments(hs)
    return product_integral(grid, inc, v, t, hs.space.labels)


def _exit_steps(hs: HazardSet, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Merged event times and total exit increments out of state r."""
    times, incs = [], []
    for (rr, s), hazard in hs.hazards.items():
        if rr == r and len(hazard.times):
            times.append(hazard.times)
            incs.append(hazard.increments)
    if not times:
        return np.zeros(0), np.zeros(0)
    all_times = np.concatenate(times)
    all_incs = np.concatenate(incs)
    grid = np.unique(all_times)
    total = np.zeros(len(grid))
    np.add.at(total, np.searchsorted(grid, all_times), all_incs)
    return grid, total


def sojourn_survival(hs: HazardSet, r: int,
                     tau_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Product-limit probability of still occupying r at each exit-event time.

    With ``tau_max`` set, event times beyond it are ignored (they cannot
    affect any quantity restricted to [0, tau_max])."""
    grid, total = _exit_steps(hs, r)
    if tau_max is not None:
        keep = grid < tau_max
        grid, total = grid[keep], total[keep]
    factors = 1.0 - total
    if np.any(factors < -DIAGONAL_TOL):
        k = np.nonzero(factors < -DIAGONAL_TOL)[0][0]
        raise EstimationError(
            f"hazard increment above 1 for state {r} at time {grid[k]:g}; "
            "the risk set is overloaded at this duration"
        )
    return grid, np.cumprod(np.clip(factors, 0.0, 1.0))


def elos(hs: HazardSet, r: int, tau_max: float, method: str = "sojourn") -> float:
    """Expected length of stay in state r, restricted to [0, tau_max].

    ``sojourn`` integrates the product-limit sojourn survival on the
    clock-reset scale (default). ``occupancy`` integrates the Aalen-Johansen
    occupancy probability P_rr(0, u) instead.
    """
    if tau_max <= 0:
        raise EstimationError(f"tau_max must be positive, got {tau_max}")
    if method == "sojourn":
        grid, survival = sojourn_survival(hs, r, tau_max=tau_max)
    elif method == "occupancy":
        full_grid, inc = hazard_matrix_increments(hs)
        keep = full_grid < tau_max
        grid, inc = full_grid[keep], inc[keep]
        survival = np.empty(len(grid))
        matrix = np.eye(hs.space.n_states)
        for k in range(len(grid)):
            factor = np.eye(hs.space.n_states) + inc[k]
            bad = np.nonzero(np.diag(factor) < -DIAGONAL_TOL)[0]
            if len(bad):
                raise EstimationError(
                    f"hazard increment above 1 for state {bad[0]} at time {grid[k]:g}; "
                    "the risk set is overloaded at this duration"
                )
            matrix = matrix @ factor
            survival[k] = matrix[r, r]
    else:
        raise ValueError(f"unknown ELOS method: {method!r}")

    # step-function integral over [0, tau_max]
    knots = np.concatenate([[0.0], grid[grid < tau_max], [tau_max]])
    values = np.concatenate([[1.0], survival[grid < tau_max]])
    return float(np.sum(values * np.diff(knots)))


@dataclass(frozen=True)
class ElosEstimate:
    state: int
    tau_max: float
    estimate: float
    ci_low: float
    ci_high: float
    n_boot: int
    unstable: bool = False


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    ci_low: float
    ci_high: float
    replicates: np.ndarray
    n_missing: int
    unstable: bool


def bootstrap_groups(groups: list[list[Episode]], statistic, n_boot: int,
                     seed: int) -> BootstrapResult:
    """Percentile bootstrap resampling whole mission groups of episodes.

    Replicates on which ``statistic`` fails are recorded as missing; the
    result is flagged unstable when more than 10% are missing. Deterministic
    given ``seed``: each replicate draws from its own child stream of the
    master seed, so parallel and serial evaluation orders agree.
    """
    if n_boot < 2:
        raise EstimationError(f"need at least 2 bootstrap replications, got {n_boot}")
    full = statistic([e for g in groups for e in g])
    children = np.random.SeedSequence(seed).spawn(n_boot)
    values = np.full(n_boot, np.nan)
    n_groups = len(groups)
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n_groups, size=n_groups)
        sample = [e for i in idx for e in groups[i]]
        try:
            values[b] = statistic(sample)
        except (EstimationError, ZeroDivisionError, ValueError):
            pass
    ok = values[~np.isnan(values)]
    n_missing = n_boot - len(ok)
    unstable = n_missing > 0.1 * n_boot
    if unstable:
        warnings.warn(f"bootstrap unstable: {n_missing}/{n_boot} replicates failed")
    if len(ok) == 0:
        raise EstimationError("statistic failed on every bootstrap replicate")
    low, high = np.percentile(ok, [2.5, 97.5])
    return BootstrapResult(
        estimate=float(full), ci_low=float(low), ci_high=float(high),
        replicates=values, n_missing=n_missing, unstable=unstable,
    )


def bootstrap(trajectories, space: StateSpace, statistic, n_boot: int,
              seed: int, split_zones: bool = False) -> BootstrapResult:
    """Mission-level bootstrap: resample trajectories, rebuild episodes."""
    groups = [build_all_episodes([traj], space, split_zones=split_zones)
              for traj in trajectories]
    return bootstrap_groups(groups, statistic, n_boot, seed)


def elos_with_ci(trajectories, space: StateSpace, r: int, tau_max: float,
                 n_boot: int, seed: int, method: str = "sojourn",
                 split_zones: bool = False,
                 episode_filter=None) -> ElosEstimate:
    """ELOS for state r with a mission-level percentile bootstrap CI."""
    def statistic(episodes):
        if episode_filter is not None:
            episodes = [e for e in episodes if episode_filter(e)]
        return elos(estimate_hazards(episodes, space), r, tau_max, method=method)

    result = bootstrap(trajectories, space, statistic, n_boot, seed,
                       split_zones=split_zones)
    return ElosEstimate(
        state=r, tau_max=tau_max, estimate=result.estimate,
        ci_low=result.ci_low, ci_high=result.ci_high,
        n_boot=n_boot, unstable=result.unstable,
    )


def round_to_grain(percent: float, grain: float) -> float:
    return round(percent / grain) * grain


def conditional_matrix_report(hazard_sets: dict, horizons=(10.0, 30.0),
                              grain: float = 5.0) -> dict:
    """Percentage transition matrices P(0, h) per stratum and horizon.

    Rows are the current state, columns the state after the horizon; entries
    are percentages rounded to ``grain``.
    """
    report = {}
    for key, hs in hazard_sets.items():
        per_horizon = {}
        for h in horizons:
            matrix = aalen_johansen(hs, 0.0, float(h))
            per_horizon[h] = {
                "states": list(hs.space.labels),
                "percent": [
                    [round_to_grain(100.0 * p, grain) for p in row]
                    for row in matrix.entries
                ],
                "raw": matrix.entries.tolist(),
            }
        report[key] = per_horizon
    return report
