"""Per-transition Cox proportional hazards fitting and prediction.

Each transition (and direction) gets its own coefficient vector, so fits are
independent and the joint partial likelihood factorizes. Ties are handled with
the Breslow approximation, matching the Breslow baseline estimator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CollinearityError, EstimationError, SeparationError
from .nonparametric import make_hazard_set, product_integral, elos as np_elos
from .states import CoxFit, CumulativeHazard, Episode, StateSpace, TransitionMatrix

#: Wald z for the fixed 95% confidence level.
Z_95 = 1.96

MAX_ITER = 50
BETA_DIVERGENCE = 20.0
TOL_LOGLIK = 1e-9
TOL_GRADIENT = 1e-6


@dataclass(frozen=True)
class Scenario:
    """Named covariate assignment used for covariate-conditional prediction."""

    values: dict

    def vector(self, covariate_names) -> np.ndarray:
        missing = [n for n in covariate_names if n not in self.values]
        if missing:
            raise EstimationError(f"scenario is missing covariates: {missing}")
        return np.array([float(self.values[n]) for n in covariate_names])


@dataclass(frozen=True)
class HazardRatioRow:
    transition: tuple[int, int]
    covariate: str
    coef: float
    hr: float
    ci_low: float
    ci_high: float
    std_err: float
    p_value: float
    direction: int | None = None


def _design(episodes, transition, covariate_names):
    """Durations, event flags, and covariate matrix for one transition's fit.

    Episodes with missing covariates are dropped (flagged with a warning);
    the paper-facing policy is that incomplete rows never enter Cox fits.
    """
    r, s = transition
    durations, events, rows = [], [], []
    n_dropped = 0
    for e in episodes:
        if e.from_state != r:
            continue
        values = [e.covariates.get(name) for name in covariate_names]
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in values):
            n_dropped += 1
            continue
        durations.append(e.duration)
        events.append(e.to_state == s)
        rows.append([float(v) for v in values])
    if n_dropped:
        warnings.warn(
            f"transition {r}->{s}: dropped {n_dropped} at-risk episodes "
            "with missing covariates"
        )
    return (np.array(durations), np.array(events, dtype=bool),
            np.array(rows, dtype=float).reshape(len(durations), len(covariate_names)))


class _PartialLikelihood:
    """Breslow-tie log partial likelihood with analytic score and information."""

    def __init__(self, durations, events, Z):
        order = np.argsort(-durations, kind="stable")   # descending durations
        self.dur_desc = durations[order]
        self.Z_desc = Z[order]
        self.n, self.p = Z.shape
        dur_asc = np.sort(durations)
        event_times, d_counts = np.unique(durations[events], return_counts=True)
        self.event_times = event_times
        self.d_counts = d_counts.astype(float)
        # risk-set sizes: number of durations >= each event time
        self.risk_sizes = self.n - np.searchsorted(dur_asc, event_times, side="left")
        self.event_Z_sum = Z[events].sum(axis=0)

    def evaluate(self, beta):
        eta = self.Z_desc @ beta
        eta_max = eta.max() if len(eta) else 0.0
        w = np.exp(eta - eta_max)                       # stabilized weights
        cum_w = np.cumsum(w)
        cum_wz = np.cumsum(w[:, None] * self.Z_desc, axis=0)
        outer = w[:, None, None] * (self.Z_desc[:, :, None] * self.Z_desc[:, None, :])
        cum_wzz = np.cumsum(outer, axis=0)

        idx = self.risk_sizes - 1
        s0 = cum_w[idx]
        s1 = cum_wz[idx]
        s2 = cum_wzz[idx]

        loglik = float(self.event_Z_sum @ beta)
        loglik -= float(np.sum(self.d_counts * (np.log(s0) + eta_max)))
        mean = s1 / s0[:, None]
        grad = self.event_Z_sum - (self.d_counts[:, None] * mean).sum(axis=0)
        info = np.zeros((self.p, self.p))
        for k in range(len(self.event_times)):
            v = s2[k] / s0[k] - np.outer(mean[k], mean[k])
            info += self.d_counts[k] * v
        return loglik, grad, info

    def s0_at_events(self, beta):
        """Total risk score S0(beta, u_k) at each event time."""
        eta = self.Z_desc @ beta
        cum_w = np.cumsum(np.exp(eta))
        return cum_w[self.risk_sizes - 1]


def _name_collinear(info, names):
    eigvals, eigvecs = np.linalg.eigh(info)
    null = eigvecs[:, np.abs(eigvals) < 1e-8 * max(1.0, np.abs(eigvals).max())]
    if null.size == 0:
        return list(names)
    involved = np.any(np.abs(null) > 1e-6, axis=1)
    return [n for n, flag in zip(names, involved) if flag]


def fit_cox(episodes: list[Episode], transition: tuple[int, int],
            covariate_names, direction: int | None = None) -> CoxFit:
    """Maximize the Breslow-tie log partial likelihood by Newton-Raphson.

    Zero-variance covariates are pinned at 0 with a collinearity warning.
    Divergence (|beta| > 20) raises :class:`SeparationError`; a singular
    information matrix raises :class:`CollinearityError`.
    """
    covariate_names = tuple(covariate_names)
    durations, events, Z = _design(episodes, transition, covariate_names)
    if events.sum() == 0:
        raise EstimationError(
            f"no {transition[0]}->{transition[1]} events: cannot fit a Cox model"
        )

    variances = Z.var(axis=0) if len(Z) else np.zeros(len(covariate_names))
    active = variances > 0
    pinned = tuple(n for n, a in zip(covariate_names, active) if not a)
    if pinned:
        warnings.warn(
            f"transition {transition[0]}->{transition[1]}: zero-variance covariates "
            f"pinned at 0: {', '.join(pinned)}"
        )

    p_all = len(covariate_names)
    active_names = [n for n, a in zip(covariate_names, active) if a]
    pl = _PartialLikelihood(durations, events, Z[:, active])
    p = pl.p

    beta = np.zeros(p)
    loglik, grad, info = pl.evaluate(beta)
    converged = p == 0
    for _ in range(MAX_ITER if p else 0):
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise CollinearityError(_name_collinear(info, active_names))
        # step-halving: never accept a likelihood decrease
        scale = 1.0
        for _ in range(30):
            candidate = beta + scale * step
            new_loglik, new_grad, new_info = pl.evaluate(candidate)
            if new_loglik >= loglik or not np.isfinite(new_loglik):
                break
            scale /= 2
        if not np.isfinite(new_loglik):
            raise EstimationError("partial likelihood became non-finite during fitting")
        delta = new_loglik - loglik
        beta, loglik, grad, info = candidate, new_loglik, new_grad, new_info
        if np.any(np.abs(beta) > BETA_DIVERGENCE):
            worst = int(np.argmax(np.abs(beta)))
            raise SeparationError(active_names[worst], beta[worst])
        if abs(delta) < TOL_LOGLIK and np.max(np.abs(grad), initial=0.0) < TOL_GRADIENT:
            converged = True
            break

    try:
        cov_active = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise CollinearityError(_name_collinear(info, active_names))

    coef = np.zeros(p_all)
    coef[active] = beta
    covariance = np.zeros((p_all, p_all))
    covariance[np.ix_(active, active)] = (cov_active + cov_active.T) / 2

    baseline = _breslow(pl, beta, transition)
    return CoxFit(
        transition=transition,
        covariate_names=covariate_names,
        coef=coef,
        covariance=covariance,
        baseline=baseline,
        n_events=int(events.sum()),
        converged=converged,
        log_likelihood=loglik,
        direction=direction,
        pinned=pinned,
    )


def _breslow(pl: _PartialLikelihood, beta_active, transition) -> CumulativeHazard:
    s0 = pl.s0_at_events(beta_active)
    keep = pl.risk_sizes > 0          # J_r(u) guard; always true at event times
    return CumulativeHazard(
        transition=transition,
        times=pl.event_times[keep],
        increments=pl.d_counts[keep] / s0[keep],
        events=pl.d_counts[keep],
        at_risk=pl.risk_sizes[keep],
    )


def breslow_baseline(fit: CoxFit, episodes: list[Episode]) -> CumulativeHazard:
    """Breslow cumulative baseline hazard dN/S0 at the fitted coefficients."""
    if not fit.converged:
        raise EstimationError("cannot compute a baseline from a non-converged fit")
    durations, events, Z = _design(episodes, fit.transition, fit.covariate_names)
    pl = _PartialLikelihood(durations, events, Z)
    return _breslow(pl, fit.coef, fit.transition)


def scaled_hazard(fit: CoxFit, scenario: Scenario) -> CumulativeHazard:
    """Baseline increments scaled pointwise by exp(beta' z*)."""
    scale = float(np.exp(fit.coef @ scenario.vector(fit.covariate_names)))
    base = fit.baseline
    return CumulativeHazard(
        transition=base.transition,
        times=base.times,
        increments=base.increments * scale,
        events=base.events,
        at_risk=base.at_risk,
    )


def _scenario_hazard_set(fits: dict, scenario: Scenario, space: StateSpace):
    hazards = {}
    for transition in space.transitions():
        fit = fits.get(transition)
        if fit is None:
            warnings.warn(
                f"transition {transition[0]}->{transition[1]} has no fitted model; "
                "treating it as event-free (zero hazard)"
            )
            hazards[transition] = CumulativeHazard.empty(transition)
        else:
            hazards[transition] = scaled_hazard(fit, scenario)
    return make_hazard_set(space, hazards)


def predict_matrix(fits: dict, scenario: Scenario, v: float, t: float,
                   space: StateSpace) -> TransitionMatrix:
    """Covariate-conditional Aalen-Johansen matrix from fitted models."""
    hs = _scenario_hazard_set(fits, scenario, space)
    from .nonparametric import hazard_matrix_increments
    grid, inc = hazard_matrix_increments(hs)
    try:
        return product_integral(grid, inc, v, t, space.labels)
    except EstimationError as exc:
        raise EstimationError(
            f"{exc} (under scenario {scenario.values}; the step-function scaling "
            "cannot represent this extreme covariate assignment)"
        ) from exc


def scenario_elos(fits: dict, scenario: Scenario, tau_max: float,
                  space: StateSpace, method: str = "sojourn") -> dict:
    """Expected length of stay per state under covariate-scaled hazards."""
    hs = _scenario_hazard_set(fits, scenario, space)
    return {r: np_elos(hs, r, tau_max, method=method) for r in range(space.n_states)}


def delta_matrix(fits: dict, worst: Scenario, best: Scenario, horizon: float,
                 space: StateSpace) -> np.ndarray:
    """P_worst(0, h) - P_best(0, h) in signed percentage points."""
    p_worst = predict_matrix(fits, worst, 0.0, horizon, space)
    p_best = predict_matrix(fits, best, 0.0, horizon, space)
    return (p_worst.entries - p_best.entries) * 100.0


@dataclass(frozen=True)
class TrendTest:
    covariate: str
    rho: float
    p_value: float


@dataclass(frozen=True)
class SchoenfeldResult:
    event_times: np.ndarray       # one entry per event (ties repeated)
    residuals: np.ndarray         # n_events x p
    trend: tuple[TrendTest, ...]  # rank correlation of residuals vs event time


def schoenfeld_residuals(fit: CoxFit, episodes: list[Episode]) -> SchoenfeldResult:
    """Per-event residuals Z_event - weighted risk-set mean, with trend tests."""
    if not fit.converged:
        raise EstimationError("cannot compute residuals from a non-converged fit")
    durations, events, Z = _design(episodes, fit.transition, fit.covariate_names)
    order = np.argsort(-durations, kind="stable")
    dur_desc, Z_desc = durations[order], Z[order]
    w = np.exp(Z_desc @ fit.coef)
    cum_w = np.cumsum(w)
    cum_wz = np.cumsum(w[:, None] * Z_desc, axis=0)
    dur_asc = np.sort(durations)

    event_order = np.argsort(durations[events], kind="stable")
    event_times = durations[events][event_order]
    event_Z = Z[events][event_order]
    m = len(dur_asc) - np.searchsorted(dur_asc, event_times, side="left")
    means = cum_wz[m - 1] / cum_w[m - 1, None]
    residuals = event_Z - means

    trend = []
    for j, name in enumerate(fit.covariate_names):
        col = residuals[:, j]
        if len(col) < 3 or np.allclose(col, col[0]):
            trend.append(TrendTest(name, 0.0, 1.0))
            continue
        rho, p_value = stats.spearmanr(event_times, col)
        if not np.isfinite(rho):
            rho, p_value = 0.0, 1.0
        trend.append(TrendTest(name, float(rho), float(p_value)))
    return SchoenfeldResult(
        event_times=event_times, residuals=residuals, trend=tuple(trend)
    )


def hazard_ratio_table(fits) -> list[HazardRatioRow]:
    """Wald hazard-ratio rows (95% CI, standard-normal p-values) per covariate."""
    if isinstance(fits, dict):
        fits = [fits[k] for k in sorted(fits)]
    rows = []
    for fit in fits:
        ses = np.sqrt(np.clip(np.diag(fit.covariance), 0.0, None))
        for name, coef, se in zip(fit.covariate_names, fit.coef, ses):
            if se > 0:
                z = coef / se
                p_value = float(2 * stats.norm.sf(abs(z)))
            else:
                p_value = 1.0
            rows.append(HazardRatioRow(
                transition=fit.transition,
                covariate=name,
                coef=float(coef),
                hr=float(np.exp(coef)),
                ci_low=float(np.exp(coef - Z_95 * se)),
                ci_high=float(np.exp(coef + Z_95 * se)),
                std_err=float(se),
                p_value=p_value,
                direction=fit.direction,
            ))
    return rows
