"""Report serialization: JSON artifacts and human-readable text tables.

Every report carries a header naming the config hash and package version;
timestamps are optional so reruns can be byte-identical.
"""

from __future__ import annotations

import datetime
import json
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .errors import DataError
from .states import CoxFit, CumulativeHazard

FIT_SCHEMA_VERSION = 1


def package_version() -> str:
    try:
        return version("delaymsm")
    except PackageNotFoundError:
        return "0.0.0+local"


def report_header(config_sha256: str, with_timestamp: bool) -> dict:
    header = {"config_sha256": config_sha256, "package_version": package_version()}
    if with_timestamp:
        header["generated_at"] = datetime.datetime.now().isoformat(timespec="seconds")
    return header


def write_json(path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8"
    )


def header_lines(header: dict) -> list[str]:
    return [f"# {key}: {value}" for key, value in sorted(header.items())]


def hazard_payload(hazard: CumulativeHazard) -> dict:
    return {
        "transition": list(hazard.transition),
        "times": hazard.times.tolist(),
        "increments": hazard.increments.tolist(),
        "events": hazard.events.tolist(),
        "at_risk": hazard.at_risk.tolist(),
    }


def hazard_from_payload(payload: dict) -> CumulativeHazard:
    return CumulativeHazard(
        transition=tuple(payload["transition"]),
        times=np.array(payload["times"]),
        increments=np.array(payload["increments"]),
        events=np.array(payload["events"]),
        at_risk=np.array(payload["at_risk"]),
    )


def save_fits(path, fits: list[CoxFit], model: str, header: dict) -> None:
    payload = {
        "schema_version": FIT_SCHEMA_VERSION,
        "header": header,
        "model": model,
        "fits": [
            {
                "transition": list(fit.transition),
                "direction": fit.direction,
                "covariates": list(fit.covariate_names),
                "coef": fit.coef.tolist(),
                "covariance": fit.covariance.tolist(),
                "baseline": hazard_payload(fit.baseline),
                "n_events": fit.n_events,
                "converged": fit.converged,
                "log_likelihood": fit.log_likelihood,
                "pinned": list(fit.pinned),
            }
            for fit in fits
        ],
    }
    write_json(path, payload)


def load_fits(path) -> dict:
    """Load a fit artifact into {direction: {transition: CoxFit}}."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("schema_version") != FIT_SCHEMA_VERSION:
        raise DataError(
            f"{path}: unsupported fit artifact schema "
            f"{payload.get('schema_version')!r} (expected {FIT_SCHEMA_VERSION})"
        )
    fits: dict = {}
    for entry in payload["fits"]:
        fit = CoxFit(
            transition=tuple(entry["transition"]),
            covariate_names=tuple(entry["covariates"]),
            coef=np.array(entry["coef"]),
            covariance=np.array(entry["covariance"]),
            baseline=hazard_from_payload(entry["baseline"]),
            n_events=entry["n_events"],
            converged=entry["converged"],
            log_likelihood=entry["log_likelihood"],
            direction=entry["direction"],
            pinned=tuple(entry["pinned"]),
        )
        fits.setdefault(fit.direction, {})[fit.transition] = fit
    return fits


def elos_table_text(rows: list[dict], header: dict) -> str:
    """Stratum / state / estimate (CI) layout."""
    lines = header_lines(header)
    lines.append(f"{'Stratum':<28} {'State':<14} Expected Length of Stay (min)")
    for row in rows:
        ci = f"({row['ci_low']:.2f}-{row['ci_high']:.2f})"
        flag = "  [unstable]" if row.get("unstable") else ""
        lines.append(
            f"{row['stratum']:<28} {row['state']:<14} "
            f"{row['estimate']:.2f} {ci}{flag}"
        )
    return "\n".join(lines) + "\n"


def matrix_text(states, percent_rows, title: str) -> list[str]:
    width = max(12, max(len(s) for s in states) + 2)
    lines = [title, " " * width + "".join(f"{s:>{width}}" for s in states)]
    for state, row in zip(states, percent_rows):
        lines.append(f"{state:<{width}}" + "".join(f"{p:>{width - 1}.0f}%" for p in row))
    return lines


def matrices_report_text(report: dict, header: dict) -> str:
    lines = header_lines(header)
    for key in sorted(report):
        for horizon in sorted(report[key]):
            entry = report[key][horizon]
            lines.extend(matrix_text(
                entry["states"], entry["percent"],
                f"\n{key} - after {horizon:g} minutes",
            ))
    return "\n".join(lines) + "\n"


def hr_table_text(rows, header: dict) -> str:
    lines = header_lines(header)
    lines.append(
        f"{'Trans':<8} {'Direction':<10} {'Cov':<18} {'Coef':>8} {'HR':>8} "
        f"{'95% CI':>20} {'Std Err':>9} {'p-value':>10}"
    )
    for row in rows:
        trans = f"{row.transition[0]} -> {row.transition[1]}"
        ci = f"[{row.ci_low:.4f}, {row.ci_high:.4f}]"
        p = f"{row.p_value:.4f}" if row.p_value >= 1e-4 else f"{row.p_value:.1e}"
        direction = "" if row.direction is None else str(row.direction)
        lines.append(
            f"{trans:<8} {direction:<10} {row.covariate:<18} {row.coef:>8.4f} "
            f"{row.hr:>8.4f} {ci:>20} {row.std_err:>9.4f} {p:>10}"
        )
    return "\n".join(lines) + "\n"


def delta_text(states, delta, title: str) -> list[str]:
    width = max(12, max(len(s) for s in states) + 2)
    lines = [title, " " * width + "".join(f"{s:>{width}}" for s in states)]
    for state, row in zip(states, delta):
        lines.append(f"{state:<{width}}" + "".join(f"{p:>+{width - 1}.1f}%" for p in row))
    return lines
