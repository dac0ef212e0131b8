"""Batch command-line front-end: ingest -> episodes -> fit -> predict.

Each command is idempotent given identical inputs and seed; failures exit
nonzero with a machine-readable error JSON on stderr.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click
import yaml

from . import cox as cox_mod
from . import episodes as ep
from . import ingestion as ing
from . import nonparametric as npar
from . import reports
from .config import Config, load_config
from .cox import Scenario
from .errors import ConfigError, DelayMsmError, EstimationError
from .simulate import emit_stop_files, load_intensity_spec, simulate_sojourns
from .states import TimeSlot, Zone


def _fail(exc: DelayMsmError) -> None:
    click.echo(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}),
        err=True,
    )
    raise SystemExit(1)


def _load_cfg(config_path, workspace) -> Config:
    return load_config(config_path, workspace_override=workspace)


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing upstream artifact {path}; run 'delaymsm {producer}' first")
    return path


def _header(cfg: Config) -> dict:
    return reports.report_header(cfg.sha256(), with_timestamp=not cfg.no_timestamp)


@click.group()
def main():
    """Multi-state modeling of rail delay trajectories."""


_config_option = click.option(
    "-c", "--config", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
)
_workspace_option = click.option("-w", "--workspace", default=None)


@main.command("simulate")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "output_dir", default="synthetic")
def cmd_simulate(spec_file, output_dir):
    """Generate a synthetic stop-level dataset with ground truth."""
    try:
        spec, n_missions, seed = load_intensity_spec(spec_file)
        result = simulate_sojourns(spec, n_missions, seed)
        paths = emit_stop_files(result, output_dir)
    except DelayMsmError as exc:
        _fail(exc)
    click.echo(json.dumps({k: str(v) for k, v in sorted(paths.items())}))


@main.command("ingest")
@_config_option
@_workspace_option
def cmd_ingest(config_path, workspace):
    """Parse, filter, and join the input files into the analysis table."""
    try:
        cfg = _load_cfg(config_path, workspace)
        station_cfg = ing.load_station_config(cfg.path("stations"))
        stops, stop_rej = ing.parse_stops(cfg.path("stops"), cfg.delimiter)
        weather, weather_rej = ing.parse_weather(cfg.path("weather"), cfg.delimiter)
        frequency, freq_rej = ing.parse_frequency(cfg.path("frequency"), cfg.delimiter)
        kept, removed = ing.filter_window(
            stops, holidays=station_cfg.holidays, line_code=station_cfg.line_code
        )
        rows = ing.build_analysis(kept, weather, frequency, station_cfg)
        out = cfg.output_dir()
        ing.write_analysis(rows, out / "analysis.csv", cfg.delimiter)
        ing.write_rejection_report(
            out / "rejections.json",
            header=_header(cfg),
            stops=stop_rej, weather=weather_rej, frequency=freq_rej,
            filtered=removed, n_rows=len(rows),
        )
    except DelayMsmError as exc:
        _fail(exc)
    click.echo(f"wrote {len(rows)} analysis rows")


@main.command("episodes")
@_config_option
@_workspace_option
def cmd_episodes(config_path, workspace):
    """Build clock-reset episodes (time-slot and zone-split variants)."""
    try:
        cfg = _load_cfg(config_path, workspace)
        out = cfg.output_dir()
        rows = ing.read_analysis(
            _require(out / "analysis.csv", "ingest"), cfg.delimiter
        )
        trajectories, quarantine = ep.build_trajectories(rows)
        space = cfg.state_space()
        for name, split in (("timeslot", False), ("zone", True)):
            episodes = ep.build_all_episodes(trajectories, space, split_zones=split)
            ep.write_episodes(episodes, out / f"episodes_{name}.csv", cfg.delimiter)
        reports.write_json(out / "quarantine.json", {
            "header": _header(cfg),
            "quarantined": [dataclasses.asdict(q) | {"day": q.day.isoformat()}
                            for q in quarantine],
        })
    except DelayMsmError as exc:
        _fail(exc)
    click.echo(f"built episodes from {len(trajectories)} trajectories "
               f"({len(quarantine)} quarantined)")


def _episode_file(cfg: Config, stratify: str) -> str:
    return "episodes_zone.csv" if stratify == "zone" else "episodes_timeslot.csv"


def _stratum_key(episode, stratify: str) -> str:
    st = episode.stratum
    if stratify == "time_slot" and st.time_slot is not None:
        return f"dir{st.direction}_{st.time_slot.value}"
    if stratify == "zone" and st.zone is not None:
        return f"dir{st.direction}_{st.zone.value}"
    return f"dir{st.direction}"


@main.command("fit-np")
@_config_option
@_workspace_option
def cmd_fit_np(config_path, workspace):
    """Nonparametric hazards, ELOS with bootstrap CIs, conditional matrices."""
    try:
        cfg = _load_cfg(config_path, workspace)
        out = cfg.output_dir()
        space = cfg.state_space()
        episodes = ep.read_episodes(
            _require(out / _episode_file(cfg, cfg.stratify), "episodes"),
            cfg.delimiter,
        )
        by_stratum: dict = {}
        for e in episodes:
            by_stratum.setdefault(_stratum_key(e, cfg.stratify), []).append(e)

        hazard_sets, elos_rows = {}, []
        header = _header(cfg)
        for key in sorted(by_stratum):
            group = by_stratum[key]
            hs = npar.estimate_hazards(group, space)
            hazard_sets[key] = hs
            reports.write_json(out / f"hazards_{key}.json", {
                "header": header,
                "stratum": key,
                "hazards": {
                    f"{r}->{s}": reports.hazard_payload(h)
                    for (r, s), h in sorted(hs.hazards.items())
                },
            })
            mission_groups: dict = {}
            for e in group:
                mission_groups.setdefault((e.unit.mission, e.unit.day), []).append(e)
            groups = [mission_groups[k] for k in sorted(mission_groups)]
            for state in range(space.n_states):
                def statistic(sample, state=state):
                    return npar.elos(
                        npar.estimate_hazards(sample, space), state,
                        cfg.tau_max, method=cfg.elos_method,
                    )
                boot = npar.bootstrap_groups(
                    groups, statistic, cfg.bootstrap_replications, cfg.bootstrap_seed
                )
                elos_rows.append({
                    "stratum": key, "state": space.labels[state],
                    "estimate": boot.estimate, "ci_low": boot.ci_low,
                    "ci_high": boot.ci_high, "unstable": boot.unstable,
                })

        reports.write_json(out / "elos.json", {"header": header, "rows": elos_rows})
        (out / "elos.txt").write_text(
            reports.elos_table_text(elos_rows, header), encoding="utf-8"
        )
        matrices = npar.conditional_matrix_report(
            hazard_sets, horizons=cfg.horizons, grain=cfg.rounding_grain_pct
        )
        reports.write_json(out / "matrices.json", {"header": header, "matrices": matrices})
        (out / "matrices.txt").write_text(
            reports.matrices_report_text(matrices, header), encoding="utf-8"
        )
    except DelayMsmError as exc:
        _fail(exc)
    click.echo(f"fitted {len(hazard_sets)} strata")


def _with_model_covariates(episode, model: str, cfg: Config):
    cov = {}
    for name in cfg.covariates:
        v = episode.covariates.get(name)
        if v is not None and cfg.covariate_scale_per100 and name in ("boarded", "alighted"):
            v = v / 100.0
        cov[name] = v
    if model == "temporal":
        slot = episode.stratum.time_slot
        cov["morning"] = float(slot == TimeSlot.MORNING_PEAK)
        cov["evening"] = float(slot == TimeSlot.EVENING_PEAK)
    else:
        zone = episode.stratum.zone
        for k, z in enumerate((Zone.Z1, Zone.Z2, Zone.Z3), start=1):
            cov[f"zone{k}"] = float(zone == z)   # Zone 4 is the reference
    return dataclasses.replace(episode, covariates=cov)


def model_covariate_names(model: str, cfg: Config) -> tuple:
    extra = ("morning", "evening") if model == "temporal" else ("zone1", "zone2", "zone3")
    return tuple(cfg.covariates) + extra


@main.command("fit-cox")
@_config_option
@_workspace_option
def cmd_fit_cox(config_path, workspace):
    """Per-transition, per-direction Cox fits with HR tables and diagnostics."""
    try:
        cfg = _load_cfg(config_path, workspace)
        out = cfg.output_dir()
        space = cfg.state_space()
        header = _header(cfg)
        n_fits = 0
        for model in cfg.cox_models:
            stratify = "time_slot" if model == "temporal" else "zone"
            episodes = ep.read_episodes(
                _require(out / _episode_file(cfg, stratify), "episodes"),
                cfg.delimiter,
            )
            episodes = [_with_model_covariates(e, model, cfg) for e in episodes]
            names = model_covariate_names(model, cfg)
            directions = sorted({e.stratum.direction for e in episodes})
            fits, skipped, schoenfeld = [], [], {}
            for direction in directions:
                subset = [e for e in episodes if e.stratum.direction == direction]
                for transition in space.transitions():
                    try:
                        fit = cox_mod.fit_cox(subset, transition, names,
                                              direction=direction)
                    except EstimationError as exc:
                        skipped.append({
                            "transition": list(transition), "direction": direction,
                            "reason": str(exc),
                        })
                        continue
                    fits.append(fit)
                    key = f"dir{direction}_{transition[0]}->{transition[1]}"
                    if fit.converged:
                        diag = cox_mod.schoenfeld_residuals(fit, subset)
                        schoenfeld[key] = [
                            {"covariate": t.covariate, "rho": t.rho,
                             "p_value": t.p_value}
                            for t in diag.trend
                        ]
                    else:
                        schoenfeld[key] = {"error": "fit did not converge"}
            reports.save_fits(out / f"cox_fits_{model}.json", fits, model, header)
            rows = cox_mod.hazard_ratio_table(fits)
            reports.write_json(out / f"hr_table_{model}.json", {
                "header": header,
                "rows": [dataclasses.asdict(r) for r in rows],
                "skipped": skipped,
            })
            (out / f"hr_table_{model}.txt").write_text(
                reports.hr_table_text(rows, header), encoding="utf-8"
            )
            reports.write_json(out / f"schoenfeld_{model}.json", {
                "header": header, "trend_tests": schoenfeld,
            })
            n_fits += len(fits)
    except DelayMsmError as exc:
        _fail(exc)
    click.echo(f"fitted {n_fits} Cox models")


@main.command("predict")
@_config_option
@_workspace_option
@click.option("-s", "--scenarios", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--model", default="temporal", type=click.Choice(["temporal", "spatial"]))
def cmd_predict(config_path, workspace, scenario_path, model):
    """Scenario matrices, scenario ELOS, and worst-minus-best delta matrices."""
    try:
        cfg = _load_cfg(config_path, workspace)
        out = cfg.output_dir()
        space = cfg.state_space()
        header = _header(cfg)
        fits_by_dir = reports.load_fits(
            _require(out / f"cox_fits_{model}.json", "fit-cox")
        )
        with open(scenario_path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict) or "scenarios" not in raw:
            raise ConfigError(f"{scenario_path}: expected a mapping with 'scenarios'")
        scenarios = {name: Scenario(dict(values))
                     for name, values in raw["scenarios"].items()}

        payload = {"header": header, "model": model, "directions": {}}
        text = reports.header_lines(header)
        for direction in sorted(fits_by_dir):
            fits = fits_by_dir[direction]
            entry = {"scenarios": {}, "delta": {}}
            for name, scenario in sorted(scenarios.items()):
                per_scenario = {"matrices": {}, "elos": {}}
                for h in cfg.horizons:
                    matrix = cox_mod.predict_matrix(fits, scenario, 0.0, h, space)
                    percent = [
                        [npar.round_to_grain(100 * p, cfg.rounding_grain_pct)
                         for p in row]
                        for row in matrix.entries
                    ]
                    per_scenario["matrices"][f"{h:g}"] = {
                        "states": list(space.labels),
                        "percent": percent,
                        "raw": matrix.entries.tolist(),
                    }
                    text.extend(reports.matrix_text(
                        space.labels, percent,
                        f"\ndir{direction} {name} - after {h:g} minutes",
                    ))
                try:
                    per_scenario["elos"] = {
                        space.labels[r]: value
                        for r, value in cox_mod.scenario_elos(
                            fits, scenario, cfg.tau_max, space, method=cfg.elos_method
                        ).items()
                    }
                except EstimationError as exc:
                    # a sparse tail risk set can make the scaled increments
                    # exceed 1 before tau_max even for moderate scenarios;
                    # report it without discarding the horizon matrices
                    per_scenario["elos"] = {"error": str(exc)}
                entry["scenarios"][name] = per_scenario
            if "best" in scenarios and "worst" in scenarios:
                for h in cfg.horizons:
                    delta = cox_mod.delta_matrix(
                        fits, scenarios["worst"], scenarios["best"], h, space
                    )
                    entry["delta"][f"{h:g}"] = delta.tolist()
                    text.extend(reports.delta_text(
                        space.labels, delta,
                        f"\ndir{direction} delta (worst - best) - after {h:g} minutes",
                    ))
            payload["directions"][str(direction)] = entry

        reports.write_json(out / f"predictions_{model}.json", payload)
        (out / f"predictions_{model}.txt").write_text(
            "\n".join(text) + "\n", encoding="utf-8"
        )
    except DelayMsmError as exc:
        _fail(exc)
    click.echo(f"predicted {len(scenarios)} scenarios for {len(fits_by_dir)} directions")


if __name__ == "__main__":
    main()
