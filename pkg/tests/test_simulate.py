import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delaymsm import ingestion as ing, simulate as sim
from delaymsm.episodes import build_trajectories
from delaymsm.errors import ConfigError, DataError
from delaymsm.states import classify_state, default_three_state


class TestHazardFamilies:
    @given(st.floats(min_value=1e-3, max_value=50, allow_nan=False))
    def test_constant_inverse_round_trip(self, h):
        hz = sim.ConstantHazard(rate=0.07)
        assert hz.cumulative(hz.inverse(h)) == pytest.approx(h, rel=1e-12)

    @given(st.floats(min_value=1e-3, max_value=50, allow_nan=False))
    def test_weibull_inverse_round_trip(self, h):
        hz = sim.WeibullHazard(shape=1.7, scale=12.0)
        assert hz.cumulative(hz.inverse(h)) == pytest.approx(h, rel=1e-9)

    @given(st.floats(min_value=1e-3, max_value=5, allow_nan=False))
    def test_piecewise_inverse_round_trip(self, h):
        hz = sim.PiecewiseConstantHazard(breaks=(5.0, 15.0), rates=(0.1, 0.02, 0.2))
        assert hz.cumulative(hz.inverse(h)) == pytest.approx(h, rel=1e-9)

    def test_piecewise_cumulative_hand_value(self):
        hz = sim.PiecewiseConstantHazard(breaks=(10.0,), rates=(0.1, 0.3))
        assert hz.cumulative(5.0) == pytest.approx(0.5)
        assert hz.cumulative(20.0) == pytest.approx(1.0 + 3.0)

    def test_zero_rate_never_fires(self):
        hz = sim.ConstantHazard(rate=0.0)
        assert hz.inverse(1.0) == math.inf

    def test_validation(self):
        with pytest.raises(DataError):
            sim.ConstantHazard(rate=-1.0)
        with pytest.raises(DataError):
            sim.WeibullHazard(shape=0.0, scale=1.0)
        with pytest.raises(DataError):
            sim.PiecewiseConstantHazard(breaks=(5.0,), rates=(0.1,))
        with pytest.raises(DataError):
            sim.PiecewiseConstantHazard(breaks=(5.0, 3.0), rates=(0.1, 0.1, 0.1))

    def test_draw_sojourn_zero_scale_is_inf(self):
        rng = np.random.default_rng(0)
        assert sim.draw_sojourn(sim.ConstantHazard(1.0), 0.0, rng) == math.inf

    def test_draw_sojourn_exponential_mean(self):
        rng = np.random.default_rng(1)
        draws = [sim.draw_sojourn(sim.ConstantHazard(0.1), 2.0, rng)
                 for _ in range(20000)]
        # effective rate 0.2 -> mean 5
        assert np.mean(draws) == pytest.approx(5.0, rel=0.05)


def basic_spec(**overrides):
    space = default_three_state()
    baselines = {
        (0, 1): sim.ConstantHazard(0.05), (0, 2): sim.ConstantHazard(0.01),
        (1, 0): sim.ConstantHazard(0.10), (1, 2): sim.ConstantHazard(0.03),
        (2, 0): sim.ConstantHazard(0.02), (2, 1): sim.ConstantHazard(0.06),
    }
    kwargs = dict(space=space, baselines=baselines)
    kwargs.update(overrides)
    return sim.IntensitySpec(**kwargs)


class TestSimulateSojourns:
    def test_deterministic_given_seed(self):
        spec = basic_spec()
        a = sim.simulate_sojourns(spec, 20, seed=5)
        b = sim.simulate_sojourns(spec, 20, seed=5)
        assert a.trajectories == b.trajectories
        assert a.true_episodes == b.true_episodes
        c = sim.simulate_sojourns(spec, 20, seed=6)
        assert c.true_episodes != a.true_episodes

    def test_true_durations_cover_horizon(self):
        result = sim.simulate_sojourns(basic_spec(), 30, seed=0)
        by_mission = {}
        for e in result.true_episodes:
            by_mission.setdefault(e.unit.mission, []).append(e)
        for episodes in by_mission.values():
            assert sum(e.duration for e in episodes) == pytest.approx(130.0)
            assert episodes[-1].censored          # administrative censoring

    def test_panel_snaps_to_stop_grid(self):
        result = sim.simulate_sojourns(basic_spec(), 10, seed=1)
        for traj in result.trajectories:
            arrivals = [s.arrival_minutes for s in traj.stops]
            assert arrivals == [4.0 * i for i in range(33)]

    def test_panel_state_matches_continuous_path(self):
        space = default_three_state()
        result = sim.simulate_sojourns(basic_spec(), 25, seed=2)
        for traj in result.trajectories:
            true = [e for e in result.true_episodes
                    if e.unit.mission == traj.mission]
            # reconstruct the right-continuous path from the true episodes
            entry, states = [0.0], [true[0].from_state]
            t = 0.0
            for e in true[:-1]:
                t += e.duration
                entry.append(t)
                states.append(e.to_state)
            for stop in traj.stops:
                k = np.searchsorted(entry, stop.arrival_minutes, side="right") - 1
                assert classify_state(stop.delay, space) == states[k]

    def test_disallowed_baseline_rejected(self):
        space = default_three_state(adjacent=True)
        with pytest.raises(DataError, match="disallowed"):
            sim.IntensitySpec(space=space,
                              baselines={(0, 2): sim.ConstantHazard(0.1)})

    def test_beta_dimension_checked(self):
        with pytest.raises(DataError, match="entries"):
            basic_spec(beta={(0, 1): np.array([0.1, 0.2])},
                       covariate_names=("x",))

    def test_covariate_effect_shortens_sojourns(self):
        spec_hi = basic_spec(
            beta={(0, 1): np.array([1.0])}, covariate_names=("x",),
            covariate_sampler=lambda names, rng: {"x": 2.0},
        )
        spec_lo = basic_spec(
            beta={(0, 1): np.array([1.0])}, covariate_names=("x",),
            covariate_sampler=lambda names, rng: {"x": -2.0},
        )
        hi = sim.simulate_sojourns(spec_hi, 200, seed=3)
        lo = sim.simulate_sojourns(spec_lo, 200, seed=3)

        def mean_sojourn(result):
            durations = [e.duration for e in result.true_episodes
                         if e.from_state == 0 and e.to_state == 1]
            return np.mean(durations)

        assert mean_sojourn(hi) < mean_sojourn(lo)

    def test_mission_schedule_weekday_in_window(self):
        for m in range(0, 500, 7):
            date, start = sim.mission_schedule(m)
            assert date.weekday() < 5
            assert 6 <= start.hour < 18
            ing.time_slot_for(start)       # must not raise


class TestRepresentativeDelays:
    def test_one_delay_per_state_in_band(self):
        space = default_three_state()
        delays = sim.representative_delays(space)
        assert len(delays) == space.n_states
        for state, delay in enumerate(delays):
            assert classify_state(delay, space) == state


class TestTrueElos:
    def test_analytic_constant_rates(self):
        spec = basic_spec()
        total = 0.05 + 0.01
        expected = (1 - math.exp(-total * 130.0)) / total
        assert sim.true_elos(spec, 130.0, 0) == pytest.approx(expected)

    def test_monte_carlo_agrees_with_analytic(self):
        spec = basic_spec(baselines={
            (0, 1): sim.WeibullHazard(shape=1.0, scale=20.0),  # == Exp(1/20)
            (0, 2): sim.ConstantHazard(0.0),
            (1, 0): sim.ConstantHazard(0.1), (1, 2): sim.ConstantHazard(0.01),
            (2, 0): sim.ConstantHazard(0.1), (2, 1): sim.ConstantHazard(0.01),
        })
        mc = sim.true_elos(spec, 130.0, 0, n_mc=50_000, seed=1)
        analytic = (1 - math.exp(-130.0 / 20.0)) * 20.0
        assert mc == pytest.approx(analytic, abs=0.5)

    def test_no_exit_rates(self):
        spec = basic_spec(baselines={
            (0, 1): sim.ConstantHazard(0.0), (0, 2): sim.ConstantHazard(0.0),
            (1, 0): sim.ConstantHazard(0.1), (1, 2): sim.ConstantHazard(0.01),
            (2, 0): sim.ConstantHazard(0.1), (2, 1): sim.ConstantHazard(0.01),
        })
        assert sim.true_elos(spec, 130.0, 0) == 130.0


class TestEmitAndReingest:
    def test_round_trip_preserves_state_paths(self, tmp_path):
        space = default_three_state()
        result = sim.simulate_sojourns(basic_spec(), 40, seed=9)
        paths = sim.emit_stop_files(result, tmp_path)

        cfg = ing.load_station_config(paths["stations"])
        stops, rejections = ing.parse_stops(paths["stops"])
        assert rejections == []
        kept, _ = ing.filter_window(stops, holidays=cfg.holidays,
                                    line_code=cfg.line_code)
        weather, _ = ing.parse_weather(paths["weather"])
        frequency, _ = ing.parse_frequency(paths["frequency"])
        rows = ing.build_analysis(kept, weather, frequency, cfg)
        rebuilt, quarantine = build_trajectories(rows)
        assert quarantine == []

        by_mission = {t.mission: t for t in result.trajectories}
        for traj in rebuilt:
            orig = by_mission[traj.mission]
            # missions whose late stops fall outside the 06:00-20:00 window
            # lose those stops; compare the observed prefix
            assert len(traj.stops) <= len(orig.stops)
            for got, want in zip(traj.stops, orig.stops):
                assert got.station == want.station
                assert got.delay == pytest.approx(want.delay, abs=1e-6)
                assert classify_state(got.delay, space) == \
                    classify_state(want.delay, space)

    def test_ground_truth_file(self, tmp_path):
        result = sim.simulate_sojourns(basic_spec(), 5, seed=0)
        paths = sim.emit_stop_files(result, tmp_path)
        import json
        truth = json.loads(paths["ground_truth"].read_text())
        assert truth["n_missions"] == 5
        assert truth["thresholds"] == [5.0, 10.0]
        assert "0->1" in truth["transitions"]
        assert set(truth["true_elos_at_zero_covariates"]) == {"0", "1", "2"}


class TestLoadSpec:
    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "sim.yaml"
        path.write_text("""
thresholds: [5, 10]
covariates: [x]
n_missions: 17
seed: 99
horizon: 60
stop_interval: 2
transitions:
  "0->1": {family: weibull, shape: 1.5, scale: 10, beta: [0.4]}
  "0->2": {family: constant, rate: 0.01}
  "1->0": {family: piecewise, breaks: [5], rates: [0.2, 0.05]}
  "1->2": {family: constant, rate: 0.02}
  "2->0": {family: constant, rate: 0.02}
  "2->1": {family: constant, rate: 0.05}
""")
        spec, n_missions, seed = sim.load_intensity_spec(path)
        assert (n_missions, seed) == (17, 99)
        assert spec.horizon == 60.0 and spec.stop_interval == 2.0
        assert isinstance(spec.baselines[(0, 1)], sim.WeibullHazard)
        assert isinstance(spec.baselines[(1, 0)], sim.PiecewiseConstantHazard)
        assert spec.beta[(0, 1)].tolist() == [0.4]

    def test_unknown_family(self, tmp_path):
        path = tmp_path / "sim.yaml"
        path.write_text('transitions:\n  "0->1": {family: gamma, rate: 1}\n')
        with pytest.raises(ConfigError, match="family"):
            sim.load_intensity_spec(path)

    def test_unsupported_thresholds(self, tmp_path):
        path = tmp_path / "sim.yaml"
        path.write_text("thresholds: [3, 6, 9, 12]\n")
        with pytest.raises(ConfigError, match="thresholds"):
            sim.load_intensity_spec(path)
