import datetime

import pytest

from delaymsm import episodes as ep
from delaymsm.errors import DataError
from delaymsm.states import CENSORED, TimeSlot, Zone, default_three_state

DAY = datetime.date(2023, 9, 4)


def traj(delays, zones=None, interval=4.0, mission="M1"):
    """Trajectory with one stop per delay value on a regular grid."""
    zones = zones or [None] * len(delays)
    stops = tuple(
        ep.TrajectoryStop(
            station=f"ST{i:02d}", arrival_minutes=i * interval, delay=d,
            covariates={"boarded": 10.0 + i}, zone=z,
        )
        for i, (d, z) in enumerate(zip(delays, zones))
    )
    return ep.MissionTrajectory(
        mission=mission, day=DAY, direction=0,
        time_slot=TimeSlot.MORNING_PEAK, stops=stops,
    )


class TestBuildEpisodes:
    def test_single_state_run_is_one_censored_episode(self, space3):
        episodes = ep.build_episodes(traj([0, 1, 2, 3]), space3)
        (e,) = episodes
        assert e.from_state == 0 and e.censored
        assert e.duration == 12.0

    def test_clock_resets_on_transition(self, space3):
        # states: 0 0 1 1 0 -> episodes 0->1 (8 min), 1->0 (8 min), censored 0
        episodes = ep.build_episodes(traj([0, 3, 7, 8, 2]), space3)
        assert [(e.from_state, e.to_state, e.duration) for e in episodes] == [
            (0, 1, 8.0), (1, 0, 8.0),
        ]

    def test_terminal_sojourn_censored(self, space3):
        episodes = ep.build_episodes(traj([0, 7, 7, 7]), space3)
        assert episodes[-1].censored
        assert episodes[-1].from_state == 1
        assert episodes[-1].duration == 8.0

    def test_covariates_frozen_at_entry(self, space3):
        episodes = ep.build_episodes(traj([0, 0, 7, 7, 0]), space3)
        # second episode entered at stop index 2
        assert episodes[1].covariates["boarded"] == 12.0

    def test_two_level_jump_allowed_when_fully_connected(self, space3):
        episodes = ep.build_episodes(traj([0, 12, 12]), space3)
        assert episodes[0].to_state == 2

    def test_disallowed_jump_warns_but_keeps_episode(self, caplog):
        space = default_three_state(adjacent=True)
        with caplog.at_level("WARNING"):
            episodes = ep.build_episodes(traj([0, 12, 12]), space)
        assert "disallowed jump" in caplog.text
        assert episodes[0].to_state == 2

    def test_boundary_delay_is_lower_state(self, space3):
        # delay exactly 5 stays On Time: no transition
        (e,) = ep.build_episodes(traj([0, 5, 5]), space3)
        assert e.from_state == 0 and e.censored

    def test_zone_split_censors_at_boundary(self, space3):
        zones = [Zone.Z1, Zone.Z1, Zone.Z2, Zone.Z2]
        episodes = ep.build_episodes(traj([0, 0, 0, 0], zones=zones), space3,
                                     split_zones=True)
        assert len(episodes) == 2
        assert episodes[0].censored and episodes[0].stratum.zone == Zone.Z1
        assert episodes[0].duration == 8.0
        assert episodes[1].censored and episodes[1].stratum.zone == Zone.Z2
        assert episodes[1].duration == 4.0

    def test_without_split_zone_field_empty(self, space3):
        zones = [Zone.Z1, Zone.Z2]
        (e,) = ep.build_episodes(traj([0, 0], zones=zones), space3)
        assert e.stratum.zone is None

    def test_zero_duration_sojourn_not_emitted(self, space3):
        # two stops at the same instant with a state flip in between
        stops = (
            ep.TrajectoryStop("A", 0.0, 0.0, {}, None),
            ep.TrajectoryStop("B", 0.0, 7.0, {}, None),
            ep.TrajectoryStop("C", 4.0, 7.0, {}, None),
        )
        t = ep.MissionTrajectory("M1", DAY, 0, None, stops)
        episodes = ep.build_episodes(t, space3)
        assert all(e.duration > 0 for e in episodes)


class TestTrajectoryValidation:
    def test_needs_two_stops(self):
        with pytest.raises(DataError):
            ep.MissionTrajectory("M1", DAY, 0, None,
                                 (ep.TrajectoryStop("A", 0.0, 0.0, {}, None),))

    def test_out_of_order_rejected(self):
        stops = (
            ep.TrajectoryStop("A", 4.0, 0.0, {}, None),
            ep.TrajectoryStop("B", 0.0, 0.0, {}, None),
        )
        with pytest.raises(DataError, match="out of order"):
            ep.MissionTrajectory("M1", DAY, 0, None, stops)


class TestBuildTrajectories:
    def row(self, station, minute, index, mission="M1", delay=0.0):
        import delaymsm.ingestion as ing
        from delaymsm.states import Stratum, UnitKey
        sched = datetime.datetime(2023, 9, 4, 7, minute)
        return ing.AnalysisRow(
            unit=UnitKey(station, mission, DAY),
            stratum=Stratum(direction=0, time_slot=TimeSlot.MORNING_PEAK),
            progressive_index=index,
            scheduled_arrival=sched,
            actual_arrival=sched + datetime.timedelta(minutes=delay),
            arrival_delay=delay, boarded=1.0, alighted=1.0,
            trains_per_hour=6.0, adverse_weather=0,
        )

    def test_grouping_and_sorting(self):
        rows = [
            self.row("B", 10, 1),
            self.row("A", 0, 0),
            self.row("X", 0, 0, mission="M2"),
            self.row("Y", 8, 1, mission="M2"),
        ]
        trajectories, quarantine = ep.build_trajectories(rows)
        assert quarantine == []
        assert [t.mission for t in trajectories] == ["M1", "M2"]
        assert [s.station for s in trajectories[0].stops] == ["A", "B"]

    def test_duplicate_station_quarantined(self):
        rows = [self.row("A", 0, 0), self.row("A", 10, 1)]
        trajectories, quarantine = ep.build_trajectories(rows)
        assert trajectories == []
        assert quarantine[0].reason == "duplicate station stop"

    def test_single_stop_quarantined(self):
        trajectories, quarantine = ep.build_trajectories([self.row("A", 0, 0)])
        assert trajectories == []
        assert "fewer than 2" in quarantine[0].reason

    def test_negative_elapsed_quarantined(self):
        # second stop arrives before the first despite a later index
        rows = [self.row("A", 10, 0), self.row("B", 0, 1)]
        trajectories, quarantine = ep.build_trajectories(rows)
        assert trajectories == []
        assert "out of order" in quarantine[0].reason


class TestEpisodeRoundTrip:
    def test_write_read(self, tmp_path, space3, hand_episodes):
        path = tmp_path / "episodes.csv"
        ep.write_episodes(hand_episodes, path)
        back = ep.read_episodes(path)
        assert back == hand_episodes

    def test_missing_covariate_round_trips_as_none(self, tmp_path):
        from conftest import make_episode
        episodes = [make_episode(0, 3.0, 1, boarded=None, alighted=4.0)]
        path = tmp_path / "episodes.csv"
        ep.write_episodes(episodes, path)
        (back,) = ep.read_episodes(path)
        assert back.covariates == {"boarded": None, "alighted": 4.0}

    def test_censored_marker(self, tmp_path, hand_episodes):
        path = tmp_path / "episodes.csv"
        ep.write_episodes(hand_episodes, path)
        text = path.read_text()
        assert "censored" in text
