"""Shared fixtures and episode factories for the test suite."""

import datetime

import pytest

from delaymsm.states import (
    CENSORED, Episode, Stratum, UnitKey, default_three_state,
)

DAY = datetime.date(2023, 9, 4)


def make_episode(from_state, duration, to_state, mission="M0", station="ST00",
                 direction=0, **covariates):
    """Terse episode factory used throughout the suite."""
    return Episode(
        unit=UnitKey(station, mission, DAY),
        stratum=Stratum(direction=direction),
        from_state=from_state,
        duration=float(duration),
        to_state=to_state,
        covariates=covariates,
    )


@pytest.fixture
def space3():
    return default_three_state()


@pytest.fixture
def hand_episodes():
    """12-episode fixture with ties and censoring; small enough to hand-check.

    State 0 sojourns: durations 2, 3, 3, 5(censored), 7, 9(censored)
    State 1 sojourns: durations 1, 4, 4, 6(censored)
    State 2 sojourns: durations 2, 8(censored)
    """
    return [
        make_episode(0, 2, 1, mission="M00"),
        make_episode(0, 3, 1, mission="M01"),
        make_episode(0, 3, 2, mission="M02"),
        make_episode(0, 5, CENSORED, mission="M03"),
        make_episode(0, 7, 2, mission="M04"),
        make_episode(0, 9, CENSORED, mission="M05"),
        make_episode(1, 1, 0, mission="M06"),
        make_episode(1, 4, 2, mission="M07"),
        make_episode(1, 4, 0, mission="M08"),
        make_episode(1, 6, CENSORED, mission="M09"),
        make_episode(2, 2, 1, mission="M10"),
        make_episode(2, 8, CENSORED, mission="M11"),
    ]
