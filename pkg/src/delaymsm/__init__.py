"""Continuous-time multi-state modeling of rail delay trajectories.

Panel-observed stop-level delays are converted into clock-reset episodes,
estimated nonparametrically (cumulative hazards, transition probabilities,
expected length of stay) and semi-parametrically (per-transition Cox
proportional hazards with Breslow baselines), with a semi-Markov simulator
for validation.
"""

from .errors import (
    CollinearityError,
    ConfigError,
    DataError,
    DelayMsmError,
    EstimationError,
    SeparationError,
)
from .states import (
    CENSORED,
    CoxFit,
    CumulativeHazard,
    Episode,
    StateSpace,
    Stratum,
    TimeSlot,
    TransitionMatrix,
    UnitKey,
    Zone,
    classify_state,
    default_four_state,
    default_three_state,
)

__all__ = [
    "CENSORED",
    "CollinearityError",
    "ConfigError",
    "CoxFit",
    "CumulativeHazard",
    "DataError",
    "DelayMsmError",
    "Episode",
    "EstimationError",
    "SeparationError",
    "StateSpace",
    "Stratum",
    "TimeSlot",
    "TransitionMatrix",
    "UnitKey",
    "Zone",
    "classify_state",
    "default_four_state",
    "default_three_state",
]

__version__ = "0.1.0"
