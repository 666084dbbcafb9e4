"""Adaptive three-level quantum heat engine toolkit."""

from .engine import (
    BathSet,
    DegenerateStationaryStateError,
    EngineSpec,
    RateTable,
    SteadyReport,
    adaptability,
    carnot_efficiency,
    efficiency,
    stationary_populations,
    steady_currents,
    transition_rates,
)
from .controller import (
    ControllerSpec,
    LandscapeSample,
    NotOperableError,
    QuadraticForm,
    landscape,
    most_probable_position,
    operability_form,
    optimal_position,
    stationary_density,
)
from .dynamics import IntegratorFailureError, Trajectory, evolve, lindblad_rhs
from .learner import (
    AdaptationRecord,
    TemperatureSchedule,
    adapt_step,
    measure,
    run_schedule,
)
from .joint import (
    ConvergenceTimeoutError,
    JointSpec,
    JointSteadyState,
    TruncationError,
    build_joint_generator,
    joint_steady_state,
)
from .units import KB

__version__ = "0.1.0"

__all__ = [
    "AdaptationRecord",
    "BathSet",
    "ControllerSpec",
    "ConvergenceTimeoutError",
    "DegenerateStationaryStateError",
    "EngineSpec",
    "IntegratorFailureError",
    "JointSpec",
    "JointSteadyState",
    "KB",
    "LandscapeSample",
    "NotOperableError",
    "QuadraticForm",
    "RateTable",
    "SteadyReport",
    "TemperatureSchedule",
    "Trajectory",
    "TruncationError",
    "adaptability",
    "adapt_step",
    "build_joint_generator",
    "carnot_efficiency",
    "efficiency",
    "evolve",
    "joint_steady_state",
    "landscape",
    "lindblad_rhs",
    "measure",
    "most_probable_position",
    "operability_form",
    "optimal_position",
    "run_schedule",
    "stationary_density",
    "stationary_populations",
    "steady_currents",
    "transition_rates",
]
