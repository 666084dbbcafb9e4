"""Closed-loop adaptation: measure temperatures, retune the controller force.

Each step measures the bath temperatures (optionally through noisy
thermometers), diagnoses operability, computes the maximum-power position
x_opt, and when the density peak x_peak = -force/kappa is off target applies
the unique force -kappa*x_opt that moves the peak there. Failure to operate
is a status, never an exception, and freezes the force.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .controller import (
    ControllerSpec,
    NotOperableError,
    QuadraticForm,
    most_probable_position,
    operability_form,
    optimal_position,
)
from .engine import BathSet, EngineSpec, steady_currents

STATUS_ALREADY_OPTIMAL = "already-optimal"
STATUS_RETUNED = "retuned"
STATUS_NOT_OPERABLE = "not-operable"

POSITION_TOL = 1e-6      # nm; peak-vs-target comparison
RETRIGGER_TOL = 1e-3     # in theta; smaller drifts do not re-run the optimizer
MIN_TEMPERATURE = 1e-6   # K; measurement clamp floor


@dataclass(frozen=True)
class TemperatureSchedule:
    """Ordered (time, T13, T23) setpoints with optional thermometer noise."""

    times: Tuple[float, ...]
    T13: Tuple[float, ...]
    T23: Tuple[float, ...]
    sigma_T: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("times", "T13", "T23"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        n = len(self.times)
        if n == 0 or len(self.T13) != n or len(self.T23) != n:
            raise ValueError("schedule needs equal-length, nonempty time/T13/T23 lists")
        if any(not np.isfinite(v) for v in self.times):
            raise ValueError("schedule times must be finite")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule times must be strictly increasing")
        if any(t <= 0 or not np.isfinite(t) for t in self.T13 + self.T23):
            raise ValueError("schedule temperatures must be positive and finite")
        if self.sigma_T < 0:
            raise ValueError(f"sigma_T must be >= 0, got {self.sigma_T}")

    def __len__(self):
        return len(self.times)


def measure(
    T13_true: float,
    T23_true: float,
    sigma_T: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """Thermometer readout: truth plus independent Gaussian noise, clamped > 0."""
    if T13_true <= 0 or T23_true <= 0:
        raise ValueError("true temperatures must be > 0")
    if sigma_T == 0.0:
        return float(T13_true), float(T23_true)
    if rng is None:
        rng = np.random.default_rng()
    noise = rng.normal(0.0, sigma_T, size=2)
    return (
        max(float(T13_true + noise[0]), MIN_TEMPERATURE),
        max(float(T23_true + noise[1]), MIN_TEMPERATURE),
    )


def _form_summary(form: QuadraticForm) -> dict:
    return {
        "a": form.a,
        "b": form.b,
        "c": form.c,
        "discriminant": form.discriminant,
        "kind": form.kind,
        "root_lo": form.root_lo,
        "root_hi": form.root_hi,
    }


@dataclass(frozen=True)
class AdaptationRecord:
    """Everything one adaptation step measured, decided and applied."""

    step: int
    time: float
    T13_measured: float
    T23_measured: float
    theta: float
    x_peak_before: float
    form: dict
    status: str
    x_opt: Optional[float]
    force: float
    power_before: Optional[float]
    power_after: Optional[float]
    eta_after: Optional[float]
    T13_true: Optional[float] = None
    T23_true: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "time": self.time,
            "T13_measured": self.T13_measured,
            "T23_measured": self.T23_measured,
            "theta": self.theta,
            "x_peak_before": self.x_peak_before,
            "form": self.form,
            "status": self.status,
            "x_opt": self.x_opt,
            "force": self.force,
            "power_before": self.power_before,
            "power_after": self.power_after,
            "eta_after": self.eta_after,
            "T13_true": self.T13_true,
            "T23_true": self.T23_true,
        }


def _power_at(spec: EngineSpec, baths: BathSet, x: float):
    """(J12, eta) at position x; (None, None) if the solve degenerates."""
    try:
        rep = steady_currents(spec, baths, x)
    except Exception:
        return None, None
    return rep.power, rep.eta


def adapt_step(
    spec: EngineSpec,
    ctrl: ControllerSpec,
    T13_measured: float,
    T23_measured: float,
    gamma12: Optional[float] = None,
    pos_tol: float = POSITION_TOL,
    step: int = 0,
    time: float = 0.0,
) -> AdaptationRecord:
    """One pass of the adaptation loop at given measured temperatures.

    The applied force in the returned record is the force to run with after
    this step: unchanged for already-optimal and not-operable outcomes,
    -kappa*x_opt when retuned.
    """
    baths = BathSet(T13=T13_measured, T23=T23_measured, gamma12=gamma12)
    x_peak = most_probable_position(ctrl)
    form = operability_form(spec, baths)
    power_before, _ = _power_at(spec, baths, x_peak)

    common = dict(
        step=step,
        time=time,
        T13_measured=T13_measured,
        T23_measured=T23_measured,
        theta=baths.theta,
        x_peak_before=x_peak,
        form=_form_summary(form),
    )
    try:
        x_opt, power_opt = optimal_position(spec, baths)
    except NotOperableError:
        return AdaptationRecord(
            status=STATUS_NOT_OPERABLE,
            x_opt=None,
            force=ctrl.force,
            power_before=power_before,
            power_after=None,
            eta_after=None,
            **common,
        )

    if abs(x_peak - x_opt) <= pos_tol:
        power_after, eta_after = _power_at(spec, baths, x_peak)
        return AdaptationRecord(
            status=STATUS_ALREADY_OPTIMAL,
            x_opt=x_opt,
            force=ctrl.force,
            power_before=power_before,
            power_after=power_after,
            eta_after=eta_after,
            **common,
        )

    new_force = -ctrl.kappa * x_opt
    new_peak = -new_force / ctrl.kappa
    power_after, eta_after = _power_at(spec, baths, new_peak)
    return AdaptationRecord(
        status=STATUS_RETUNED,
        x_opt=x_opt,
        force=new_force,
        power_before=power_before,
        power_after=power_after,
        eta_after=eta_after,
        **common,
    )


def run_schedule(
    spec: EngineSpec,
    ctrl: ControllerSpec,
    schedule: TemperatureSchedule,
    gamma12: Optional[float] = None,
    pos_tol: float = POSITION_TOL,
    retrigger_tol: float = RETRIGGER_TOL,
) -> List[AdaptationRecord]:
    """Run the adaptation loop over a temperature drift scenario.

    The optimizer re-runs only when theta has moved by more than
    retrigger_tol since the last acted-on measurement or when the previous
    step found the engine inoperable; in between, steps are logged as
    already-optimal at the held force.
    """
    rng = np.random.default_rng(schedule.seed)
    records: List[AdaptationRecord] = []
    theta_ref: Optional[float] = None
    held_x_opt: Optional[float] = None

    for k in range(len(schedule)):
        t13, t23 = measure(schedule.T13[k], schedule.T23[k], schedule.sigma_T, rng)
        theta = t23 / t13
        prev_status = records[-1].status if records else None
        trigger = (
            theta_ref is None
            or abs(theta - theta_ref) > retrigger_tol
            or prev_status == STATUS_NOT_OPERABLE
        )
        if trigger:
            rec = adapt_step(
                spec, ctrl, t13, t23,
                gamma12=gamma12, pos_tol=pos_tol,
                step=k, time=schedule.times[k],
            )
            theta_ref = theta
            if rec.status != STATUS_NOT_OPERABLE:
                held_x_opt = rec.x_opt
            ctrl = replace(ctrl, force=rec.force)
        else:
            baths = BathSet(T13=t13, T23=t23, gamma12=gamma12)
            x_peak = most_probable_position(ctrl)
            power, eta = _power_at(spec, baths, x_peak)
            rec = AdaptationRecord(
                step=k,
                time=schedule.times[k],
                T13_measured=t13,
                T23_measured=t23,
                theta=theta,
                x_peak_before=x_peak,
                form=_form_summary(operability_form(spec, baths)),
                status=STATUS_ALREADY_OPTIMAL,
                x_opt=held_x_opt,
                force=ctrl.force,
                power_before=power,
                power_after=power,
                eta_after=eta,
            )
        rec = replace(rec, T13_true=schedule.T13[k], T23_true=schedule.T23[k])
        records.append(rec)
    return records
