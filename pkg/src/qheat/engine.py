"""Closed-form physics of the three-level engine.

Bath-induced transition rates, stationary populations, steady heat currents,
power, efficiency, and the operability predicate, all as functions of the
controller position x which shifts the levels to e_i + g_i*x.

Sign conventions: J_ij > 0 means the engine absorbs energy from bath ij.
The engine performs work when J12 < 0. Currents are computed from the
factored closed form (a single rate product times a detailed-balance factor),
which stays accurate in the deep-suppression regime where the naive
population-difference route cancels below machine precision; the two routes
are cross-checked against each other at a scale-relative tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .units import KB

# Pairs with |e_j - e_i| below this are treated as exactly degenerate and get
# zero rates; avoids catastrophic cancellation in |w|^3 / (e^{b|w|} - 1).
DEGENERATE_OMEGA = 1e-9

# Relative tolerance for the internal agreement check between the factored
# and definition-based current routes.
ROUTE_AGREEMENT_RTOL = 1e-10


class DegenerateStationaryStateError(ValueError):
    """Raised when the rate graph admits no unique stationary state."""


def _require_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class EngineSpec:
    """Bare levels, controller couplings and the rate prefactor.

    e1..e3 in eV, g1..g3 in eV/nm; gamma0 such that gamma0*|omega|^3 is a
    rate in eV (hbar = 1). Levels need not be ordered and may cross as x
    varies; all formulas assign thermal factors by the energy-decreasing
    direction, not by index order.
    """

    e1: float
    e2: float
    e3: float
    gamma0: float
    g1: float = 0.0
    g2: float = 0.0
    g3: float = 0.0

    def __post_init__(self):
        for name in ("e1", "e2", "e3", "gamma0", "g1", "g2", "g3"):
            _require_finite(name, getattr(self, name))
        if self.gamma0 <= 0:
            raise ValueError(f"gamma0 must be > 0, got {self.gamma0}")

    @property
    def levels(self) -> np.ndarray:
        return np.array([self.e1, self.e2, self.e3])

    @property
    def couplings(self) -> np.ndarray:
        return np.array([self.g1, self.g2, self.g3])

    def energies(self, x):
        """Shifted levels e_i + g_i*x; x may be a scalar or an array."""
        x = np.asarray(x, dtype=float)
        return self.levels + np.multiply.outer(x, self.couplings)

    # gaps relative to level 1 and their coupling counterparts
    @property
    def ehat2(self) -> float:
        return self.e2 - self.e1

    @property
    def ehat3(self) -> float:
        return self.e3 - self.e1

    @property
    def ghat2(self) -> float:
        return self.g2 - self.g1

    @property
    def ghat3(self) -> float:
        return self.g3 - self.g1


@dataclass(frozen=True)
class BathSet:
    """Temperatures of the two thermal baths plus the work-source rate.

    The 1-2 pair is driven by an effectively infinite-temperature bath and is
    modeled by one finite symmetric rate gamma12. With gamma12=None the rate
    defaults to gamma0*|omega12(x)|^3 (the spontaneous prefactor), recomputed
    at each position.
    """

    T13: float
    T23: float
    gamma12: Optional[float] = None

    kB = KB

    def __post_init__(self):
        _require_finite("T13", self.T13)
        _require_finite("T23", self.T23)
        if self.T13 <= 0 or self.T23 <= 0:
            raise ValueError(f"temperatures must be > 0, got T13={self.T13}, T23={self.T23}")
        if self.gamma12 is not None:
            _require_finite("gamma12", self.gamma12)
            if self.gamma12 < 0:
                raise ValueError(f"gamma12 must be >= 0, got {self.gamma12}")

    @property
    def theta(self) -> float:
        return self.T23 / self.T13

    @property
    def beta13(self) -> float:
        return 1.0 / (KB * self.T13)

    @property
    def beta23(self) -> float:
        return 1.0 / (KB * self.T23)


@dataclass(frozen=True)
class RateTable:
    """Directed rates gamma[i, j] = rate of the j -> i transition (0-indexed).

    Diagonal entries are zero. The work-source pair (0, 1) is symmetric.
    """

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (3, 3):
            raise ValueError(f"rate table must be 3x3, got {g.shape}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("rates must be finite and nonnegative")
        object.__setattr__(self, "gamma", g)

    def rate(self, i: int, j: int) -> float:
        """Rate of the j -> i transition, levels numbered 1..3."""
        return float(self.gamma[i - 1, j - 1])


@dataclass(frozen=True)
class SteadyReport:
    """Stationary populations, currents and derived figures at one position."""

    p1: float
    p2: float
    p3: float
    J12: float
    J13: float
    J23: float
    power: float
    eta: Optional[float]
    operable: bool

    @property
    def populations(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])


def pair_rates(gamma0, omega, beta):
    """Directed rates for one thermally driven pair.

    omega is the signed gap e_j - e_i. Returns (rate j->i, rate i->j). The
    energy-decreasing direction carries the stimulated+spontaneous factor
    e^z/(e^z - 1), the increasing one 1/(e^z - 1), z = beta*|omega|; this
    keeps detailed balance intact when levels cross. Gaps below
    DEGENERATE_OMEGA give zero in both directions (the |omega|^3 limit).
    """
    omega = np.asarray(omega, dtype=float)
    a = np.abs(omega)
    degenerate = a < DEGENERATE_OMEGA
    z = beta * np.where(degenerate, 1.0, a)
    denom = -np.expm1(-z)  # 1 - e^{-z}, accurate for small z
    down = np.where(degenerate, 0.0, gamma0 * a**3 / denom)
    up = down * np.exp(-z)
    rate_ij = np.where(omega > 0, down, up)  # j -> i
    rate_ji = np.where(omega > 0, up, down)  # i -> j
    if omega.ndim == 0:
        return float(rate_ij), float(rate_ji)
    return rate_ij, rate_ji


def _work_source_rate(spec: EngineSpec, baths: BathSet, omega12):
    omega12 = np.asarray(omega12, dtype=float)
    if baths.gamma12 is not None:
        return np.broadcast_to(baths.gamma12, omega12.shape).copy()
    a = np.abs(omega12)
    return np.where(a < DEGENERATE_OMEGA, 0.0, spec.gamma0 * a**3)


def rate_matrix(spec: EngineSpec, baths: BathSet, x) -> np.ndarray:
    """Rates gamma[..., i, j] (j -> i) at position(s) x; batched over x."""
    _require_finite("x", np.asarray(x))
    e = spec.energies(x)
    G = np.zeros(e.shape[:-1] + (3, 3))
    g12 = _work_source_rate(spec, baths, e[..., 1] - e[..., 0])
    G[..., 0, 1] = g12
    G[..., 1, 0] = g12
    G[..., 0, 2], G[..., 2, 0] = pair_rates(spec.gamma0, e[..., 2] - e[..., 0], baths.beta13)
    G[..., 1, 2], G[..., 2, 1] = pair_rates(spec.gamma0, e[..., 2] - e[..., 1], baths.beta23)
    return G


def transition_rates(spec: EngineSpec, baths: BathSet, x: float) -> RateTable:
    """All six directed rates at controller position x (nm)."""
    return RateTable(rate_matrix(spec, baths, float(x)))


def _populations(G: np.ndarray) -> np.ndarray:
    """Stationary populations from the rate-product closed form (batched)."""
    p = np.empty(G.shape[:-2] + (3,))
    for i in range(3):
        j, k = [m for m in range(3) if m != i]
        p[..., i] = (
            G[..., i, j] * G[..., i, k]
            + G[..., i, j] * G[..., j, k]
            + G[..., i, k] * G[..., k, j]
        )
    Z = p.sum(axis=-1)
    if np.any(Z <= 0):
        raise DegenerateStationaryStateError(
            "stationary state is not unique (all rate products vanish)"
        )
    return p / Z[..., None]


def stationary_populations(rates: RateTable) -> np.ndarray:
    """Unique stationary populations (p1, p2, p3) of the rate graph."""
    return _populations(rates.gamma)


def _steady_arrays(spec: EngineSpec, baths: BathSet, xs: np.ndarray) -> dict:
    """Batched stationary solution: populations and both current routes.

    Primary currents come from the factored form J12 = ehat2*jflux with
    jflux = gamma12*gamma(1<-3)*gamma(3<-2)/Z * (1 - e^u); near u = 0 the
    expm1 evaluation avoids cancellation, far from it the equivalent
    difference of rate products avoids overflow. The definition route
    [gamma*p - gamma*p]*(e_i - e_j) is recomputed from the populations and
    must agree within ROUTE_AGREEMENT_RTOL of the natural current scale.

    Grid points where every spanning rate product underflows (e.g. a level
    crossing freezes all transitions) carry the "degenerate" mask: their
    populations and efficiency are NaN, their currents exactly zero.
    """
    xs = np.asarray(xs, dtype=float)
    _require_finite("x", xs)
    e = spec.energies(xs)
    G = rate_matrix(spec, baths, xs)

    prod = np.empty(e.shape[:-1] + (3,))
    for i in range(3):
        j, k = [m for m in range(3) if m != i]
        prod[..., i] = (
            G[..., i, j] * G[..., i, k]
            + G[..., i, j] * G[..., j, k]
            + G[..., i, k] * G[..., k, j]
        )
    Z = prod.sum(axis=-1)
    dead = Z <= 0.0
    Zsafe = np.where(dead, 1.0, Z)
    p = prod / Zsafe[..., None]
    p = np.where(dead[..., None], np.nan, p)

    eh2 = e[..., 1] - e[..., 0]
    eh3 = e[..., 2] - e[..., 0]
    u = (baths.beta23 - baths.beta13) * eh3 - baths.beta23 * eh2

    # factored route, cancellation-safe branch selection
    with np.errstate(over="ignore"):
        factor = -np.expm1(np.clip(u, -745.0, 50.0))
    near = np.abs(u) <= 50.0
    jflux_near = G[..., 0, 1] * G[..., 0, 2] * G[..., 2, 1] / Zsafe * factor
    jflux_far = G[..., 0, 1] * (
        G[..., 0, 2] * G[..., 2, 1] - G[..., 1, 2] * G[..., 2, 0]
    ) / Zsafe
    jflux = np.where(dead, 0.0, np.where(near, jflux_near, jflux_far))

    J12 = eh2 * jflux
    J13 = -eh3 * jflux
    J23 = (eh3 - eh2) * jflux

    # definition route from the populations
    def j_def(i, j):
        jd = (G[..., i, j] * p[..., j] - G[..., j, i] * p[..., i]) * (e[..., i] - e[..., j])
        return np.where(dead, 0.0, jd)

    J12_def, J13_def, J23_def = j_def(0, 1), j_def(0, 2), j_def(1, 2)

    omega_max = np.max(np.abs(e[..., :, None] - e[..., None, :]), axis=(-2, -1))
    scale = np.maximum.reduce(
        [np.abs(J12), np.abs(J13), np.abs(J23), spec.gamma0 * omega_max**4]
    )
    scale = np.maximum(scale, np.finfo(float).tiny)
    err = np.maximum.reduce(
        [np.abs(J12 - J12_def), np.abs(J13 - J13_def), np.abs(J23 - J23_def)]
    )
    if np.any(err > ROUTE_AGREEMENT_RTOL * scale):
        worst = np.argmax(err / scale)
        raise RuntimeError(
            "factored and definition-based currents disagree: "
            f"max relative deviation {np.max(err / scale):.3e} at x={xs.reshape(-1)[worst]!r}"
        )

    with np.errstate(invalid="ignore", divide="ignore"):
        heat_in = np.maximum(J23, J13)
        eta = np.where((J12 < 0) & (heat_in > 0), -J12 / np.where(heat_in > 0, heat_in, 1.0), np.nan)

    return {
        "x": xs,
        "energies": e,
        "rates": G,
        "populations": p,
        "J12": J12,
        "J13": J13,
        "J23": J23,
        "jflux": jflux,
        "eta": eta,
        "operable": J12 < 0,
        "degenerate": dead,
    }


def steady_current_grid(spec: EngineSpec, baths: BathSet, xs) -> dict:
    """Vectorized steady-state solve over an array of positions."""
    return _steady_arrays(spec, baths, np.asarray(xs, dtype=float))


def steady_currents(spec: EngineSpec, baths: BathSet, x: float) -> SteadyReport:
    """Stationary populations, currents, power and efficiency at position x."""
    res = _steady_arrays(spec, baths, np.asarray(float(x)))
    if res["degenerate"]:
        raise DegenerateStationaryStateError(
            f"stationary state is not unique at x={float(x)!r} "
            "(all rate products vanish)"
        )
    p = res["populations"]
    eta = float(res["eta"])
    return SteadyReport(
        p1=float(p[0]),
        p2=float(p[1]),
        p3=float(p[2]),
        J12=float(res["J12"]),
        J13=float(res["J13"]),
        J23=float(res["J23"]),
        power=float(res["J12"]),
        eta=None if math.isnan(eta) else eta,
        operable=bool(res["operable"]),
    )


def efficiency(J12: float, J13: float, J23: float) -> Optional[float]:
    """-J12 / max(J23, J13); None when the engine is not delivering work."""
    heat_in = max(J23, J13)
    if J12 >= 0 or heat_in <= 0:
        return None
    return -J12 / heat_in


def carnot_efficiency(theta: float) -> float:
    """1 - min(theta, 1/theta); valid whichever bath is the hot one."""
    return 1.0 - min(theta, 1.0 / theta)


def adaptability(spec: EngineSpec, baths: BathSet, x: float) -> bool:
    """Whether the engine delivers work at position x.

    Evaluates -ehat2(x)*[(1-theta)*ehat3(x) - ehat2(x)] < 0, which carries
    the sign of J12(x) whenever no transition rate vanishes identically.
    """
    _require_finite("x", x)
    e = spec.energies(float(x))
    eh2 = e[1] - e[0]
    eh3 = e[2] - e[0]
    return bool(-eh2 * ((1.0 - baths.theta) * eh3 - eh2) < 0.0)
