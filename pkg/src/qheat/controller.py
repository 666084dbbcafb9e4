"""Brownian controller statistics and the conditional power landscape.

The controller is an overdamped-harmonic charged particle whose stationary
position density is Gaussian with variance kB*T/kappa, shifted to -E/kappa by
an applied force E. Its position x tunes the engine levels, so operability
becomes the sign of a quadratic y(x) = a x^2 + b x + c whose nonnegative
discriminant guarantees an operating window whenever theta != 1 and the
coupling/gap pairs are not proportional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .engine import BathSet, EngineSpec, steady_current_grid
from .units import KB

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0

# coarse bracketing grid used before golden-section refinement
COARSE_POINTS = 1024


class NotOperableError(RuntimeError):
    """Engine cannot deliver work anywhere; carries the quadratic diagnosis."""

    def __init__(self, message: str, form: "QuadraticForm"):
        super().__init__(message)
        self.form = form


@dataclass(frozen=True)
class ControllerSpec:
    """Brownian controller parameters in internal units.

    mass in hbar^2/(eV nm^2) (see units.mass_from_grams), kappa in eV/nm^2,
    xi as a rate in eV (enters relaxation dynamics only, never the stationary
    statistics), temperature in K, force in eV/nm (the effective charge*field
    product).
    """

    mass: float
    kappa: float
    xi: float
    temperature: float
    force: float = 0.0

    def __post_init__(self):
        for name in ("mass", "kappa", "xi", "temperature", "force"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.mass <= 0 or self.kappa <= 0 or self.temperature <= 0:
            raise ValueError("mass, kappa and temperature must be > 0")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")

    @property
    def thermal_energy(self) -> float:
        return KB * self.temperature

    @property
    def sigma(self) -> float:
        """Stationary position standard deviation sqrt(kB*T/kappa) in nm."""
        return math.sqrt(self.thermal_energy / self.kappa)

    @property
    def mean(self) -> float:
        """Stationary mean position -force/kappa in nm."""
        return -self.force / self.kappa


def stationary_density(ctrl: ControllerSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Stationary position density: Gaussian(-E/kappa, kB*T/kappa), in 1/nm."""
    mu = ctrl.mean
    var = ctrl.thermal_energy / ctrl.kappa
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return norm * np.exp(-((x - mu) ** 2) / (2.0 * var))

    return pdf


def most_probable_position(ctrl: ControllerSpec) -> float:
    """Peak of the stationary density: -force/kappa."""
    return ctrl.mean


@dataclass(frozen=True)
class QuadraticForm:
    """Operability quadratic y(x); the engine delivers work iff y(x) < 0.

    kind is "generic" (a != 0), "linear" (a = 0, b != 0) or "constant".
    root_lo/root_hi are set for generic forms with real roots and for the
    single root of the linear case (stored in root_lo).
    """

    a: float
    b: float
    c: float
    theta: float
    discriminant: float
    kind: str
    root_lo: Optional[float] = None
    root_hi: Optional[float] = None

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a * x + self.b) * x + self.c

    def operating_intervals(self) -> List[Tuple[float, float]]:
        """Open intervals where y(x) < 0; may be unbounded."""
        inf = math.inf
        if self.kind == "constant":
            return [(-inf, inf)] if self.c < 0 else []
        if self.kind == "linear":
            x0 = self.root_lo
            return [(-inf, x0)] if self.b > 0 else [(x0, inf)]
        if self.root_lo is None:
            # no real roots: sign of y is the sign of a everywhere
            return [(-inf, inf)] if self.a < 0 else []
        if self.root_lo == self.root_hi:
            if self.a < 0:
                return [(-inf, self.root_lo), (self.root_lo, inf)]
            return []
        if self.a > 0:
            return [(self.root_lo, self.root_hi)]
        return [(-inf, self.root_lo), (self.root_hi, inf)]

    @property
    def operable_somewhere(self) -> bool:
        return bool(self.operating_intervals())


def operability_form(spec: EngineSpec, baths: BathSet) -> QuadraticForm:
    """Coefficients, discriminant and roots of the operability quadratic.

    The discriminant is evaluated through its closed-form square, which is
    exactly zero for equal temperatures or proportional gap/coupling pairs
    where the polynomial b^2 - 4ac would leave rounding residue (and with it
    a spurious sliver of operating window); the polynomial value is kept as
    a cross-check.
    """
    theta = baths.theta
    eh2, eh3 = spec.ehat2, spec.ehat3
    gh2, gh3 = spec.ghat2, spec.ghat3
    a = (theta - 1.0) * gh2 * gh3 + gh2 * gh2
    b = (theta - 1.0) * (eh2 * gh3 + gh2 * eh3) + 2.0 * gh2 * eh2
    c = (theta - 1.0) * eh3 * eh2 + eh2 * eh2

    # proportional gap/coupling pairs make this factor exactly zero; treat
    # values inside its own rounding noise as zero, otherwise the residue
    # fabricates a femtometre-wide "window" at the triple level crossing
    cross = eh2 * gh3 - gh2 * eh3
    noise = 4.0 * np.finfo(float).eps * (abs(eh2 * gh3) + abs(gh2 * eh3))
    if abs(cross) <= noise:
        cross = 0.0
    disc = ((1.0 - theta) * cross) ** 2
    poly = b * b - 4.0 * a * c
    if abs(poly - disc) > 1e-9 * max(1.0, b * b):
        raise RuntimeError(
            f"discriminant identity violated: b^2-4ac={poly!r} vs {disc!r}"
        )

    root_lo = root_hi = None
    if a == 0.0 and b == 0.0:
        kind = "constant"
    elif a == 0.0:
        kind = "linear"
        root_lo = -c / b
    else:
        kind = "generic"
        if disc == 0.0:
            root_lo = root_hi = -b / (2.0 * a)
        else:
            # cancellation-free quadratic roots
            q = -0.5 * (b + math.copysign(math.sqrt(disc), b if b != 0 else 1.0))
            r1, r2 = q / a, c / q
            root_lo, root_hi = min(r1, r2), max(r1, r2)
    return QuadraticForm(a, b, c, theta, disc, kind, root_lo, root_hi)


@dataclass(frozen=True)
class LandscapeSample:
    """Conditional currents, efficiency, operability and density at one x."""

    x: float
    J12: float
    J13: float
    J23: float
    eta: Optional[float]
    operable: bool
    pC: float


def landscape(
    spec: EngineSpec,
    baths: BathSet,
    ctrl: ControllerSpec,
    x_range: Tuple[float, float],
    n_points: int,
) -> List[LandscapeSample]:
    """Uniform grid of conditional steady-state samples over x_range."""
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    lo, hi = float(x_range[0]), float(x_range[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError(f"invalid x_range {x_range!r}")
    xs = np.linspace(lo, hi, n_points)
    res = steady_current_grid(spec, baths, xs)
    dens = stationary_density(ctrl)(xs)
    out = []
    for k in range(n_points):
        eta = float(res["eta"][k])
        out.append(
            LandscapeSample(
                x=float(xs[k]),
                J12=float(res["J12"][k]),
                J13=float(res["J13"][k]),
                J23=float(res["J23"][k]),
                eta=None if math.isnan(eta) else eta,
                operable=bool(res["operable"][k]),
                pC=float(dens[k]),
            )
        )
    return out


def _golden_min(f: Callable[[float], float], lo: float, hi: float, xtol: float) -> float:
    """Golden-section minimum of a unimodal f on [lo, hi] to width xtol."""
    h = hi - lo
    if h <= xtol:
        return 0.5 * (lo + hi)
    n = int(math.ceil(math.log(xtol / h) / math.log(INV_PHI)))
    c = lo + INV_PHI2 * h
    d = lo + INV_PHI * h
    yc, yd = f(c), f(d)
    for _ in range(n):
        if yc < yd:
            hi, d, yd = d, c, yc
            h = INV_PHI * h
            c = lo + INV_PHI2 * h
            yc = f(c)
        else:
            lo, c, yc = c, d, yd
            h = INV_PHI * h
            d = lo + INV_PHI * h
            yd = f(d)
    return 0.5 * (lo + hi)


def _finite_bracket(
    spec: EngineSpec,
    baths: BathSet,
    interval: Tuple[float, float],
) -> Tuple[float, float]:
    """Shrink an unbounded operating interval to a finite search bracket.

    |J12| decays to zero far from the roots (up-rates are exponentially
    suppressed at large gaps), so the window is widened until the currents at
    its open ends are negligible against the best value seen inside.
    """
    lo, hi = interval
    if math.isfinite(lo) and math.isfinite(hi):
        return lo, hi
    span = 1.0
    for _ in range(80):
        flo = lo if math.isfinite(lo) else (hi if math.isfinite(hi) else 0.0) - span
        fhi = hi if math.isfinite(hi) else (lo if math.isfinite(lo) else 0.0) + span
        xs = np.linspace(flo, fhi, COARSE_POINTS)
        absJ = np.abs(steady_current_grid(spec, baths, xs)["J12"])
        peak = float(absJ.max())
        open_ends = [absJ[0]] if not math.isfinite(lo) else []
        if not math.isfinite(hi):
            open_ends.append(absJ[-1])
        if peak > 0 and all(v <= 1e-9 * peak for v in open_ends):
            return flo, fhi
        span *= 2.0
    raise RuntimeError(f"could not bracket the power maximum on {interval!r}")


def optimal_position(
    spec: EngineSpec,
    baths: BathSet,
    xtol: float = 1e-6,
) -> Tuple[float, float]:
    """Position maximizing extracted power |J12| over the operating region.

    Returns (x_opt, J12 at x_opt); J12 there is negative. A coarse scan over
    each operating interval brackets the best cell, then golden-section
    refines it to xtol (nm). Raises NotOperableError when y(x) < 0 nowhere.
    """
    form = operability_form(spec, baths)
    intervals = form.operating_intervals()
    if not intervals:
        raise NotOperableError(
            f"no operating region: theta={form.theta:g}, y(x) >= 0 everywhere",
            form,
        )

    def power(x: float) -> float:  # minimized: J12 < 0 in operating region
        return float(steady_current_grid(spec, baths, np.asarray([x]))["J12"][0])

    best_x = None
    best_j = 0.0
    for interval in intervals:
        lo, hi = _finite_bracket(spec, baths, interval)
        # stay strictly inside: J12 = 0 at the root endpoints
        pad = max((hi - lo) * 1e-12, 1e-300)
        xs = np.linspace(lo + pad, hi - pad, COARSE_POINTS)
        J = steady_current_grid(spec, baths, xs)["J12"]
        k = int(np.argmin(J))
        blo = xs[max(k - 1, 0)]
        bhi = xs[min(k + 1, len(xs) - 1)]
        x_opt = _golden_min(power, float(blo), float(bhi), xtol)
        j_opt = power(x_opt)
        if j_opt < best_j:
            best_x, best_j = x_opt, j_opt
    if best_x is None:
        raise NotOperableError(
            "operating region carries no extractable power (rates vanish there)",
            form,
        )
    return best_x, best_j
