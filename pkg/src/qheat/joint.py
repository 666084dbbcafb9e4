"""Joint engine-controller master equation on a truncated oscillator basis.

Numerical oracle for the coupled dynamics: engine dissipators at the bare
(x = 0) rates, level-coupling term sum_i g_i |i><i| (x) scaled by an optional
weak-coupling factor, applied-force potential E*x, and the Caldeira-Leggett
friction/diffusion terms. Validates the controller's Gaussian stationary
marginal and the conditional-current landscape against the closed forms.

The joint state is stored as engine blocks rho[i, k] of N x N oscillator
matrices. Engine-off-diagonal blocks evolve autonomously, so states that
start block-diagonal stay exactly block-diagonal; the integrator exploits
that with a reduced update over the three diagonal blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .controller import ControllerSpec
from .engine import (
    BathSet,
    EngineSpec,
    RateTable,
    rate_matrix,
    stationary_populations,
    steady_current_grid,
)
from .units import KB

OCCUPANCY_TAIL_LIMIT = 1e-6   # thermal weight allowed above the truncation
MARGINAL_CUTOFF = 1e-8        # 1/nm; conditional states below this stay unset
CONVERGENCE_WINDOW = 100      # steps between stationarity checks


class TruncationError(ValueError):
    """Fock truncation too small for the requested thermal occupancy."""


class ConvergenceTimeoutError(RuntimeError):
    """Joint integration hit t_max before the stationarity criterion."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class JointSpec:
    """Truncation size, coupling scale and conditioning grid."""

    fock_dim: int
    coupling_scale: float = 1.0
    x_min: float = -10.0
    x_max: float = 10.0
    n_points: int = 201

    def __post_init__(self):
        if self.fock_dim < 8:
            raise ValueError(f"fock_dim must be >= 8, got {self.fock_dim}")
        if not 0.0 <= self.coupling_scale <= 1.0:
            raise ValueError(f"coupling_scale must be in [0, 1], got {self.coupling_scale}")
        if self.n_points < 2 or not self.x_max > self.x_min:
            raise ValueError("conditioning grid needs n_points >= 2 and x_max > x_min")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)


def ladder_operators(n: int):
    """Annihilation operator in the n-dimensional number basis."""
    return np.diag(np.sqrt(np.arange(1, n)), k=1).astype(complex)


def thermal_occupancy(omega: float, temperature: float) -> float:
    """Mean occupation 1/(e^{omega/kT} - 1) of the oscillator mode."""
    z = omega / (KB * temperature)
    return 1.0 / math.expm1(z) if z < 700 else 0.0


def thermal_state(n: int, nbar: float) -> np.ndarray:
    """Truncated thermal oscillator state, renormalized to unit trace."""
    if nbar <= 0:
        rho = np.zeros((n, n), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    w = (nbar / (nbar + 1.0)) ** np.arange(n)
    return np.diag(w / w.sum()).astype(complex)


class JointGenerator:
    """Precomputed action rho -> drho/dt of the joint master equation."""

    def __init__(self, spec: EngineSpec, baths: BathSet, ctrl: ControllerSpec, joint: JointSpec):
        n = joint.fock_dim
        omega = math.sqrt(ctrl.kappa / ctrl.mass)
        nbar = thermal_occupancy(omega, ctrl.temperature)
        tail = (nbar / (nbar + 1.0)) ** n if nbar > 0 else 0.0
        if tail > OCCUPANCY_TAIL_LIMIT:
            raise TruncationError(
                f"thermal occupancy tail {tail:.2e} above level {n} exceeds "
                f"{OCCUPANCY_TAIL_LIMIT:g}; raise fock_dim (nbar={nbar:.2f})"
            )
        sigma = ctrl.sigma
        mean = ctrl.mean
        if joint.x_min > mean - 6.0 * sigma or joint.x_max < mean + 6.0 * sigma:
            raise ValueError(
                "conditioning grid must span at least 6 thermal standard deviations "
                f"around the density mean {mean:g} (sigma={sigma:g} nm)"
            )

        a = ladder_operators(n)
        x0 = 1.0 / math.sqrt(2.0 * ctrl.mass * omega)
        p0 = math.sqrt(ctrl.mass * omega / 2.0)
        self.x_op = x0 * (a + a.conj().T)
        self.p_op = 1j * p0 * (a.conj().T - a)
        self.h_osc = self.p_op @ self.p_op / (2.0 * ctrl.mass) + 0.5 * ctrl.kappa * (
            self.x_op @ self.x_op
        )

        scaled = joint.coupling_scale * spec.couplings
        self.h_blocks = np.array(
            [
                spec.levels[i] * np.eye(n)
                + self.h_osc
                + (scaled[i] + ctrl.force) * self.x_op
                for i in range(3)
            ]
        )

        # engine dissipators at the bare energies; position dependence enters
        # only through the Hamiltonian coupling
        self.rates = rate_matrix(spec, baths, 0.0)
        self.decay = self.rates.sum(axis=0)
        self.pop_matrix = self.rates - np.diag(self.decay)

        self.friction = ctrl.xi
        self.diffusion = 2.0 * ctrl.mass * ctrl.xi * KB * ctrl.temperature
        self._xx = self.x_op @ self.x_op

        self.spec = spec
        self.baths = baths
        self.ctrl = ctrl
        self.joint = joint
        self.n = n
        self.omega = omega
        self.nbar = nbar
        self.tail_mass = tail

    # -- building blocks -------------------------------------------------

    def _cl(self, blocks: np.ndarray) -> np.ndarray:
        """Caldeira-Leggett action on a stack of oscillator matrices."""
        x, p = self.x_op, self.p_op
        out = np.zeros_like(blocks)
        if self.friction != 0.0:
            anti = p @ blocks + blocks @ p
            out -= 1j * self.friction * (x @ anti - anti @ x)
        if self.diffusion != 0.0:
            out -= self.diffusion * (
                self._xx @ blocks - 2.0 * (x @ blocks @ x) + blocks @ self._xx
            )
        return out

    def rhs_diag(self, blocks: np.ndarray) -> np.ndarray:
        """Generator restricted to the engine-diagonal blocks, shape (3, N, N)."""
        out = -1j * (self.h_blocks @ blocks - blocks @ self.h_blocks)
        out += np.einsum("ij,jmn->imn", self.pop_matrix, blocks)
        out += self._cl(blocks)
        return out

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        """Full generator on the joint state, shape (3, 3, N, N)."""
        out = -1j * (self.h_blocks[:, None] @ rho - rho @ self.h_blocks[None, :])
        out -= 0.5 * (
            self.decay[:, None, None, None] + self.decay[None, :, None, None]
        ) * rho
        gain = np.einsum("ij,jjmn->imn", self.rates, rho)
        idx = np.arange(3)
        out[idx, idx] += gain
        out += self._cl(rho)
        return out

    # -- states and measurements -----------------------------------------

    def initial_state(self, populations=None) -> np.ndarray:
        """Engine-diagonal product state: populations x thermal oscillator.

        Defaults to the bare stationary populations, so integration only has
        to build the system-controller correlations.
        """
        if populations is None:
            populations = stationary_populations(RateTable(self.rates))
        populations = np.asarray(populations, dtype=float)
        osc = thermal_state(self.n, self.nbar)
        rho = np.zeros((3, 3, self.n, self.n), dtype=complex)
        for i in range(3):
            rho[i, i] = populations[i] * osc
        return rho

    def position_basis(self, xs: np.ndarray) -> np.ndarray:
        """Oscillator eigenfunctions psi_n(x) on the grid, shape (len(xs), N).

        Stable normalized recurrence with the Gaussian weight folded in, so
        no overflow occurs for any truncation size.
        """
        xs = np.asarray(xs, dtype=float)
        s0 = math.sqrt(self.ctrl.mass * self.omega)
        u = s0 * xs
        V = np.zeros((len(xs), self.n))
        V[:, 0] = (s0**2 / math.pi) ** 0.25 * np.exp(-0.5 * u * u)
        if self.n > 1:
            V[:, 1] = math.sqrt(2.0) * u * V[:, 0]
        for m in range(1, self.n - 1):
            V[:, m + 1] = math.sqrt(2.0 / (m + 1)) * u * V[:, m] - math.sqrt(
                m / (m + 1.0)
            ) * V[:, m - 1]
        return V


def full_matrix(rho: np.ndarray) -> np.ndarray:
    """Reassemble blocks (3, 3, N, N) into the 3N x 3N joint matrix."""
    n = rho.shape[-1]
    return np.transpose(rho, (0, 2, 1, 3)).reshape(3 * n, 3 * n)


def _as_blocks(rho: np.ndarray, n: int) -> np.ndarray:
    return np.transpose(rho.reshape(3, n, 3, n), (0, 2, 1, 3))


@dataclass
class JointSteadyState:
    """Long-time state of the joint master equation plus derived marginals."""

    rho: np.ndarray            # blocks (3, 3, N, N)
    grid: np.ndarray           # conditioning positions (nm)
    marginal: np.ndarray       # controller position density on the grid
    conditional: np.ndarray    # (len(grid), 3, 3); NaN where the marginal is cut off
    negativity: float          # |sum of negative eigenvalues| of the joint state
    converged: bool
    t_final: float
    residual: float

    @property
    def joint_matrix(self) -> np.ndarray:
        return full_matrix(self.rho)

    @property
    def engine_state(self) -> np.ndarray:
        """Reduced engine state Tr_C of the joint state."""
        return np.einsum("ijnn->ij", self.rho)

    @property
    def oscillator_state(self) -> np.ndarray:
        """Reduced controller state Tr_S of the joint state."""
        return np.einsum("iimn->mn", self.rho)

    @property
    def conditional_populations(self) -> np.ndarray:
        return np.real(np.einsum("kii->ki", self.conditional))


def default_step(gen: JointGenerator, engine_diagonal: bool = False) -> float:
    """Step from a crude spectral-radius estimate of the generator.

    Engine-diagonal states never rotate at the bare level splittings, so that
    (often dominant) scale is dropped for them.
    """
    n = gen.n
    span = 0.0 if engine_diagonal else float(
        np.max(gen.spec.levels) - np.min(gen.spec.levels)
    )
    xnorm = float(np.linalg.norm(gen.x_op, 2))
    ham = (
        gen.omega * (n + 1.0)
        + (np.max(np.abs(gen.joint.coupling_scale * gen.spec.couplings))
           + abs(gen.ctrl.force)) * xnorm
    )
    cl = 4.0 * n * gen.friction + gen.diffusion * xnorm**2
    lam = 2.0 * (span + ham) + float(gen.decay.sum()) + 2.0 * cl
    return 1.0 / lam if lam > 0 else 1.0


def _trace_norm(delta_blocks: np.ndarray) -> float:
    m = full_matrix(delta_blocks)
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))


def joint_steady_state(
    gen: JointGenerator,
    t_max: float,
    dt: Optional[float] = None,
    stop_tol: float = 1e-9,
    rho0: Optional[np.ndarray] = None,
) -> JointSteadyState:
    """Integrate to stationarity and condition on the position grid.

    RK4 with a windowed trace-norm stop rule. Raises ConvergenceTimeoutError
    (carrying the last window residual) if t_max is reached first. The
    Caldeira-Leggett term is not completely positive, so small negative
    eigenvalues are expected; they are reported via the negativity metric,
    never clipped.
    """
    if rho0 is None:
        rho0 = gen.initial_state()
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape == (3 * gen.n, 3 * gen.n):
        rho0 = _as_blocks(rho0, gen.n)
    if rho0.shape != (3, 3, gen.n, gen.n):
        raise ValueError(f"joint state must be (3,3,N,N) blocks, got {rho0.shape}")
    diag = rho0[np.arange(3), np.arange(3)]
    diag_only = float(np.sum(np.abs(rho0))) == float(np.sum(np.abs(diag)))
    if dt is None:
        dt = default_step(gen, engine_diagonal=diag_only)
    n_steps = int(math.ceil(t_max / dt))

    if diag_only:
        state = diag.copy()
        rhs = gen.rhs_diag
    else:
        state = rho0.copy()
        rhs = gen.rhs

    def embed(s):
        if not diag_only:
            return s
        out = np.zeros((3, 3, gen.n, gen.n), dtype=complex)
        out[np.arange(3), np.arange(3)] = s
        return out

    converged = False
    prev = state.copy()
    t = 0.0
    for k in range(1, n_steps + 1):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * dt * k1)
        k3 = rhs(state + 0.5 * dt * k2)
        k4 = rhs(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = k * dt
        if k % CONVERGENCE_WINDOW == 0:
            residual = _trace_norm(embed(state - prev))
            prev = state.copy()
            if residual < stop_tol:
                converged = True
                break
    if not converged:
        residual = _trace_norm(embed(state - prev))
        raise ConvergenceTimeoutError(
            f"joint integration not stationary after t={t:g} "
            f"(window residual {residual:.3e} >= stop_tol {stop_tol:g})",
            residual,
        )

    rho = embed(state)
    xs = gen.joint.grid
    V = gen.position_basis(xs)
    osc = np.einsum("iimn->mn", rho)
    marginal = np.real(np.einsum("kn,nm,km->k", V, osc, V))
    cond_raw = np.einsum("kn,ijnm,km->kij", V, rho, V)
    conditional = np.full_like(cond_raw, np.nan)
    ok = marginal > MARGINAL_CUTOFF
    conditional[ok] = cond_raw[ok] / marginal[ok, None, None]

    eigs = np.linalg.eigvalsh(0.5 * (full_matrix(rho) + full_matrix(rho).conj().T))
    negativity = float(abs(np.clip(eigs, None, 0.0).sum()))

    return JointSteadyState(
        rho=rho,
        grid=xs,
        marginal=marginal,
        conditional=conditional,
        negativity=negativity,
        converged=converged,
        t_final=t,
        residual=residual,
    )


def conditional_current_comparison(
    gen: JointGenerator, state: JointSteadyState
) -> dict:
    """Work current from the conditioned state vs the closed-form landscape.

    Both sides use the scaled couplings: the numeric route applies the
    current definition gamma12(x) * (p1|x - p2|x) * ehat2(x) to the
    conditional populations; the analytic route is the factored stationary
    current at each grid point.
    """
    spec_scaled = replace(
        gen.spec,
        g1=gen.joint.coupling_scale * gen.spec.g1,
        g2=gen.joint.coupling_scale * gen.spec.g2,
        g3=gen.joint.coupling_scale * gen.spec.g3,
    )
    xs = state.grid
    e = spec_scaled.energies(xs)
    G = rate_matrix(spec_scaled, gen.baths, xs)
    pops = state.conditional_populations
    numeric = (
        G[:, 0, 1] * (pops[:, 0] - pops[:, 1]) * (e[:, 1] - e[:, 0])
    )
    analytic = steady_current_grid(spec_scaled, gen.baths, xs)["J12"]
    pdf_mu, pdf_var = gen.ctrl.mean, gen.ctrl.thermal_energy / gen.ctrl.kappa
    gaussian = np.exp(-((xs - pdf_mu) ** 2) / (2.0 * pdf_var)) / math.sqrt(
        2.0 * math.pi * pdf_var
    )
    return {
        "x": xs,
        "marginal": state.marginal,
        "analytic_density": gaussian,
        "J12_numeric": numeric,
        "J12_analytic": analytic,
    }


def build_joint_generator(
    spec: EngineSpec, baths: BathSet, ctrl: ControllerSpec, joint: JointSpec
) -> JointGenerator:
    """Assemble the truncated joint generator (validates the truncation)."""
    return JointGenerator(spec, baths, ctrl, joint)
