"""Time-domain Lindblad evolution of the engine at fixed controller position.

The generator is a constant 9x9 superoperator, so the fixed-step RK4 map is
precomputed once as its degree-4 Taylor polynomial and iterated; for a linear
autonomous system this map's fixed point coincides with the exact stationary
state, making long-time results bit-reproducible and bias-free. Used to
validate the closed-form stationary populations and the energy balance
dU/dt = J12 + J13 + J23 along transients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import BathSet, EngineSpec, rate_matrix

TRACE_TOL = 1e-10
HERMITICITY_TOL = 1e-12
PSD_TOL = -1e-8
TRACE_DRIFT_LIMIT = 1e-6
CONVERGENCE_WINDOW = 100  # steps between states compared by the stop rule


class IntegratorFailureError(RuntimeError):
    """Trace drift or positivity loss beyond tolerance during evolution."""


def validate_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; returns rho as complex."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (3, 3):
        raise ValueError(f"density matrix must be 3x3, got {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > HERMITICITY_TOL:
        raise ValueError(f"density matrix not Hermitian: deviation {herm:.2e}")
    tr = abs(rho.trace() - 1.0)
    if tr > TRACE_TOL:
        raise ValueError(f"density matrix trace off by {tr:.2e}")
    mineig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if mineig < PSD_TOL:
        raise ValueError(f"density matrix not positive: min eigenvalue {mineig:.2e}")
    return rho


def random_pure_state(rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state |psi><psi| on the three levels."""
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def hamiltonian(spec: EngineSpec, x: float) -> np.ndarray:
    """Engine Hamiltonian H(x) = diag(e_i + g_i*x)."""
    return np.diag(spec.energies(float(x))).astype(complex)


def jump_operators(rates) -> list:
    """(rate, |i><j|) pairs for every nonzero directed rate j -> i."""
    G = np.asarray(rates.gamma if hasattr(rates, "gamma") else rates, dtype=float)
    ops = []
    for i in range(3):
        for j in range(3):
            if i != j and G[i, j] > 0:
                S = np.zeros((3, 3), dtype=complex)
                S[i, j] = 1.0
                ops.append((G[i, j], S))
    return ops


def lindblad_rhs(spec: EngineSpec, baths: BathSet, x: float, rho: np.ndarray) -> np.ndarray:
    """drho/dt = -i[H(x), rho] + sum of local dissipators; traceless Hermitian."""
    rho = validate_density_matrix(rho)
    H = hamiltonian(spec, x)
    out = -1j * (H @ rho - rho @ H)
    for gamma, S in jump_operators(rate_matrix(spec, baths, float(x))):
        Sd = S.conj().T
        SdS = Sd @ S
        out += gamma * (S @ rho @ Sd - 0.5 * (SdS @ rho + rho @ SdS))
    return out


def liouvillian_matrix(spec: EngineSpec, baths: BathSet, x: float) -> np.ndarray:
    """9x9 generator acting on row-major vec(rho)."""
    H = hamiltonian(spec, x)
    eye = np.eye(3, dtype=complex)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for gamma, S in jump_operators(rate_matrix(spec, baths, float(x))):
        SdS = S.conj().T @ S
        L += gamma * (
            np.kron(S, S.conj())
            - 0.5 * (np.kron(SdS, eye) + np.kron(eye, SdS.T))
        )
    return L


def population_rate_matrix(rates) -> np.ndarray:
    """Classical rate matrix M with dp/dt = M p (populations-only dynamics)."""
    G = np.asarray(rates.gamma if hasattr(rates, "gamma") else rates, dtype=float)
    M = G.copy()
    np.fill_diagonal(M, 0.0)
    np.fill_diagonal(M, -M.sum(axis=0))
    return M


def default_step(spec: EngineSpec, baths: BathSet, x: float) -> float:
    """Fixed step keeping both rate relaxation and coherence phases resolved."""
    G = rate_matrix(spec, baths, float(x))
    total = float(G.sum())
    e = spec.energies(float(x))
    wmax = float(np.max(np.abs(e[:, None] - e[None, :])))
    dt = 0.1 / total if total > 0 else 1.0
    if wmax > 0:
        dt = min(dt, 0.5 / wmax)
    return dt


@dataclass
class Trajectory:
    """Sampled evolution: states, energies U(t) and instantaneous currents."""

    times: np.ndarray        # (n,)
    states: np.ndarray       # (n, 3, 3)
    energy: np.ndarray       # (n,) U(t) = Tr[H rho]
    currents: np.ndarray     # (n, 3) columns J12, J13, J23
    dt: float
    converged: bool

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_populations(self) -> np.ndarray:
        return np.real(np.einsum("ii->i", self.states[-1]))


def evolve(
    spec: EngineSpec,
    baths: BathSet,
    x: float,
    rho0: np.ndarray,
    t_max: float,
    dt: float | None = None,
    stop_tol: float = 1e-12,
) -> Trajectory:
    """Fixed-step RK4 integration until stationary or t_max.

    Stops early (converged=True) once the trace-norm change over a window of
    CONVERGENCE_WINDOW steps drops below stop_tol. Raises
    IntegratorFailureError on trace drift beyond 1e-6 or positivity loss
    beyond the density-matrix tolerance.
    """
    rho0 = validate_density_matrix(rho0)
    if dt is None:
        dt = default_step(spec, baths, x)
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    G = rate_matrix(spec, baths, float(x))
    max_total_rate = float(np.max(G.sum(axis=0)))
    if dt * max_total_rate >= 0.1:
        raise ValueError(
            f"dt={dt:g} too large: dt * max total rate = {dt * max_total_rate:.3g} >= 0.1"
        )

    L = liouvillian_matrix(spec, baths, x)
    A = dt * L
    # RK4 one-step map for a linear generator: I + A + A^2/2 + A^3/6 + A^4/24
    R = np.eye(9, dtype=complex)
    term = np.eye(9, dtype=complex)
    for k in range(1, 5):
        term = term @ A / k
        R += term

    n_steps = int(np.ceil(t_max / dt))
    if n_steps > 10_000_000:
        raise ValueError(
            f"t_max/dt = {n_steps} steps exceeds the trajectory storage cap; "
            "increase dt or reduce t_max"
        )
    vec = rho0.reshape(9)
    states = np.empty((n_steps + 1, 9), dtype=complex)
    states[0] = vec
    converged = False
    n_done = n_steps
    for k in range(1, n_steps + 1):
        vec = R @ vec
        states[k] = vec
        if k % CONVERGENCE_WINDOW == 0:
            _check_state(vec, k * dt)
            delta = (states[k] - states[k - CONVERGENCE_WINDOW]).reshape(3, 3)
            tn = np.sum(np.abs(np.linalg.eigvalsh(0.5 * (delta + delta.conj().T))))
            if tn < stop_tol:
                converged = True
                n_done = k
                break
    states = states[: n_done + 1]
    _check_state(states[-1], n_done * dt)

    rhos = states.reshape(-1, 3, 3)
    times = dt * np.arange(n_done + 1)
    H = hamiltonian(spec, x)
    energy = np.real(np.einsum("ij,nji->n", H, rhos))
    pops = np.real(np.einsum("nii->ni", rhos))
    e = spec.energies(float(x))
    currents = np.stack(
        [
            (G[i, j] * pops[:, j] - G[j, i] * pops[:, i]) * (e[i] - e[j])
            for (i, j) in ((0, 1), (0, 2), (1, 2))
        ],
        axis=1,
    )
    return Trajectory(times, rhos, energy, currents, dt, converged)


def _check_state(vec: np.ndarray, t: float):
    rho = vec.reshape(3, 3)
    drift = abs(np.real(rho.trace()) - 1.0)
    if drift > TRACE_DRIFT_LIMIT:
        raise IntegratorFailureError(f"trace drifted by {drift:.3e} at t={t:g}")
    mineig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if mineig < PSD_TOL:
        raise IntegratorFailureError(f"state lost positivity (min eig {mineig:.3e}) at t={t:g}")


def evolve_populations(
    rates, p0: np.ndarray, t_max: float, dt: float
) -> np.ndarray:
    """RK4 on the populations-only rate equation; cross-check for evolve()."""
    M = population_rate_matrix(rates)
    A = dt * M
    R = np.eye(3)
    term = np.eye(3)
    for k in range(1, 5):
        term = term @ A / k
        R += term
    p = np.asarray(p0, dtype=float).copy()
    out = [p.copy()]
    for _ in range(int(np.ceil(t_max / dt))):
        p = R @ p
        out.append(p.copy())
    return np.array(out)
