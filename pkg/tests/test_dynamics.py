import numpy as np
import pytest

from conftest import random_baths, random_engine
from qheat import BathSet, EngineSpec, evolve, lindblad_rhs, stationary_populations, transition_rates
from qheat.dynamics import (
    default_step,
    evolve_populations,
    hamiltonian,
    liouvillian_matrix,
    random_pure_state,
    validate_density_matrix,
)


def stationary_rho(spec, baths, x):
    p = stationary_populations(transition_rates(spec, baths, x))
    return np.diag(p).astype(complex)


class TestLindbladRHS:
    def test_stationary_state_is_fixed_point(self, ref_spec, ref_baths):
        rho = stationary_rho(ref_spec, ref_baths, 0.0)
        drho = lindblad_rhs(ref_spec, ref_baths, 0.0, rho)
        assert np.max(np.abs(np.diag(drho))) < 1e-12
        assert abs(drho.trace()) < 1e-14
        assert np.max(np.abs(drho - drho.conj().T)) < 1e-14

    def test_maximally_mixed_with_equal_rates(self):
        # symmetric rates: uniform populations are a fixed point of the diagonal
        spec = EngineSpec(e1=-1.0, e2=0.0, e3=1.0, gamma0=1.0)
        baths = BathSet(T13=300.0, T23=300.0, gamma12=1.0)
        rho = np.eye(3, dtype=complex) / 3.0
        drho = lindblad_rhs(spec, baths, 0.0, rho)
        G = transition_rates(spec, baths, 0.0).gamma
        expected = np.array(
            [sum(G[i, j] / 3 - G[j, i] / 3 for j in range(3) if j != i) for i in range(3)]
        )
        assert np.allclose(np.real(np.diag(drho)), expected, atol=1e-15)

    def test_coherences_decouple_from_populations(self, ref_spec, ref_baths):
        # adding coherences leaves the diagonal flow unchanged
        base = np.diag([0.5, 0.3, 0.2]).astype(complex)
        withc = base.copy()
        withc[0, 1] = 0.05 + 0.02j
        withc[1, 0] = withc[0, 1].conjugate()
        withc[1, 2] = -0.03j
        withc[2, 1] = withc[1, 2].conjugate()
        d0 = lindblad_rhs(ref_spec, ref_baths, 0.0, base)
        d1 = lindblad_rhs(ref_spec, ref_baths, 0.0, withc)
        assert np.max(np.abs(np.diag(d1) - np.diag(d0))) < 1e-14
        # and the coherence flow is nonzero (decay + rotation)
        assert abs(d1[0, 1]) > 0

    def test_rhs_rejects_bad_state(self, ref_spec, ref_baths):
        bad = np.diag([0.7, 0.2, 0.2]).astype(complex)  # trace 1.1
        with pytest.raises(ValueError):
            lindblad_rhs(ref_spec, ref_baths, 0.0, bad)


class TestValidation:
    def test_validate_accepts_pure_state(self):
        rng = np.random.default_rng(3)
        rho = random_pure_state(rng)
        validate_density_matrix(rho)

    def test_validate_rejects_non_hermitian(self):
        rho = np.diag([0.5, 0.3, 0.2]).astype(complex)
        rho[0, 1] = 0.1
        with pytest.raises(ValueError):
            validate_density_matrix(rho)


class TestEvolve:
    def test_fixed_point_converges_immediately(self, ref_spec, ref_baths):
        rho = stationary_rho(ref_spec, ref_baths, 0.0)
        traj = evolve(ref_spec, ref_baths, 0.0, rho, t_max=100.0)
        assert traj.converged
        assert len(traj.times) <= 101
        assert np.max(np.abs(traj.final_populations - np.real(np.diag(rho)))) < 1e-12

    def test_ground_start_matches_analytic_stationary(self, ref_spec, ref_baths):
        rho0 = np.zeros((3, 3), dtype=complex)
        rho0[0, 0] = 1.0
        traj = evolve(ref_spec, ref_baths, 0.0, rho0, t_max=50.0)
        assert traj.converged
        p = stationary_populations(transition_rates(ref_spec, ref_baths, 0.0))
        assert np.max(np.abs(traj.final_populations - p)) < 1e-8

    def test_energy_balance_along_transient(self, ref_spec, ref_baths):
        rho0 = np.zeros((3, 3), dtype=complex)
        rho0[1, 1] = 1.0
        G = transition_rates(ref_spec, ref_baths, 0.0).gamma
        dt = 1e-3 / G.sum()
        traj = evolve(ref_spec, ref_baths, 0.0, rho0, t_max=5.0, dt=dt)
        dU = (traj.energy[2:] - traj.energy[:-2]) / (2 * traj.dt)
        total_J = traj.currents.sum(axis=1)[1:-1]
        jmax = np.max(np.abs(traj.currents))
        assert np.max(np.abs(dU - total_J)) < 1e-6 * jmax

    def test_trace_and_hermiticity_preserved(self, ref_spec, ref_baths):
        rng = np.random.default_rng(5)
        rho0 = random_pure_state(rng)
        traj = evolve(ref_spec, ref_baths, 0.0, rho0, t_max=20.0)
        traces = np.einsum("nii->n", traj.states)
        assert np.max(np.abs(traces - 1.0)) < 1e-10
        herm = np.max(np.abs(traj.states - np.conj(np.transpose(traj.states, (0, 2, 1)))))
        assert herm < 1e-12

    def test_random_starts_converge_to_closed_form(self):
        rng = np.random.default_rng(29)
        for _ in range(5):
            spec = random_engine(rng)
            baths = random_baths(rng)
            x = rng.uniform(-10, 10)
            rho0 = random_pure_state(rng)
            traj = evolve(spec, baths, x, rho0, t_max=1e7)
            assert traj.converged
            p = stationary_populations(transition_rates(spec, baths, x))
            assert np.max(np.abs(traj.final_populations - p)) < 1e-8

    def test_populations_agree_with_rate_equation(self, ref_spec, ref_baths):
        # state with coherences: population marginals match the classical flow
        rho0 = np.array(
            [[0.6, 0.1 + 0.05j, 0.0],
             [0.1 - 0.05j, 0.3, 0.02j],
             [0.0, -0.02j, 0.1]],
            dtype=complex,
        )
        rates = transition_rates(ref_spec, ref_baths, 0.0)
        dt = default_step(ref_spec, ref_baths, 0.0)
        traj = evolve(ref_spec, ref_baths, 0.0, rho0, t_max=200 * dt, dt=dt, stop_tol=0.0)
        pops_full = np.real(np.einsum("nii->ni", traj.states))
        pops_rate = evolve_populations(rates, pops_full[0], t_max=200 * dt, dt=dt)
        n = min(len(pops_full), len(pops_rate))
        assert np.max(np.abs(pops_full[:n] - pops_rate[:n])) < 1e-9

    def test_step_guard(self, ref_spec, ref_baths):
        rho = stationary_rho(ref_spec, ref_baths, 0.0)
        with pytest.raises(ValueError):
            evolve(ref_spec, ref_baths, 0.0, rho, t_max=1.0, dt=1.0)

    def test_liouvillian_consistent_with_rhs(self, ref_spec, ref_baths):
        rng = np.random.default_rng(31)
        rho = random_pure_state(rng)
        L = liouvillian_matrix(ref_spec, ref_baths, 0.0)
        via_matrix = (L @ rho.reshape(9)).reshape(3, 3)
        direct = lindblad_rhs(ref_spec, ref_baths, 0.0, rho)
        assert np.max(np.abs(via_matrix - direct)) < 1e-12

    def test_energy_is_population_functional(self, ref_spec, ref_baths):
        rng = np.random.default_rng(37)
        rho = random_pure_state(rng)
        H = hamiltonian(ref_spec, 0.0)
        traj = evolve(ref_spec, ref_baths, 0.0, rho, t_max=5.0)
        k = len(traj.times) // 2
        assert traj.energy[k] == pytest.approx(
            float(np.real(np.trace(H @ traj.states[k]))), rel=1e-12
        )
