import math

import numpy as np
import pytest

from _oracles import mp_steady_oracle, nullspace_populations
from conftest import random_baths, random_engine
from qheat import (
    BathSet,
    DegenerateStationaryStateError,
    EngineSpec,
    RateTable,
    adaptability,
    carnot_efficiency,
    efficiency,
    stationary_populations,
    steady_currents,
    transition_rates,
)
from qheat.engine import pair_rates, rate_matrix
from qheat.units import KB


def natural_scale(spec, baths, x):
    e = spec.energies(x)
    wmax = np.max(np.abs(e[:, None] - e[None, :]))
    return spec.gamma0 * wmax**4


class TestPairRates:
    def test_unit_gap_unit_beta(self):
        # beta*|omega| = 1, gamma0 = 1, |omega| = 1 eV
        down, up = pair_rates(1.0, 1.0, 1.0)
        assert down == pytest.approx(math.e / (math.e - 1.0), rel=1e-14)
        assert up == pytest.approx(1.0 / (math.e - 1.0), rel=1e-14)

    def test_degenerate_pair_is_silent(self):
        down, up = pair_rates(1.0, 0.0, 37.0)
        assert down == 0.0 and up == 0.0
        down, up = pair_rates(1.0, 5e-10, 37.0)
        assert down == 0.0 and up == 0.0

    def test_zero_temperature_limit(self):
        # huge beta: upward rate frozen out, downward purely spontaneous
        down, up = pair_rates(2.0, 1.5, 1e5)
        assert up == 0.0
        assert down == pytest.approx(2.0 * 1.5**3, rel=1e-12)

    def test_level_crossing_keeps_detailed_balance(self):
        # negative gap: the energy-decreasing direction flips
        down_pos, up_pos = pair_rates(1.0, 0.8, 3.0)
        rate_ij, rate_ji = pair_rates(1.0, -0.8, 3.0)
        assert rate_ij == up_pos and rate_ji == down_pos


class TestTransitionRates:
    def test_work_source_symmetric_default(self, ref_spec, ref_baths):
        rates = transition_rates(ref_spec, ref_baths, 0.0)
        w12 = abs(ref_spec.e2 - ref_spec.e1)
        assert rates.rate(1, 2) == rates.rate(2, 1) == pytest.approx(w12**3)

    def test_explicit_gamma12(self, ref_spec):
        baths = BathSet(T13=330.0, T23=280.0, gamma12=0.25)
        rates = transition_rates(ref_spec, baths, 0.0)
        assert rates.rate(1, 2) == rates.rate(2, 1) == 0.25

    def test_detailed_balance_over_draws(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            spec = random_engine(rng)
            baths = random_baths(rng)
            x = rng.uniform(-50, 50)
            G = rate_matrix(spec, baths, x)
            e = spec.energies(x)
            for (i, j, beta) in ((0, 2, baths.beta13), (1, 2, baths.beta23)):
                w = abs(e[j] - e[i])
                if w < 1e-6:
                    continue
                if e[j] > e[i]:
                    down, up = G[i, j], G[j, i]
                else:
                    down, up = G[j, i], G[i, j]
                assert down > 0 and up > 0
                expected = math.exp(beta * w)
                assert abs(down / up - expected) <= 1e-12 * expected

    def test_invalid_inputs(self, ref_spec):
        with pytest.raises(ValueError):
            transition_rates(ref_spec, BathSet(T13=330.0, T23=280.0), math.nan)
        with pytest.raises(ValueError):
            BathSet(T13=-1.0, T23=280.0)
        with pytest.raises(ValueError):
            BathSet(T13=330.0, T23=0.0)
        with pytest.raises(ValueError):
            EngineSpec(e1=0.0, e2=1.0, e3=2.0, gamma0=0.0)


class TestStationaryPopulations:
    def test_all_rates_equal(self):
        G = np.full((3, 3), 0.7)
        np.fill_diagonal(G, 0.0)
        p = stationary_populations(RateTable(G))
        assert p == pytest.approx([1 / 3, 1 / 3, 1 / 3], rel=1e-14)

    def test_gibbs_when_all_baths_equal(self):
        # replace the work source by a thermal pair at the common temperature
        rng = np.random.default_rng(11)
        for _ in range(100):
            e = rng.uniform(-0.2, 0.2, 3)
            T = rng.uniform(150.0, 600.0)
            beta = 1.0 / (KB * T)
            G = np.zeros((3, 3))
            G[0, 1], G[1, 0] = pair_rates(1.0, e[1] - e[0], beta)
            G[0, 2], G[2, 0] = pair_rates(1.0, e[2] - e[0], beta)
            G[1, 2], G[2, 1] = pair_rates(1.0, e[2] - e[1], beta)
            p = stationary_populations(RateTable(G))
            w = np.exp(-beta * (e - e.min()))
            boltz = w / w.sum()
            assert np.max(np.abs(p - boltz) / boltz) < 1e-10
            p_ns = nullspace_populations(G)
            assert np.max(np.abs(p - p_ns)) < 1e-12

    def test_reference_populations_match_nullspace(self, ref_spec, ref_baths):
        p = stationary_populations(transition_rates(ref_spec, ref_baths, 0.0))
        p_mp, _ = mp_steady_oracle(ref_spec, ref_baths, 0.0)
        assert np.max(np.abs(p - p_mp) / p_mp) < 1e-12

    def test_all_zero_rates_degenerate(self):
        with pytest.raises(DegenerateStationaryStateError):
            stationary_populations(RateTable(np.zeros((3, 3))))

    def test_disconnected_graph_degenerate(self):
        # only the 1-2 pair active: level 3 disconnected, no unique fixed point
        G = np.zeros((3, 3))
        G[0, 1] = G[1, 0] = 1.0
        with pytest.raises(DegenerateStationaryStateError):
            stationary_populations(RateTable(G))


class TestSteadyCurrents:
    def test_currents_sum_to_zero(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            spec = random_engine(rng)
            baths = random_baths(rng)
            x = rng.uniform(-30, 30)
            rep = steady_currents(spec, baths, x)
            scale = max(abs(rep.J12), abs(rep.J13), abs(rep.J23),
                        natural_scale(spec, baths, x))
            assert abs(rep.J12 + rep.J13 + rep.J23) <= 1e-12 * scale

    def test_equal_temperatures_absorb(self, ref_spec):
        baths = BathSet(T13=300.0, T23=300.0)
        rep = steady_currents(ref_spec, baths, 0.0)
        assert rep.J12 > 0
        assert not rep.operable
        assert rep.eta is None

    def test_degenerate_levels_no_power(self):
        spec = EngineSpec(e1=-2.0, e2=-2.0, e3=1.0, gamma0=1.0)
        rep = steady_currents(spec, BathSet(T13=330.0, T23=280.0), 0.0)
        assert rep.J12 == 0.0
        assert rep.eta is None

    def test_reference_window_matches_high_precision_oracle(self, ref_spec, ref_baths):
        rep = steady_currents(ref_spec, ref_baths, -3900.0)
        assert rep.operable and rep.J12 < 0
        _, j_mp = mp_steady_oracle(ref_spec, ref_baths, -3900.0)
        for name in ("J12", "J13", "J23"):
            assert getattr(rep, name) == pytest.approx(j_mp[name], rel=1e-10)

    def test_route_equivalence_over_draws(self):
        rng = np.random.default_rng(17)
        for _ in range(150):
            spec = random_engine(rng)
            baths = random_baths(rng)
            x = rng.uniform(-30, 30)
            rep = steady_currents(spec, baths, x)
            p = stationary_populations(transition_rates(spec, baths, x))
            G = rate_matrix(spec, baths, x)
            e = spec.energies(x)
            scale = max(abs(rep.J12), abs(rep.J13), abs(rep.J23),
                        natural_scale(spec, baths, x))
            for name, (i, j) in (("J12", (0, 1)), ("J13", (0, 2)), ("J23", (1, 2))):
                j_def = (G[i, j] * p[j] - G[j, i] * p[i]) * (e[i] - e[j])
                assert abs(getattr(rep, name) - j_def) <= 1e-10 * scale


class TestEfficiency:
    def test_limits_at_window_edges(self, ref_spec, ref_baths):
        theta = ref_baths.theta
        # gap-closure root: efficiency -> 0
        x0 = -ref_spec.ehat2 / ref_spec.ghat2
        rep = steady_currents(ref_spec, ref_baths, x0 + 0.5)
        assert rep.eta is not None and rep.eta < 2e-4
        # exponential-factor root: efficiency -> 1 - theta (approach from inside)
        x1 = (ref_spec.ehat2 - (1 - theta) * ref_spec.ehat3) / (
            (1 - theta) * ref_spec.ghat3 - ref_spec.ghat2
        )
        rep = steady_currents(ref_spec, ref_baths, x1 - 0.5)
        assert rep.eta == pytest.approx(1.0 - theta, abs=1e-3)

    def test_carnot_bound_on_window_grid(self, ref_spec, ref_baths):
        from qheat.controller import operability_form

        form = operability_form(ref_spec, ref_baths)
        xs = np.linspace(form.root_lo, form.root_hi, 400)[1:-1]
        bound = carnot_efficiency(ref_baths.theta)
        for x in xs:
            rep = steady_currents(ref_spec, ref_baths, float(x))
            if rep.eta is not None:
                assert rep.eta <= bound + 1e-12

    def test_hot_cold_swap_uses_other_carnot_branch(self, ref_spec):
        baths = BathSet(T13=280.0, T23=330.0)
        assert carnot_efficiency(baths.theta) == pytest.approx(1 - 280.0 / 330.0)

    def test_not_operable_returns_none(self):
        assert efficiency(0.5, 1.0, -0.2) is None
        assert efficiency(-0.5, -1.0, -0.2) is None
        assert efficiency(-0.5, 1.0, 0.2) == pytest.approx(0.5)


class TestAdaptability:
    def test_equal_temperatures_never_adaptable(self, ref_spec):
        baths = BathSet(T13=300.0, T23=300.0)
        assert not adaptability(ref_spec, baths, 0.0)
        assert not adaptability(ref_spec, baths, -4000.0)

    def test_zero_gap_boundary(self, ref_baths):
        spec = EngineSpec(e1=-2.0, e2=-2.0, e3=1.0, gamma0=1.0)
        assert not adaptability(spec, ref_baths, 0.0)

    def test_matches_power_sign_on_draws(self):
        rng = np.random.default_rng(23)
        agree = 0
        for _ in range(1000):
            spec = random_engine(rng)
            baths = random_baths(rng)
            x = rng.uniform(-30, 30)
            rep = steady_currents(spec, baths, x)
            assert adaptability(spec, baths, x) == (rep.J12 < 0)
            agree += 1
        assert agree == 1000
