"""Resource-planning generator, padded TRP LP, reliability certification."""

import numpy as np
import pytest

from padsaa.backend import FEASIBILITY_TOL, solve_lp
from padsaa.feasibility import (estimate_recourse_likelihood, eval_H)
from padsaa.model import validate_problem
from padsaa.padded import build_padded_monotone
from padsaa.saa import build_extensive_form, extract_solution
from padsaa.sampling import draw_iid_sample
from padsaa.trp import (TRPConfig, TRPParams, build_trp_padded, generate_trp,
                        hardest_scenario, is_completely_reliable)


def deterministic_params():
    return TRPParams(rho_sigma=0.0, mu_mean_range=(1.0, 1.0), mu_sigma_frac=0.0,
                     demand_mean_range=(20.0, 20.0), demand_sigma_frac=0.0)


class TestGeneration:
    def test_deterministic_unit_instance(self):
        """n=m=1, rho=mu=1, lambda=2: recourse feasible iff x >= 2."""
        inst = generate_trp(TRPConfig(n=1, m=1, seed=0,
                                      params=deterministic_params()))
        xi = draw_iid_sample(inst.spec, 1, seed=1).values[0]
        assert eval_H(inst.problem, [2.0], xi) == pytest.approx(0.0, abs=1e-9)
        assert eval_H(inst.problem, [1.9], xi) > FEASIBILITY_TOL
        assert eval_H(inst.problem, [2.5], xi) < 0.0

    def test_validates(self, trp_10x10):
        assert validate_problem(trp_10x10.problem).ok

    def test_reproducible(self):
        a = generate_trp(TRPConfig(n=3, m=2, seed=11))
        b = generate_trp(TRPConfig(n=3, m=2, seed=11))
        assert np.array_equal(a.generation["c"], b.generation["c"])
        xi = draw_iid_sample(a.spec, 1, seed=2).values[0]
        assert np.array_equal(a.problem.realize(xi).Wbar,
                              b.problem.realize(xi).Wbar)

    def test_base_monotonicity_probes(self, trp_2x2):
        """>= 100 signed probe pairs never violate monotone ordering."""
        rng = np.random.default_rng(17)
        lo, hi = trp_2x2.support_lo, trp_2x2.support_hi
        signs = trp_2x2.signs
        x = np.array([6.0, 6.0])
        for _ in range(100):
            a = rng.uniform(lo, hi)
            b = rng.uniform(lo, hi)
            weak = np.where(signs > 0, np.minimum(a, b), np.maximum(a, b))
            hard = np.where(signs > 0, np.maximum(a, b), np.minimum(a, b))
            assert eval_H(trp_2x2.problem, x, weak) \
                <= eval_H(trp_2x2.problem, x, hard) + 1e-6

    def test_factor_variant_not_monotone_in_tau(self):
        """Randomized search exhibits a probe pair violating monotonicity in
        the factor coordinates."""
        inst = generate_trp(TRPConfig(n=2, m=3, l=3, seed=23))
        p = inst.problem
        tau = inst.demand_slice
        rng = np.random.default_rng(29)
        lo, hi = inst.support_lo, inst.support_hi
        x = np.array([10.0, 10.0])
        found = None
        for _ in range(200):
            a = rng.uniform(lo, hi)
            b = a.copy()
            b[tau] = np.maximum(a[tau], rng.uniform(lo[tau], hi[tau]))
            if eval_H(p, x, b) < eval_H(p, x, a) - 1e-7:
                found = (a, b)
                break
        assert found is not None, "no monotonicity violation found in tau"

    def test_support_box_containment(self, trp_2x2):
        sample = draw_iid_sample(trp_2x2.spec, 300, seed=31)
        assert np.all(sample.values >= trp_2x2.support_lo[None, :])
        assert np.all(sample.values <= trp_2x2.support_hi[None, :])

    def test_integer_mask(self):
        inst = generate_trp(TRPConfig(n=3, m=2, p=3, seed=1))
        assert inst.problem.X.integrality_mask == frozenset(range(3))
        with pytest.raises(ValueError):
            TRPConfig(n=3, m=2, p=2)


class TestPaddedTRP:
    def test_zero_gamma_single_scenario(self, trp_2x2):
        """gamma=0, N=1: the z block duplicates the scenario, so the optimum
        equals the standard SAA optimum."""
        sample = draw_iid_sample(trp_2x2.spec, 1, seed=3)
        padded = solve_lp(build_trp_padded(trp_2x2, sample, 0.0),
                          want_vertex=True)
        standard = solve_lp(build_extensive_form(trp_2x2.problem, sample),
                            want_vertex=True)
        assert padded.objective == pytest.approx(standard.objective, rel=1e-8)

    def test_objective_nondecreasing_in_gamma(self, trp_2x2):
        sample = draw_iid_sample(trp_2x2.spec, 20, seed=4)
        values = []
        for g in (0.0, 0.4, 0.8, 1.2):
            res = solve_lp(build_trp_padded(trp_2x2, sample, g),
                           want_vertex=True).require_optimal()
            values.append(res.objective)
        assert np.all(np.diff(values) >= -1e-9)

    def test_matches_generic_monotone_builder(self, trp_2x2):
        """The hand-written allocation LP agrees with the generic monotone
        padded builder on every gamma probed."""
        sample = draw_iid_sample(trp_2x2.spec, 8, seed=5)
        for g in (0.0, 0.3, 0.9):
            direct = solve_lp(build_trp_padded(trp_2x2, sample, g),
                              want_vertex=True).require_optimal()
            generic = solve_lp(
                build_padded_monotone(trp_2x2.problem, sample, g,
                                      trp_2x2.signs),
                want_vertex=True).require_optimal()
            assert direct.objective == pytest.approx(generic.objective,
                                                     rel=1e-6)

    def test_rejects_factor_variant(self):
        inst = generate_trp(TRPConfig(n=2, m=2, l=2, seed=6))
        sample = draw_iid_sample(inst.spec, 3, seed=7)
        with pytest.raises(ValueError):
            build_trp_padded(inst, sample, 0.1)


class TestHardestScenario:
    def test_deterministic_coordinates_fixed_points(self):
        inst = generate_trp(TRPConfig(n=1, m=1, seed=0,
                                      params=deterministic_params()))
        hard = hardest_scenario(inst)
        assert hard[0] == pytest.approx(1.0)   # rho
        assert hard[1] == pytest.approx(1.0)   # mu
        assert hard[2] == pytest.approx(2.0)   # demand

    def test_truncated_normal_extreme(self):
        inst = generate_trp(TRPConfig(n=1, m=1, seed=0,
                                      params=TRPParams(rho_sigma=0.05)))
        assert hardest_scenario(inst)[0] == pytest.approx(0.8)

    def test_factor_demand_bound(self):
        """Loadings (1, -2) with offset 11 cap demand at 14 on tau in [-1,1]."""
        inst = generate_trp(TRPConfig(n=1, m=1, l=2, seed=0))
        object.__setattr__(inst, "generation",
                           {**inst.generation,
                            "factor_offsets": np.array([11.0]),
                            "factor_loadings": np.array([[1.0], [-2.0]])})
        lam_sup = inst.generation["factor_offsets"] \
            + np.abs(inst.generation["factor_loadings"]).sum(axis=0)
        assert lam_sup[0] == pytest.approx(14.0)

    def test_hardest_inside_support_closure(self, trp_2x2):
        hard = hardest_scenario(trp_2x2)
        assert np.all(hard >= trp_2x2.support_lo - 1e-12)
        assert np.all(hard <= trp_2x2.support_hi + 1e-12)


class TestReliability:
    def test_no_capacity_unreliable(self, trp_2x2):
        assert not is_completely_reliable(trp_2x2, np.zeros(2))

    def test_abundant_capacity_reliable(self, trp_2x2):
        assert is_completely_reliable(trp_2x2, np.full(2, 200.0))

    def test_reliable_implies_full_likelihood(self, trp_2x2):
        """A certified point never sees an infeasible evaluation scenario."""
        x = np.full(2, 100.0)
        assert is_completely_reliable(trp_2x2, x)
        est = estimate_recourse_likelihood(trp_2x2.problem, x, trp_2x2.spec,
                                           10_000, seed=41, signs=trp_2x2.signs)
        assert est.phi_hat == 1.0

    def test_factor_certification_is_conservative(self):
        """Factor variant: certification at the boxed demand bound implies
        feasibility at sampled factor scenarios."""
        inst = generate_trp(TRPConfig(n=2, m=2, l=2, seed=13))
        x = np.full(2, 120.0)
        assert is_completely_reliable(inst, x)
        sample = draw_iid_sample(inst.spec, 500, seed=43)
        hs = [eval_H(inst.problem, x, xi) for xi in sample.values[:50]]
        assert max(hs) <= FEASIBILITY_TOL
