"""Feasibility function H, recourse value Q, likelihood estimation."""

import itertools

import numpy as np
import pytest
from scipy.stats import binom

from padsaa.backend import FEASIBILITY_TOL
from padsaa.feasibility import (INFEASIBLE, DeterministicBlockInfeasibleError,
                                HBatchEvaluator, eval_H, eval_Q, eval_Q_batch,
                                eval_recourse, estimate_recourse_likelihood,
                                feasible_scenario_mask, is_infeasible)
from padsaa.sampling import (DistributionSpec, ScaledBinomial, SampleSet,
                             draw_iid_sample)


def dual_cone_H_oracle(p, x, xi):
    """H via brute-force enumeration of basic points of the dual polytope
    {(alpha, beta) >= 0 : Wbar' alpha + D' beta = 0, e' alpha = 1}."""
    rz = p.realize(xi)
    det = p.det
    nI, n2 = rz.n_rows, p.n2
    m2 = nI + det.rows
    # equality system rows: n2 dual-feasibility rows + the normalization
    E = np.zeros((n2 + 1, m2))
    E[:n2, :nI] = rz.Wbar.T
    E[:n2, nI:] = det.D.T
    E[n2, :nI] = 1.0
    rhs = np.zeros(n2 + 1)
    rhs[n2] = 1.0
    obj = np.concatenate([rz.hbar - rz.Tbar @ x, det.d - det.C @ x])
    best = -np.inf
    n_eq = n2 + 1
    for support in itertools.combinations(range(m2), n_eq):
        sub = E[:, support]
        try:
            sol = np.linalg.solve(sub, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.any(sol < -1e-9):
            continue
        alpha = np.zeros(m2)
        alpha[list(support)] = sol
        if np.max(np.abs(E @ alpha - rhs)) > 1e-8:
            continue
        best = max(best, float(obj @ alpha))
    return best


class TestEvalH:
    def test_single_row_closed_form(self, threshold_toy):
        """H(x, xi) = xi - x for the threshold toy."""
        assert eval_H(threshold_toy, [0.5], [0.3]) == pytest.approx(-0.2)
        assert eval_H(threshold_toy, [0.5], [0.9]) == pytest.approx(0.4)

    def test_matches_dual_cone_enumeration(self, trp_2x2):
        """Small resource-planning instance against the dual-vertex oracle."""
        rng = np.random.default_rng(4)
        sample = draw_iid_sample(trp_2x2.spec, 4, seed=21).values
        x = np.array([6.0, 6.0])
        for xi in sample:
            direct = eval_H(trp_2x2.problem, x, xi)
            oracle = dual_cone_H_oracle(trp_2x2.problem, x, xi)
            assert direct == pytest.approx(oracle, abs=1e-7)

    def test_det_block_infeasible_is_distinguished(self, threshold_toy):
        # y >= x and y <= -1 conflict for x in X
        from padsaa.model import DeterministicSecondStage, TwoStageProblem
        bad_det = DeterministicSecondStage(
            np.array([[1.0], [-1.0]]), np.array([[-1.0], [0.0]]),
            np.array([0.0, 1.0]))
        bad = TwoStageProblem(c=threshold_toy.c, X=threshold_toy.X, det=bad_det,
                              scenario_map=threshold_toy.scenario_map)
        with pytest.raises(DeterministicBlockInfeasibleError):
            eval_H(bad, [0.5], [0.3])


class TestEvalQ:
    def test_threshold_recourse_value(self, threshold_toy):
        assert eval_Q(threshold_toy, [1.5], [1.0]) == pytest.approx(1.5)

    def test_threshold_infeasible(self, threshold_toy):
        assert is_infeasible(eval_Q(threshold_toy, [0.5], [1.0]))

    def test_trp_matches_vertex_enumeration(self, trp_2x2):
        """2x2 allocation LP with generous capacity versus brute-force
        enumeration of basic feasible points."""
        p = trp_2x2.problem
        xi = draw_iid_sample(trp_2x2.spec, 1, seed=3).values[0]
        x = np.array([40.0, 40.0])
        rz = p.realize(xi)
        # inequality system: random rows (>=) plus y >= 0, all as A y >= b
        A = np.vstack([rz.Wbar, np.eye(4)])
        b = np.concatenate([rz.hbar - rz.Tbar @ x, np.zeros(4)])
        best = np.inf
        for rows in itertools.combinations(range(A.shape[0]), 4):
            try:
                y = np.linalg.solve(A[list(rows)], b[list(rows)])
            except np.linalg.LinAlgError:
                continue
            if np.all(A @ y >= b - 1e-9):
                best = min(best, float(rz.q @ y))
        direct = eval_Q(p, x, xi)
        assert direct == pytest.approx(best, abs=1e-6)

    def test_recourse_eval_consistency(self, threshold_toy):
        ev = eval_recourse(threshold_toy, [0.5], [0.9])
        assert not ev.feasible and is_infeasible(ev.Q_value)
        ev2 = eval_recourse(threshold_toy, [1.0], [0.9])
        assert ev2.feasible and ev2.Q_value == pytest.approx(1.0)


class TestLikelihood:
    def test_certain_feasibility(self, trp_2x2):
        """Capacity far above worst-case demand gives phi_hat = 1."""
        est = estimate_recourse_likelihood(trp_2x2.problem, [80.0, 80.0],
                                           trp_2x2.spec, 400, seed=5)
        assert est.phi_hat == 1.0

    def test_binomial_closed_form(self, threshold_toy):
        """2 xi ~ B(2, 1/2): phi(0.5) = P(xi <= 0.5) = 3/4 exactly."""
        spec = DistributionSpec((ScaledBinomial(2, 0.5, 0.5),))
        M = 10_000
        est = estimate_recourse_likelihood(threshold_toy, [0.5], spec, M, seed=17)
        exact = binom.cdf(1, 2, 0.5)
        assert exact == 0.75
        sigma = (exact * (1 - exact) / M) ** 0.5
        assert abs(est.phi_hat - exact) <= 3 * sigma
        assert est.ci_halfwidth == pytest.approx(
            1.96 * (est.phi_hat * (1 - est.phi_hat) / M) ** 0.5)

    def test_deterministic_given_seed(self, trp_2x2):
        a = estimate_recourse_likelihood(trp_2x2.problem, [7.0, 7.0],
                                         trp_2x2.spec, 600, seed=9)
        b = estimate_recourse_likelihood(trp_2x2.problem, [7.0, 7.0],
                                         trp_2x2.spec, 600, seed=9)
        assert a.phi_hat == b.phi_hat

    def test_signs_hint_does_not_change_counts(self, trp_2x2):
        sample = draw_iid_sample(trp_2x2.spec, 500, seed=31)
        x = np.array([7.0, 7.0])
        plain = feasible_scenario_mask(trp_2x2.problem, x, sample)
        hinted = feasible_scenario_mask(trp_2x2.problem, x, sample,
                                        signs=trp_2x2.signs)
        assert np.array_equal(plain, hinted)


class TestBatchPaths:
    def test_classify_equals_pointwise_H(self, trp_2x2):
        """The pooled/blocked classifier agrees with one-at-a-time eval_H."""
        sample = draw_iid_sample(trp_2x2.spec, 200, seed=13)
        x = np.array([6.5, 6.5])
        mask = feasible_scenario_mask(trp_2x2.problem, x, sample)
        ref = np.array([eval_H(trp_2x2.problem, x, xi) <= FEASIBILITY_TOL
                        for xi in sample.values])
        assert np.array_equal(mask, ref)

    def test_eval_Q_batch_matches_loop(self, trp_2x2):
        sample = draw_iid_sample(trp_2x2.spec, 40, seed=14)
        x = np.array([7.5, 7.5])
        batch = eval_Q_batch(trp_2x2.problem, x, sample)
        for xi, val in zip(sample.values, batch):
            ref = eval_Q(trp_2x2.problem, x, xi)
            if is_infeasible(ref):
                assert is_infeasible(val)
            else:
                assert val == pytest.approx(ref, rel=1e-7, abs=1e-7)


class TestInvariants:
    def test_H_Q_equivalence(self, trp_2x2):
        """H <= tol iff Q finite, on random (x, xi) probes."""
        rng = np.random.default_rng(15)
        sample = draw_iid_sample(trp_2x2.spec, 30, seed=16).values
        for xi in sample:
            x = rng.uniform(0.0, 9.0, 2)
            h = eval_H(trp_2x2.problem, x, xi)
            q = eval_Q(trp_2x2.problem, x, xi)
            assert (h <= FEASIBILITY_TOL) == (not is_infeasible(q))

    def test_convexity_in_xi_fixed_recourse(self):
        """With fixed Wbar and hbar(xi) = xi, H(x, .) is convex on probes."""
        from conftest import make_box_recourse
        p = make_box_recourse(d=2, seed=21, fixed_recourse=True)
        rng = np.random.default_rng(22)
        x = np.array([0.4])
        for _ in range(25):
            a, b = rng.normal(0, 1, (2, 2))
            lam = rng.uniform(0, 1)
            mid = eval_H(p, x, lam * a + (1 - lam) * b)
            bound = lam * eval_H(p, x, a) + (1 - lam) * eval_H(p, x, b)
            assert mid <= bound + 1e-6

    def test_monotone_probes(self, trp_2x2):
        """Signed-order probe pairs never decrease H (monotone base TRP)."""
        rng = np.random.default_rng(23)
        lo, hi = trp_2x2.support_lo, trp_2x2.support_hi
        x = np.array([6.0, 6.0])
        signs = trp_2x2.signs
        for _ in range(25):
            a = rng.uniform(lo, hi)
            b = rng.uniform(lo, hi)
            weak = np.where(signs > 0, np.minimum(a, b), np.maximum(a, b))
            hard = np.where(signs > 0, np.maximum(a, b), np.minimum(a, b))
            assert eval_H(trp_2x2.problem, x, weak) \
                <= eval_H(trp_2x2.problem, x, hard) + 1e-6
