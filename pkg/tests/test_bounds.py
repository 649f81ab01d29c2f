"""Bound calculators against arbitrary-precision oracles, plus monotonicity."""

import math

import mpmath as mp
import numpy as np
import pytest

from padsaa.bounds import (FiniteXBoundInputs, LPBoundInputs,
                           PaddingBoundInputs, basic_solution_count_bound,
                           feasibility_prob_bound, sample_size_finite_X,
                           sample_size_padded, sample_size_two_stage_lp)

mp.mp.dps = 60


def ulps(value: float, n: int = 2) -> float:
    return n * math.ulp(max(abs(value), 1e-300))


def oracle_count_bound(n1, n2, m1, m2):
    return (-mp.loggamma(n1 + 1) + n1 * mp.log(2 * n1 + m1)
            + 2 * n1 * (n2 + 1) * mp.log(m2) - 2 * n1 * mp.loggamma(n2 + 2))


def oracle_prob_bound(N, eps, n1, n2, m1, m2):
    log_binom = (mp.loggamma(N + 1) - mp.loggamma(n1 + 1)
                 - mp.loggamma(N - n1 + 1))
    if eps == 1.0:
        return mp.mpf(1) if N > n1 else max(
            mp.mpf(0), 1 - mp.exp(log_binom + oracle_count_bound(n1, n2, m1, m2)))
    term = log_binom + oracle_count_bound(n1, n2, m1, m2) \
        + (N - n1) * mp.log(1 - mp.mpf(eps))
    return max(mp.mpf(0), 1 - mp.exp(term))


def oracle_lp_sample_size(eps, beta, n1, n2, m1, m2):
    eps, beta = mp.mpf(eps), mp.mpf(beta)
    v = (2 / eps) * mp.log(1 / beta) \
        + (4 * n1 * n2 / eps) * (mp.log(mp.mpf(m2) / (n2 + 1)) + 1) \
        + (2 * n1 / eps) * (mp.log(mp.mpf(m1) / n1 + 2) + mp.log(2 / eps) + 1) \
        + 2 * n1
    return v


class TestBasicSolutionCountBound:
    def test_minimal_case_log12(self):
        """n1=1, m1=1, n2=1, m2=2: (1/1!) 3^1 (2^2/2!)^2 = 12."""
        assert basic_solution_count_bound(1, 1, 1, 2) == \
            pytest.approx(math.log(12.0), abs=1e-14)

    def test_exact_rational_case(self):
        """n1=2, m1=2, n2=1, m2=2: (1/2) 6^2 2^4 = 288."""
        assert basic_solution_count_bound(2, 1, 2, 2) == \
            pytest.approx(math.log(288.0), abs=1e-13)

    def test_monotone_in_m2(self):
        values = [basic_solution_count_bound(2, 3, 4, m2) for m2 in (4, 8, 16)]
        assert values[0] < values[1] < values[2]

    def test_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n1 = int(rng.integers(1, 20))
            n2 = int(rng.integers(1, 30))
            m1 = int(rng.integers(1, 40))
            m2 = int(rng.integers(n2 + 1, n2 + 50))
            got = basic_solution_count_bound(n1, n2, m1, m2)
            want = float(oracle_count_bound(n1, n2, m1, m2))
            assert abs(got - want) <= ulps(want, 4)

    def test_domain(self):
        with pytest.raises(ValueError):
            basic_solution_count_bound(1, 3, 1, 3)


class TestFeasibilityProbBound:
    def test_eps_one_certain(self):
        assert feasibility_prob_bound(10, 1.0, 1, 1, 1, 2) == 1.0

    def test_tiny_exact_rational(self):
        """n1=1, m1=1, n2=1, m2=2, N=10, eps=1/2: 1 - 10*12/2^9 = 49/64."""
        got = feasibility_prob_bound(10, 0.5, 1, 1, 1, 2)
        assert got == pytest.approx(49.0 / 64.0, abs=1e-15)

    def test_clamped_at_zero(self):
        assert feasibility_prob_bound(5, 0.01, 2, 3, 4, 8) == 0.0

    def test_nondecreasing_beyond_crossover(self):
        values = [feasibility_prob_bound(N, 0.3, 1, 1, 1, 2)
                  for N in range(40, 240, 20)]
        positive = [v for v in values if v > 0]
        assert np.all(np.diff(positive) >= 0)

    def test_against_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n1 = int(rng.integers(1, 6))
            n2 = int(rng.integers(1, 6))
            m1 = int(rng.integers(1, 10))
            m2 = int(rng.integers(n2 + 1, n2 + 10))
            N = int(rng.integers(n1, 400))
            eps = float(rng.uniform(0.05, 0.95))
            got = feasibility_prob_bound(N, eps, n1, n2, m1, m2)
            want = float(oracle_prob_bound(N, eps, n1, n2, m1, m2))
            assert abs(got - want) <= max(ulps(want, 8), 1e-13)

    def test_rejects_small_N(self):
        with pytest.raises(ValueError):
            feasibility_prob_bound(2, 0.5, 3, 1, 1, 2)


class TestTwoStageLPSampleSize:
    def test_frozen_regression_constant(self):
        """(0.05, 0.01, 10, 20, 10, 30): high-precision value 24226.0026,
        so the ceiling is 24227."""
        inputs = LPBoundInputs(eps=0.05, beta=0.01, n1=10, n2=20, m1=10, m2=30)
        assert sample_size_two_stage_lp(inputs) == 24227

    def test_beta_halving_monotone(self):
        a = sample_size_two_stage_lp(LPBoundInputs(0.1, 0.02, 5, 5, 5, 10))
        b = sample_size_two_stage_lp(LPBoundInputs(0.1, 0.01, 5, 5, 5, 10))
        assert b >= a
        # the increment is governed by the (2/eps) log 2 term
        assert b - a <= math.ceil((2 / 0.1) * math.log(2)) + 1

    def test_doubling_n2_scales_dominant_term(self):
        """Doubling n2 (with m2 scaled along to stay in the calculator's
        domain) roughly doubles the dominant term."""
        base = sample_size_two_stage_lp(LPBoundInputs(0.05, 0.01, 10, 20, 10, 30))
        double = sample_size_two_stage_lp(LPBoundInputs(0.05, 0.01, 10, 40, 10, 60))
        assert 1.5 <= double / base <= 2.5

    def test_against_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n1 = int(rng.integers(1, 30))
            n2 = int(rng.integers(1, 40))
            m1 = int(rng.integers(1, 50))
            m2 = int(rng.integers(n2 + 1, n2 + 60))
            eps = float(rng.uniform(0.01, 0.9))
            beta = float(rng.uniform(0.001, 0.5))
            got = sample_size_two_stage_lp(
                LPBoundInputs(eps, beta, n1, n2, m1, m2))
            want = oracle_lp_sample_size(eps, beta, n1, n2, m1, m2)
            assert got == int(mp.ceil(want))

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            LPBoundInputs(0.0, 0.1, 1, 1, 1, 2)
        with pytest.raises(ValueError):
            LPBoundInputs(0.1, 1.0, 1, 1, 1, 2)
        with pytest.raises(ValueError):
            LPBoundInputs(0.1, 0.1, 1, 3, 1, 3)


class TestFiniteXSampleSize:
    def test_unit_rate_single_exclusion(self):
        """count=1, beta=1/e, rate=1: N = ceil(log e) = 1."""
        inputs = FiniteXBoundInputs(excluded_count=1, beta=1.0 / math.e,
                                    gamma_tilde=1.0)
        assert sample_size_finite_X(inputs) == 1

    def test_frozen_regression_constant(self):
        """(0.1, 100, 0.05): value 76.009..., ceiling 77."""
        inputs = FiniteXBoundInputs(excluded_count=100, beta=0.05,
                                    gamma_tilde=0.1)
        assert sample_size_finite_X(inputs) == 77

    def test_doubling_count_monotone(self):
        sizes = [sample_size_finite_X(
            FiniteXBoundInputs(excluded_count=c, beta=0.1, gamma_tilde=0.2))
            for c in (10, 20, 40, 80)]
        assert np.all(np.diff(sizes) >= 0)

    def test_sigma_path(self):
        """rate = min(eta, (eps-delta)^2 / (2 sigma^2))."""
        inputs = FiniteXBoundInputs(excluded_count=50, beta=0.05, eta=0.5,
                                    sigma=1.0, eps=0.4, delta=0.1)
        assert inputs.rate == pytest.approx(0.045)
        direct = FiniteXBoundInputs(excluded_count=50, beta=0.05,
                                    gamma_tilde=0.045)
        assert sample_size_finite_X(inputs) == sample_size_finite_X(direct)

    def test_against_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            count = int(rng.integers(1, 10_000))
            beta = float(rng.uniform(0.001, 0.9))
            rate = float(rng.uniform(0.01, 2.0))
            got = sample_size_finite_X(FiniteXBoundInputs(
                excluded_count=count, beta=beta, gamma_tilde=rate))
            want = max(1, int(mp.ceil(mp.log(mp.mpf(count) / mp.mpf(beta))
                                      / mp.mpf(rate))))
            assert got == want

    def test_requires_delta_below_eps(self):
        with pytest.raises(ValueError):
            FiniteXBoundInputs(excluded_count=5, beta=0.1, eta=0.5, sigma=1.0,
                               eps=0.1, delta=0.2)


class TestPaddedSampleSizes:
    def test_degenerate_eta_one(self):
        inputs = PaddingBoundInputs(d=1, diameter=1.0, lipschitz=1.0,
                                    gamma=1.0, eta=1.0, beta=1.0 / math.e)
        assert sample_size_padded(inputs, "product_marginal") == 1

    def test_frozen_product_marginal(self):
        """(5, 2, 3, 0.5, 0.1, 0.05): value 70.90..., ceiling 71."""
        inputs = PaddingBoundInputs(d=5, diameter=2.0, lipschitz=3.0,
                                    gamma=0.5, eta=0.1, beta=0.05)
        assert sample_size_padded(inputs, "product_marginal") == 71

    def test_frozen_rhs_only(self):
        """(3, 8, 0.2, 0.01): value 64.61..., ceiling 65."""
        inputs = PaddingBoundInputs(n2=3, m2=8, eta_tilde=0.2, eps=0.01)
        assert sample_size_padded(inputs, "rhs_only") == 65

    def test_against_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            d = int(rng.integers(1, 50))
            D = float(rng.uniform(0.1, 10))
            L = float(rng.uniform(0.1, 10))
            gamma = float(rng.uniform(0.01, 2))
            eta = float(rng.uniform(0.01, 1.0))
            beta = float(rng.uniform(0.001, 0.9))
            got = sample_size_padded(PaddingBoundInputs(
                d=d, diameter=D, lipschitz=L, gamma=gamma, eta=eta, beta=beta),
                "product_marginal")
            want = max(1, int(mp.ceil(
                (mp.log(mp.mpf(d) * mp.mpf(D) * mp.mpf(L) / mp.mpf(gamma))
                 + mp.log(1 / mp.mpf(beta))) / mp.mpf(eta))))
            assert got == want
        for _ in range(20):
            n2 = int(rng.integers(1, 30))
            m2 = int(rng.integers(n2 + 1, n2 + 40))
            eta_t = float(rng.uniform(0.01, 1.0))
            eps = float(rng.uniform(0.001, 0.9))
            got = sample_size_padded(PaddingBoundInputs(
                n2=n2, m2=m2, eta_tilde=eta_t, eps=eps), "rhs_only")
            want = max(1, int(mp.ceil(
                ((n2 + 1) * mp.log(m2) + mp.log(1 / mp.mpf(eps)))
                / mp.mpf(eta_t))))
            assert got == want

    def test_rejects_bad_rates(self):
        with pytest.raises(ValueError):
            sample_size_padded(PaddingBoundInputs(
                d=1, diameter=1.0, lipschitz=1.0, gamma=0.5, eta=1.2,
                beta=0.1), "product_marginal")
        with pytest.raises(ValueError):
            sample_size_padded(PaddingBoundInputs(
                n2=2, m2=5, eta_tilde=0.0, eps=0.1), "rhs_only")
        with pytest.raises(ValueError):
            sample_size_padded(PaddingBoundInputs(), "unknown")


class TestMonotonicitySuite:
    """Sample sizes nonincreasing in the risk/rate inputs, nondecreasing in
    the size inputs."""

    def test_two_stage_lp_directions(self):
        base = dict(eps=0.1, beta=0.05, n1=4, n2=6, m1=8, m2=12)
        ref = sample_size_two_stage_lp(LPBoundInputs(**base))
        for key, larger in (("eps", 0.2), ("beta", 0.1)):
            case = dict(base, **{key: larger})
            assert sample_size_two_stage_lp(LPBoundInputs(**case)) <= ref
        for key, larger in (("n1", 5), ("n2", 7), ("m1", 9), ("m2", 13)):
            case = dict(base, **{key: larger})
            assert sample_size_two_stage_lp(LPBoundInputs(**case)) >= ref

    def test_finite_X_directions(self):
        ref = sample_size_finite_X(FiniteXBoundInputs(
            excluded_count=100, beta=0.05, gamma_tilde=0.1))
        assert sample_size_finite_X(FiniteXBoundInputs(
            excluded_count=100, beta=0.05, gamma_tilde=0.2)) <= ref
        assert sample_size_finite_X(FiniteXBoundInputs(
            excluded_count=100, beta=0.1, gamma_tilde=0.1)) <= ref
        assert sample_size_finite_X(FiniteXBoundInputs(
            excluded_count=200, beta=0.05, gamma_tilde=0.1)) >= ref

    def test_padded_directions(self):
        base = dict(d=5, diameter=2.0, lipschitz=3.0, gamma=0.5, eta=0.1,
                    beta=0.05)
        ref = sample_size_padded(PaddingBoundInputs(**base), "product_marginal")
        for key, larger, direction in (("eta", 0.2, -1), ("beta", 0.1, -1),
                                       ("d", 10, 1), ("diameter", 4.0, 1),
                                       ("lipschitz", 6.0, 1)):
            case = dict(base, **{key: larger})
            got = sample_size_padded(PaddingBoundInputs(**case),
                                     "product_marginal")
            assert (got - ref) * direction >= 0 or got == ref
        rhs = dict(n2=3, m2=8, eta_tilde=0.2, eps=0.01)
        ref2 = sample_size_padded(PaddingBoundInputs(**rhs), "rhs_only")
        assert sample_size_padded(PaddingBoundInputs(
            **dict(rhs, eta_tilde=0.4)), "rhs_only") <= ref2
        assert sample_size_padded(PaddingBoundInputs(
            **dict(rhs, m2=16)), "rhs_only") >= ref2
        assert sample_size_padded(PaddingBoundInputs(
            **dict(rhs, n2=4)), "rhs_only") >= ref2
