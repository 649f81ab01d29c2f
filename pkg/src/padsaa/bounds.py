"""Closed-form sample-size and confidence calculators.

Pure log-space arithmetic, no solver.  Rate constants (eta, eta-tilde,
gamma-tilde, Lipschitz constants, diameters, sub-Gaussian sigma) are
defined through the unknown true distribution, so they enter here as
user-supplied inputs and are never estimated internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _check_prob(value: float, name: str, closed_top: bool = False) -> None:
    hi_ok = value <= 1.0 if closed_top else value < 1.0
    if not (0.0 < value and hi_ok):
        top = "]" if closed_top else ")"
        raise ValueError(f"{name} must lie in (0, 1{top}, got {value}")


def _check_pos_int(value: int, name: str) -> None:
    if not (isinstance(value, (int,)) and value >= 1):
        raise ValueError(f"{name} must be a positive integer, got {value}")


@dataclass(frozen=True)
class LPBoundInputs:
    """Dimensions and risk levels for the two-stage LP recourse-likelihood
    bounds."""

    eps: float
    beta: float
    n1: int
    n2: int
    m1: int
    m2: int

    def __post_init__(self):
        _check_prob(self.eps, "eps")
        _check_prob(self.beta, "beta")
        for v, name in ((self.n1, "n1"), (self.n2, "n2"), (self.m1, "m1"),
                        (self.m2, "m2")):
            _check_pos_int(v, name)
        if self.m2 < self.n2 + 1:
            raise ValueError(f"m2={self.m2} must be >= n2+1={self.n2 + 1}")


@dataclass(frozen=True)
class FiniteXBoundInputs:
    """Inputs for the finite-feasible-region convergence sample size.

    Either supply the rate ``gamma_tilde`` directly, or supply ``eta``
    together with a sub-Gaussian constant ``sigma`` and the optimality
    levels ``eps > delta``; the rate is then min(eta, (eps-delta)^2/(2 sigma^2)).
    """

    excluded_count: int
    beta: float
    gamma_tilde: float | None = None
    eta: float | None = None
    sigma: float | None = None
    eps: float | None = None
    delta: float | None = None

    def __post_init__(self):
        _check_pos_int(self.excluded_count, "excluded_count")
        _check_prob(self.beta, "beta")
        if self.gamma_tilde is not None:
            if not self.gamma_tilde > 0:
                raise ValueError("gamma_tilde must be positive")
            return
        if None in (self.eta, self.sigma, self.eps, self.delta):
            raise ValueError("need gamma_tilde, or (eta, sigma, eps, delta)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.delta < self.eps:
            raise ValueError("need 0 <= delta < eps")

    @property
    def rate(self) -> float:
        if self.gamma_tilde is not None:
            return self.gamma_tilde
        return min(self.eta, (self.eps - self.delta) ** 2 / (2.0 * self.sigma ** 2))


@dataclass(frozen=True)
class PaddingBoundInputs:
    """Inputs for the padded-SAA complete-reliability sample sizes.

    ``d``, ``diameter``, ``lipschitz``, ``gamma``, ``eta`` and ``beta``
    feed the product-marginal bound; ``n2``, ``m2``, ``eta_tilde`` and
    ``eps`` feed the rhs-only bound.
    """

    d: int | None = None
    diameter: float | None = None
    lipschitz: float | None = None
    gamma: float | None = None
    eta: float | None = None
    beta: float | None = None
    n2: int | None = None
    m2: int | None = None
    eta_tilde: float | None = None
    eps: float | None = None


def basic_solution_count_bound(n1: int, n2: int, m1: int, m2: int) -> float:
    """Natural log of the cap on basic solutions of the scenario-subset
    system: (1/n1!) (2 n1 + m1)^n1 (m2^{n2+1} / (n2+1)!)^{2 n1}."""
    for v, name in ((n1, "n1"), (n2, "n2"), (m1, "m1"), (m2, "m2")):
        _check_pos_int(v, name)
    if m2 < n2 + 1:
        raise ValueError(f"m2={m2} must be >= n2+1={n2 + 1}")
    return math.fsum([
        -math.lgamma(n1 + 1),
        n1 * math.log(2 * n1 + m1),
        2 * n1 * (n2 + 1) * math.log(m2),
        -2 * n1 * math.lgamma(n2 + 2),
    ])


def feasibility_prob_bound(N: int, eps: float, n1: int, n2: int, m1: int,
                           m2: int) -> float:
    """Lower bound on P(recourse likelihood of a basic SAA optimum >= 1-eps):
    1 - C(N, n1) * count_bound * (1-eps)^{N-n1}, clamped below at 0."""
    _check_pos_int(N, "N")
    if N < n1:
        raise ValueError(f"N={N} must be at least n1={n1}")
    if not (0.0 < eps <= 1.0):
        raise ValueError("eps must lie in (0, 1]")
    log_count = basic_solution_count_bound(n1, n2, m1, m2)
    log_binom = math.lgamma(N + 1) - math.lgamma(n1 + 1) - math.lgamma(N - n1 + 1)
    if eps == 1.0:
        return 1.0 if N > n1 else max(0.0, 1.0 - math.exp(log_binom + log_count))
    log_term = math.fsum([log_binom, log_count, (N - n1) * math.log1p(-eps)])
    return max(0.0, 1.0 - math.exp(log_term))


def sample_size_two_stage_lp(inputs: LPBoundInputs) -> int:
    """Smallest N certifying recourse likelihood >= 1-eps with confidence
    1-beta for a basic SAA optimum of a two-stage LP:

        (2/eps) log(1/beta) + (4 n1 n2 / eps)(log(m2/(n2+1)) + 1)
        + (2 n1 / eps)(log(m1/n1 + 2) + log(2/eps) + 1) + 2 n1.
    """
    eps, beta = inputs.eps, inputs.beta
    n1, n2, m1, m2 = inputs.n1, inputs.n2, inputs.m1, inputs.m2
    value = math.fsum([
        (2.0 / eps) * math.log(1.0 / beta),
        (4.0 * n1 * n2 / eps) * (math.log(m2 / (n2 + 1.0)) + 1.0),
        (2.0 * n1 / eps) * math.fsum([math.log(m1 / n1 + 2.0),
                                      math.log(2.0 / eps), 1.0]),
        2.0 * n1,
    ])
    return math.ceil(value)


def sample_size_finite_X(inputs: FiniteXBoundInputs) -> int:
    """Smallest N with P(every delta-optimal SAA point is eps-optimal and
    completely reliable) >= 1-beta: ceil(log(|excluded|/beta) / rate)."""
    value = (math.log(inputs.excluded_count) - math.log(inputs.beta)) / inputs.rate
    return max(1, math.ceil(value))


def sample_size_padded(inputs: PaddingBoundInputs, which: str) -> int:
    """Sample size for completely reliable padded-SAA solutions.

    ``product_marginal``: ceil((log(d D L / gamma) + log(1/beta)) / eta).
    ``rhs_only``: ceil(((n2+1) log(m2) + log(1/eps)) / eta_tilde), using the
    m2^{n2+1} cap on the number of dual extreme points.
    """
    if which == "product_marginal":
        for v, name in ((inputs.d, "d"), (inputs.diameter, "diameter"),
                        (inputs.lipschitz, "lipschitz"), (inputs.gamma, "gamma"),
                        (inputs.eta, "eta"), (inputs.beta, "beta")):
            if v is None:
                raise ValueError(f"product_marginal bound needs {name}")
        _check_pos_int(inputs.d, "d")
        for v, name in ((inputs.diameter, "diameter"),
                        (inputs.lipschitz, "lipschitz"), (inputs.gamma, "gamma")):
            if not v > 0:
                raise ValueError(f"{name} must be positive")
        _check_prob(inputs.eta, "eta", closed_top=True)
        _check_prob(inputs.beta, "beta")
        value = math.fsum([
            math.log(inputs.d * inputs.diameter * inputs.lipschitz / inputs.gamma),
            math.log(1.0 / inputs.beta),
        ]) / inputs.eta
        return max(1, math.ceil(value))
    if which == "rhs_only":
        for v, name in ((inputs.n2, "n2"), (inputs.m2, "m2"),
                        (inputs.eta_tilde, "eta_tilde"), (inputs.eps, "eps")):
            if v is None:
                raise ValueError(f"rhs_only bound needs {name}")
        _check_pos_int(inputs.n2, "n2")
        _check_pos_int(inputs.m2, "m2")
        if inputs.m2 < inputs.n2 + 1:
            raise ValueError("m2 must be >= n2+1")
        _check_prob(inputs.eta_tilde, "eta_tilde", closed_top=True)
        _check_prob(inputs.eps, "eps")
        value = math.fsum([
            (inputs.n2 + 1) * math.log(inputs.m2),
            math.log(1.0 / inputs.eps),
        ]) / inputs.eta_tilde
        return max(1, math.ceil(value))
    raise ValueError(f"unknown padded bound {which!r}")
