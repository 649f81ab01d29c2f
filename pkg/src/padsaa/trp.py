"""Two-stage resource planning (TRP) instances.

First stage buys resource amounts x at unit costs c; after observing the
random data, amounts y_ik of resource i are allocated to customer type k:

    Q(x, xi) = min  q' y
               s.t. sum_k y_ik <= rho_i x_i          (capacity, i in [n])
                    sum_i mu_ik y_ik >= lambda_k     (demand,   k in [m])
                    y >= 0

with utilization rates rho, service rates mu and demands lambda random.
The base variant draws demand directly (xi = (rho, mu, lambda)) and is
monotone in (-rho, -mu, +lambda).  The factor variant replaces demand by a
linear factor model lambda_k = sum_q a_qk tau_q + h_k with tau uniform on
[-1, 1]^l (xi = (rho, mu, tau)), which breaks monotonicity in the demand
part.

Distribution parameters and the cost scheme follow documented
reconstruction defaults (sources for the original instance scheme are not
fully specified); everything is overridable through
:class:`TRPParams` and recorded in instance provenance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .backend import FEASIBILITY_TOL, MathProgram
from .feasibility import eval_H
from .model import (DeterministicSecondStage, LinearScenarioMap,
                    PolyhedralSet, TwoStageProblem)
from .sampling import (Constant, DistributionSpec, SampleSet, TruncatedNormal,
                       Uniform)


@dataclass(frozen=True)
class TRPParams:
    """Distribution parameter block (reconstruction defaults)."""

    rho_mean: float = 1.0
    rho_sigma: float = 0.05
    mu_mean_range: tuple = (0.5, 1.5)
    mu_sigma_frac: float = 0.07
    demand_mean_range: tuple = (80.0, 120.0)
    demand_sigma_frac: float = 0.12
    cost_range: tuple = (1.0, 2.0)
    alloc_cost_range: tuple = (0.2, 0.8)
    factor_offset_mean: float = 11.0
    factor_offset_std: float = 2.5
    factor_loading_std: float = 1.0


@dataclass(frozen=True)
class TRPConfig:
    n: int
    m: int
    p: int = 0
    l: int = 0
    demand_scale: float = 0.1
    seed: int = 0
    params: TRPParams = field(default_factory=TRPParams)

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.l < 0:
            raise ValueError("need n, m >= 1 and l >= 0")
        if self.p not in (0, self.n):
            raise ValueError("first stage is continuous (p=0) or pure integer (p=n)")
        if not self.demand_scale > 0:
            raise ValueError("demand_scale must be positive")


@dataclass(frozen=True, eq=False)
class TRPInstance:
    """A generated instance: the induced problem, the xi layout, monotone
    signs, the exact support box and the certification data for the
    hardest scenario."""

    problem: TwoStageProblem
    spec: DistributionSpec
    config: TRPConfig
    variant: str
    rho_slice: slice
    mu_slice: slice
    demand_slice: slice
    signs: np.ndarray
    support_lo: np.ndarray
    support_hi: np.ndarray
    cert_problem: TwoStageProblem
    cert_hardest: np.ndarray
    generation: dict

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def m(self) -> int:
        return self.config.m

    def metadata(self) -> dict:
        return {
            "variant": self.variant,
            "config": {**asdict(self.config), "params": asdict(self.config.params)},
            "distribution": self.spec.to_dict(),
            "signs": self.signs.tolist(),
            "generation": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                           for k, v in self.generation.items()},
        }


def _marginal(mean: float, sigma: float):
    return Constant(mean) if sigma == 0.0 else TruncatedNormal(mean, sigma)


def _mu_index(i: int, k: int, m: int) -> int:
    return i * m + k


def _build_map(n, m, Hbar_demand, q_base, d):
    """Assemble the column-wise map shared by both variants.

    Coordinates: rho in [0, n), mu in [n, n + n m), then the demand
    coordinates; column d is the internal constant.
    """
    nI = n + m
    n1, n2 = n, n * m
    Tk = np.zeros((n1, nI, d + 1))
    for i in range(n):
        Tk[i, i, i] = 1.0
    Wk = np.zeros((n2, nI, d + 1))
    for i in range(n):
        for k in range(m):
            y = _mu_index(i, k, m)
            Wk[y, i, d] = -1.0
            Wk[y, n + k, n + y] = 1.0
    Hbar = np.zeros((nI, d + 1))
    Hbar[n:, :] = Hbar_demand
    q_map = np.zeros((n2, d + 1))
    for i in range(n):
        for k in range(m):
            y = _mu_index(i, k, m)
            q_map[y, d] = 2.0 * q_base[i, k]
            q_map[y, i] = -q_base[i, k]
    return LinearScenarioMap(Tk=Tk, Wk=Wk, Hbar=Hbar, q_map=q_map, d=d)


def generate_trp(cfg: TRPConfig) -> TRPInstance:
    """Generate an instance, deterministic given the seed.

    The factor variant freezes the offsets h_k and loadings a_qk at
    generation time; demand scaling applies to the base variant only.
    """
    rng = np.random.default_rng(cfg.seed)
    par = cfg.params
    n, m, l = cfg.n, cfg.m, cfg.l
    variant = "factor" if l > 0 else "base"
    c = rng.uniform(*par.cost_range, n)
    mu_means = rng.uniform(*par.mu_mean_range, (n, m))
    q_base = rng.uniform(*par.alloc_cost_range, (n, m))

    marginals = [_marginal(par.rho_mean, par.rho_sigma) for _ in range(n)]
    marginals += [_marginal(mu_means[i, k], par.mu_sigma_frac * mu_means[i, k])
                  for i in range(n) for k in range(m)]
    generation = {"c": c, "mu_means": mu_means, "q_base": q_base}

    n_demand = m if variant == "base" else l
    d = n + n * m + n_demand
    if variant == "base":
        demand_means = rng.uniform(*par.demand_mean_range, m) * cfg.demand_scale
        marginals += [_marginal(demand_means[k], par.demand_sigma_frac * demand_means[k])
                      for k in range(m)]
        Hbar_demand = np.zeros((m, d + 1))
        for k in range(m):
            Hbar_demand[k, n + n * m + k] = 1.0
        generation["demand_means"] = demand_means
        signs = np.concatenate([-np.ones(n), -np.ones(n * m), np.ones(m)]).astype(int)
    else:
        offsets = rng.normal(par.factor_offset_mean, par.factor_offset_std, m)
        loadings = rng.normal(0.0, par.factor_loading_std, (l, m))
        marginals += [Uniform(-1.0, 1.0) for _ in range(l)]
        Hbar_demand = np.zeros((m, d + 1))
        Hbar_demand[:, n + n * m:d] = loadings.T
        Hbar_demand[:, d] = offsets
        generation["factor_offsets"] = offsets
        generation["factor_loadings"] = loadings
        signs = np.concatenate([-np.ones(n), -np.ones(n * m), np.zeros(l)]).astype(int)

    spec = DistributionSpec(tuple(marginals))
    smap = _build_map(n, m, Hbar_demand, q_base, d)
    problem = TwoStageProblem(
        c=c,
        X=PolyhedralSet(-np.eye(n), np.zeros(n),
                        frozenset(range(n)) if cfg.p == n else frozenset()),
        det=DeterministicSecondStage.nonnegativity(n * m, n),
        scenario_map=smap,
        name=f"trp-{variant}-{n}x{m}" + (f"-l{l}" if l else ""),
    )
    lo, hi = spec.support()

    if variant == "base":
        cert_problem = problem
        hardest = np.concatenate([lo[:n], lo[n:n + n * m], hi[n + n * m:]])
    else:
        # certification space uses demand coordinates directly; the factor
        # box tau in [-1,1]^l caps demand at h_k + sum_q |a_qk|
        d_cert = n + n * m + m
        Hc = np.zeros((m, d_cert + 1))
        for k in range(m):
            Hc[k, n + n * m + k] = 1.0
        cert_problem = TwoStageProblem(
            c=c,
            X=problem.X,
            det=problem.det,
            scenario_map=_build_map(n, m, Hc, q_base, d_cert),
            name=problem.name + "-certification",
        )
        lam_sup = generation["factor_offsets"] + np.abs(generation["factor_loadings"]).sum(axis=0)
        hardest = np.concatenate([lo[:n], lo[n:n + n * m], lam_sup])

    return TRPInstance(
        problem=problem,
        spec=spec,
        config=cfg,
        variant=variant,
        rho_slice=slice(0, n),
        mu_slice=slice(n, n + n * m),
        demand_slice=slice(n + n * m, d),
        signs=signs,
        support_lo=lo,
        support_hi=hi,
        cert_problem=cert_problem,
        cert_hardest=hardest,
        generation=generation,
    )


def build_trp_padded(inst: TRPInstance, sample, gamma: float) -> MathProgram:
    """The padded TRP LP, written directly from the assignment structure:
    standard SAA scenario blocks plus one z block with

        sum_k z_ik <= rho_min_i x_i - gamma
        sum_i mu_min_ik z_ik >= lambda_max_k + gamma.

    Base (monotone) variant only; the factor variant goes through
    constraint generation instead.
    """
    if inst.variant != "base":
        raise ValueError("padded TRP LP requires the base (monotone) variant")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    values = sample.values if isinstance(sample, SampleSet) else np.asarray(sample, dtype=float)
    n, m = inst.n, inst.m
    nm = n * m
    N = values.shape[0]
    rho = values[:, inst.rho_slice]
    mu = values[:, inst.mu_slice].reshape(N, n, m)
    lam = values[:, inst.demand_slice]
    q = inst.generation["q_base"][None, :, :] * (2.0 - rho[:, :, None])
    rho_min = rho.min(axis=0)
    mu_min = mu.min(axis=0)
    lam_max = lam.max(axis=0)

    n_vars = n + (N + 1) * nm
    rows_l, cols_l, vals_l, rhs_l, sense_l = [], [], [], [], []
    row = 0

    def block(rho_i, mu_ik, lam_k, col0, pad):
        nonlocal row
        for i in range(n):
            rows_l.extend([row] * (m + 1))
            cols_l.extend([col0 + _mu_index(i, k, m) for k in range(m)] + [i])
            vals_l.extend([1.0] * m + [-rho_i[i]])
            rhs_l.append(-pad)
            sense_l.append("<")
            row += 1
        for k in range(m):
            rows_l.extend([row] * n)
            cols_l.extend([col0 + _mu_index(i, k, m) for i in range(n)])
            vals_l.extend([mu_ik[i, k] for i in range(n)])
            rhs_l.append(lam_k[k] + pad)
            sense_l.append(">")
            row += 1

    for j in range(N):
        block(rho[j], mu[j], lam[j], n + j * nm, 0.0)
    block(rho_min, mu_min, lam_max, n + N * nm, float(gamma))

    objective = np.zeros(n_vars)
    objective[:n] = inst.generation["c"]
    objective[n:n + N * nm] = (q / N).reshape(N, nm).ravel()
    integrality = np.zeros(n_vars, dtype=bool)
    for k in inst.problem.X.integrality_mask:
        integrality[k] = True
    return MathProgram(
        n_vars=n_vars,
        objective=objective,
        row_ind=np.array(rows_l, dtype=int),
        col_ind=np.array(cols_l, dtype=int),
        values=np.array(vals_l, dtype=float),
        senses=np.array(sense_l, dtype="U1"),
        rhs=np.array(rhs_l, dtype=float),
        lower=np.zeros(n_vars),
        upper=np.full(n_vars, np.inf),
        integrality=integrality,
        name="trp-padded",
    )


def hardest_scenario(inst: TRPInstance) -> np.ndarray:
    """Per-coordinate essential extreme in the monotone direction, in the
    coordinates of ``inst.cert_problem`` (for the factor variant, demand is
    capped by the factor box)."""
    if not np.all(np.isfinite(inst.cert_hardest)):
        raise ValueError("unbounded support: no hardest scenario")
    return inst.cert_hardest.copy()


def is_completely_reliable(inst: TRPInstance, x) -> bool:
    """Recourse feasibility at the hardest scenario certifies phi(x) = 1."""
    return eval_H(inst.cert_problem, x, hardest_scenario(inst)) <= FEASIBILITY_TOL
