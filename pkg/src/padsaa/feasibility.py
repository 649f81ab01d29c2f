"""Recourse feasibility and value: H(x, xi), Q(x, xi) and Monte Carlo
estimates of the recourse likelihood phi(x).

H(x, xi) is the least uniform slack eta making the random second-stage
rows satisfiable while the deterministic block holds exactly:

    H(x, xi) = min { eta : eta e + Wbar(xi) y >= hbar(xi) - Tbar(xi) x,
                           D y >= d - C x }.

A point x has a feasible recourse action at xi exactly when
H(x, xi) <= 0; numerically the shared ``FEASIBILITY_TOL`` stands in for 0.
Recourse infeasibility of Q is reported through the explicit
:data:`INFEASIBLE` sentinel rather than a floating +inf so that averaging
code has to handle it deliberately.

Likelihood estimation evaluates H over tens of thousands of scenarios.
For problems with a linear scenario map this module keeps a pool of
previously optimal recourse actions: any pooled y whose random-row slack
is nonpositive at a scenario certifies H <= 0 there via a single matrix
product, so explicit LP solves are needed only for scenarios no pooled
action certifies (in particular the rare infeasible ones).
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .backend import FEASIBILITY_TOL, MathProgram, solve_lp
from .model import LinearScenarioMap, ScenarioRealization, TwoStageProblem
from .sampling import DistributionSpec, SampleSet, draw_iid_sample


class Infeasible:
    """Sentinel for 'no feasible recourse action'; compares only to itself."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"


INFEASIBLE = Infeasible()


def is_infeasible(value) -> bool:
    return value is INFEASIBLE


class DeterministicBlockInfeasibleError(RuntimeError):
    """{y : Dy >= d - Cx} is empty at this x, violating the standing
    contract that the deterministic block is always satisfiable."""


class UnboundedRecourseError(RuntimeError):
    """The recourse LP is unbounded below: a model defect."""


@dataclass(frozen=True)
class RecourseEval:
    H_value: float
    Q_value: float | Infeasible
    feasible: bool


@dataclass(frozen=True)
class LikelihoodEstimate:
    """phi_hat with its 95% normal-approximation halfwidth."""

    phi_hat: float
    M: int
    ci_halfwidth: float
    seed: int


# --- per-problem LP kernel ---------------------------------------------------

class _Kernel:
    """Second-stage LP skeleton: deterministic rows split into variable
    bounds (single-nonzero D rows with zero C rows) and general rows, plus
    precomputed triplet templates."""

    def __init__(self, p: TwoStageProblem):
        det = p.det
        n2 = p.n2
        lb = np.full(n2, -np.inf)
        ub = np.full(n2, np.inf)
        general = []
        nonzero_per_row = (det.D != 0).sum(axis=1)
        c_zero = ~det.C.any(axis=1) if det.rows else np.zeros(0, dtype=bool)
        for i in range(det.rows):
            if nonzero_per_row[i] == 1 and c_zero[i]:
                k = int(np.flatnonzero(det.D[i])[0])
                coef = det.D[i, k]
                bound = det.d[i] / coef
                if coef > 0:
                    lb[k] = max(lb[k], bound)
                else:
                    ub[k] = min(ub[k], bound)
            else:
                general.append(i)
        self.problem = p
        self.y_lower = lb
        self.y_upper = ub
        self.gen_rows = np.array(general, dtype=int)
        self.D_gen = det.D[self.gen_rows] if self.gen_rows.size else np.zeros((0, n2))
        self.C_gen = det.C[self.gen_rows] if self.gen_rows.size else np.zeros((0, p.n1))
        self.d_gen = det.d[self.gen_rows] if self.gen_rows.size else np.zeros(0)
        if np.any(lb > ub):
            raise DeterministicBlockInfeasibleError(
                "deterministic bound rows are contradictory")

    def det_rhs(self, x: np.ndarray) -> np.ndarray:
        return self.d_gen - self.C_gen @ x


_kernels: "weakref.WeakKeyDictionary[TwoStageProblem, _Kernel]" = weakref.WeakKeyDictionary()


def kernel_for(p: TwoStageProblem) -> _Kernel:
    kern = _kernels.get(p)
    if kern is None:
        kern = _Kernel(p)
        _kernels[p] = kern
    return kern


def _stage_program(kern: _Kernel, rz: ScenarioRealization, x: np.ndarray,
                   with_eta: bool, relax: float = 0.0) -> MathProgram:
    p = kern.problem
    n2 = p.n2
    nI = rz.n_rows
    off = 1 if with_eta else 0
    rows_parts, cols_parts, vals_parts = [], [], []
    wi, wk = np.nonzero(rz.Wbar)
    rows_parts.append(wi)
    cols_parts.append(wk + off)
    vals_parts.append(rz.Wbar[wi, wk])
    if with_eta:
        rows_parts.append(np.arange(nI))
        cols_parts.append(np.zeros(nI, dtype=int))
        vals_parts.append(np.ones(nI))
    rhs_rand = rz.hbar - rz.Tbar @ x - relax
    n_gen = kern.gen_rows.size
    if n_gen:
        gi, gk = np.nonzero(kern.D_gen)
        rows_parts.append(gi + nI)
        cols_parts.append(gk + off)
        vals_parts.append(kern.D_gen[gi, gk])
    rhs = np.concatenate([rhs_rand, kern.det_rhs(x)])
    if with_eta:
        objective = np.zeros(n2 + 1)
        objective[0] = 1.0
        lower = np.concatenate([[-np.inf], kern.y_lower])
        upper = np.concatenate([[np.inf], kern.y_upper])
    else:
        objective = rz.q.copy()
        lower = kern.y_lower
        upper = kern.y_upper
    return MathProgram(
        n_vars=n2 + off,
        objective=objective,
        row_ind=np.concatenate(rows_parts) if rows_parts else np.zeros(0, dtype=int),
        col_ind=np.concatenate(cols_parts) if cols_parts else np.zeros(0, dtype=int),
        values=np.concatenate(vals_parts) if vals_parts else np.zeros(0),
        senses=np.full(nI + n_gen, ">"),
        rhs=rhs,
        lower=lower,
        upper=upper,
        integrality=np.zeros(n2 + off, dtype=bool),
        name="feasibility-lp" if with_eta else "recourse-lp",
    )


def eval_H_realized(p: TwoStageProblem, x: np.ndarray, rz: ScenarioRealization,
                    return_y: bool = False):
    """H at an already-realized scenario; optionally also the minimizing y."""
    x = np.asarray(x, dtype=float)
    kern = kernel_for(p)
    res = solve_lp(_stage_program(kern, rz, x, with_eta=True))
    if res.status == "infeasible":
        raise DeterministicBlockInfeasibleError(
            f"deterministic block has no feasible y at x={x!r}")
    if res.status == "unbounded":
        # dual of the feasibility LP is empty; every slack level is attainable
        return (-math.inf, None) if return_y else -math.inf
    res.require_optimal()
    value = float(res.objective)
    if return_y:
        return value, res.x[1:].copy()
    return value


def eval_H(p: TwoStageProblem, x, xi) -> float:
    """Feasibility function value; H(x, xi) <= 0 iff recourse is feasible."""
    return eval_H_realized(p, np.asarray(x, dtype=float), p.realize(xi))


def eval_Q_realized(p: TwoStageProblem, x: np.ndarray, rz: ScenarioRealization,
                    relax: float = 0.0):
    x = np.asarray(x, dtype=float)
    kern = kernel_for(p)
    res = solve_lp(_stage_program(kern, rz, x, with_eta=False, relax=relax))
    if res.status == "infeasible":
        return INFEASIBLE
    if res.status == "unbounded":
        raise UnboundedRecourseError(
            "recourse LP unbounded below; objective is not bounded by an "
            "integrable minorant")
    res.require_optimal()
    return float(res.objective)


def eval_Q(p: TwoStageProblem, x, xi):
    """Second-stage optimal value, or INFEASIBLE when no recourse exists."""
    return eval_Q_realized(p, np.asarray(x, dtype=float), p.realize(xi))


def eval_recourse(p: TwoStageProblem, x, xi) -> RecourseEval:
    h = eval_H(p, x, xi)
    feasible = h <= FEASIBILITY_TOL
    q = eval_Q(p, x, xi) if feasible else INFEASIBLE
    return RecourseEval(H_value=h, Q_value=q, feasible=feasible)


# --- batch evaluation over many scenarios ------------------------------------

class HBatchEvaluator:
    """Shared machinery for classifying H(x, xi^j) over many scenarios.

    For linear scenario maps the slack of a candidate recourse action y at
    every scenario comes from one matrix product, giving a certified upper
    bound on H there; exact LP solves fill in the rest and feed the pool.
    """

    POOL_CAP = 64

    def __init__(self, p: TwoStageProblem, x, pool_cap: int | None = None):
        self.p = p
        self.x = np.asarray(x, dtype=float)
        self.kern = kernel_for(p)
        self.linear = p.has_linear_map
        self.pool: list[np.ndarray] = []
        self.exact_solves = 0
        if pool_cap is not None:
            self.POOL_CAP = pool_cap
        if self.linear:
            m: LinearScenarioMap = p.scenario_map
            # hbar(xi) - Tbar(xi) x  ==  (Hbar - sum_k x_k Tk[k]) @ aug(xi)
            self._coef_rhs = m.Hbar - np.einsum("kid,k->id", m.Tk, self.x)
            self._det_rhs = self.kern.det_rhs(self.x)

    def _wy(self, y: np.ndarray) -> np.ndarray:
        m: LinearScenarioMap = self.p.scenario_map
        return np.einsum("kid,k->id", m.Wk, y)

    def _pool_candidate_ok(self, y: np.ndarray) -> np.ndarray | None:
        y = np.clip(y, self.kern.y_lower, self.kern.y_upper)
        if self.kern.gen_rows.size:
            slack = self.kern.D_gen @ y - self._det_rhs
            if slack.min(initial=0.0) < -1e-9:
                return None
        return y

    def add_candidate(self, y: np.ndarray) -> bool:
        if not self.linear or len(self.pool) >= self.POOL_CAP:
            return False
        y = self._pool_candidate_ok(y)
        if y is None:
            return False
        self.pool.append(y)
        return True

    def upper_bounds(self, Z: np.ndarray, candidates=None) -> np.ndarray:
        """min over pooled actions of the worst random-row violation; a valid
        upper bound on H at each row of the augmented scenario matrix Z."""
        out = np.full(Z.shape[0], np.inf)
        for y in (self.pool if candidates is None else candidates):
            slack = self._coef_rhs @ Z.T - self._wy(y) @ Z.T
            np.minimum(out, slack.max(axis=0), out=out)
        return out

    def exact(self, xi_row: np.ndarray, collect: bool = True) -> float:
        rz = self.p.realize(xi_row)
        self.exact_solves += 1
        h, y = eval_H_realized(self.p, self.x, rz, return_y=True)
        if collect and y is not None and h <= FEASIBILITY_TOL:
            self.add_candidate(y)
        return h

    def seed_adverse_candidates(self, scenarios: np.ndarray, signs,
                                quantiles=(0.8, 0.95, 0.99, 0.999, 1.0)) -> None:
        """Pool recourse actions solved at synthetic per-coordinate quantile
        scenarios taken in the adverse (monotone) direction.

        Such actions carry slack at typical scenarios, so they certify far
        more of the sample than the tight optimizers of individual
        scenarios.  Quantile levels where even the synthetic scenario has no
        recourse are skipped.  Coordinates without a declared sign stay at
        their median.
        """
        if not self.linear:
            return
        signs = np.asarray(signs, dtype=int)
        scenarios = np.asarray(scenarios, dtype=float)
        for q in quantiles:
            lo = np.quantile(scenarios, 1.0 - q, axis=0)
            hi = np.quantile(scenarios, q, axis=0)
            mid = np.quantile(scenarios, 0.5, axis=0)
            xi = np.where(signs > 0, hi, np.where(signs < 0, lo, mid))
            h, y = eval_H_realized(self.p, self.x, self.p.realize(xi), return_y=True)
            if h <= FEASIBILITY_TOL and y is not None:
                self.add_candidate(y)

    def _exact_block(self, scenarios: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """H values for the given scenario rows via one block-diagonal LP
        (blocks decouple, so each attains its own optimum); falls back to
        per-scenario solves if the stacked LP does not solve cleanly."""
        realizations = [self.p.realize(scenarios[int(j)]) for j in rows]
        nv_block = self.p.n2 + 1
        rows_parts, cols_parts, vals_parts, rhs_parts = [], [], [], []
        row_off = 0
        gi, gk = np.nonzero(self.kern.D_gen)
        for b, rz in enumerate(realizations):
            col0 = b * nv_block
            nI = rz.n_rows
            wi, wk = np.nonzero(rz.Wbar)
            rows_parts.append(wi + row_off)
            cols_parts.append(wk + col0 + 1)
            vals_parts.append(rz.Wbar[wi, wk])
            rows_parts.append(np.arange(nI) + row_off)
            cols_parts.append(np.full(nI, col0))
            vals_parts.append(np.ones(nI))
            rhs_parts.append(rz.hbar - rz.Tbar @ self.x)
            row_off += nI
            if gi.size:
                rows_parts.append(gi + row_off)
                cols_parts.append(gk + col0 + 1)
                vals_parts.append(self.kern.D_gen[gi, gk])
                rhs_parts.append(self._det_rhs if self.linear
                                 else self.kern.det_rhs(self.x))
                row_off += self.kern.gen_rows.size
        nb = len(realizations)
        objective = np.zeros(nb * nv_block)
        objective[::nv_block] = 1.0
        lower = np.tile(np.concatenate([[-np.inf], self.kern.y_lower]), nb)
        upper = np.tile(np.concatenate([[np.inf], self.kern.y_upper]), nb)
        mp = MathProgram(
            n_vars=nb * nv_block, objective=objective,
            row_ind=np.concatenate(rows_parts),
            col_ind=np.concatenate(cols_parts),
            values=np.concatenate(vals_parts),
            senses=np.full(row_off, ">"),
            rhs=np.concatenate(rhs_parts),
            lower=lower, upper=upper,
            integrality=np.zeros(nb * nv_block, dtype=bool),
            name="feasibility-batch",
        )
        res = solve_lp(mp)
        self.exact_solves += nb
        if res.status == "optimal":
            out = res.x[::nv_block].copy()
            for b in range(min(4, nb)):
                if out[b] <= FEASIBILITY_TOL:
                    self.add_candidate(res.x[b * nv_block + 1:(b + 1) * nv_block])
            return out
        return np.array([self.exact(scenarios[int(j)], collect=False) for j in rows])

    def classify(self, scenarios: np.ndarray, threshold: float = FEASIBILITY_TOL,
                 block_size: int = 100) -> np.ndarray:
        """Boolean mask of scenarios with H(x, xi) <= threshold."""
        scenarios = np.asarray(scenarios, dtype=float)
        M = scenarios.shape[0]
        mask = np.zeros(M, dtype=bool)
        if not self.linear:
            for j in range(M):
                mask[j] = self.exact(scenarios[j], collect=False) <= threshold
            return mask
        m: LinearScenarioMap = self.p.scenario_map
        Z = m.augment_many(scenarios)
        # a certificate must imply H <= threshold even after the tiny slop a
        # pooled y may carry on deterministic rows
        margin = threshold - 1e-9
        pending = np.arange(M)
        if self.pool:
            bounds = self.upper_bounds(Z)
            mask[bounds <= margin] = True
            pending = pending[bounds[pending] > margin]
        while pending.size:
            chunk = pending[:block_size]
            pending = pending[block_size:]
            before = len(self.pool)
            hs = self._exact_block(scenarios, chunk)
            mask[chunk] = hs <= threshold
            if len(self.pool) > before and pending.size:
                sub = self.upper_bounds(Z[pending], candidates=self.pool[before:])
                certified = sub <= margin
                mask[pending[certified]] = True
                pending = pending[~certified]
        return mask


def feasible_scenario_mask(p: TwoStageProblem, x, scenarios,
                           threshold: float = FEASIBILITY_TOL,
                           signs=None) -> np.ndarray:
    values = scenarios.values if isinstance(scenarios, SampleSet) else np.asarray(scenarios)
    ev = HBatchEvaluator(p, x)
    if signs is not None:
        ev.seed_adverse_candidates(values, signs)
    return ev.classify(values, threshold)


def estimate_recourse_likelihood(p: TwoStageProblem, x, spec: DistributionSpec,
                                 M: int, seed: int, signs=None) -> LikelihoodEstimate:
    """phi_hat over a fresh iid evaluation sample, deterministic given the seed.

    ``signs`` optionally declares monotone directions of H in xi, used only
    to seed certification candidates (the counted values are unchanged).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    sample = draw_iid_sample(spec, M, seed)
    mask = feasible_scenario_mask(p, x, sample, signs=signs)
    phi = float(mask.sum()) / M
    half = 1.96 * math.sqrt(phi * (1.0 - phi) / M)
    return LikelihoodEstimate(phi_hat=phi, M=M, ci_halfwidth=half, seed=int(seed))


def eval_Q_batch(p: TwoStageProblem, x, scenarios, relax: float = 0.0,
                 feasible_mask: np.ndarray | None = None,
                 chunk_size: int = 200) -> list:
    """Per-scenario recourse values with INFEASIBLE propagation.

    Feasible scenarios are grouped into block-diagonal LPs (the blocks
    decouple, so each block attains its own optimum); a chunk that fails to
    solve falls back to per-scenario evaluation.
    """
    values = scenarios.values if isinstance(scenarios, SampleSet) else np.asarray(scenarios)
    x = np.asarray(x, dtype=float)
    N = values.shape[0]
    if feasible_mask is None:
        feasible_mask = feasible_scenario_mask(p, x, values)
    out: list = [INFEASIBLE] * N
    idx = np.flatnonzero(feasible_mask)
    kern = kernel_for(p)
    for start in range(0, idx.size, chunk_size):
        chunk = idx[start:start + chunk_size]
        result = _solve_q_chunk(p, kern, x, values, chunk, relax)
        if result is None:
            for j in chunk:
                out[int(j)] = eval_Q_realized(p, x, p.realize(values[int(j)]), relax=relax)
        else:
            for j, val in zip(chunk, result):
                out[int(j)] = val
    return out


def _solve_q_chunk(p, kern, x, values, chunk, relax):
    n2 = p.n2
    rows_parts, cols_parts, vals_parts, rhs_parts = [], [], [], []
    objective = np.empty(n2 * chunk.size)
    row_off = 0
    gi, gk = np.nonzero(kern.D_gen)
    det_rhs = kern.det_rhs(x)
    realizations = [p.realize(values[int(j)]) for j in chunk]
    for b, rz in enumerate(realizations):
        col0 = b * n2
        wi, wk = np.nonzero(rz.Wbar)
        rows_parts.append(wi + row_off)
        cols_parts.append(wk + col0)
        vals_parts.append(rz.Wbar[wi, wk])
        rhs_parts.append(rz.hbar - rz.Tbar @ x - relax)
        row_off += rz.n_rows
        if gi.size:
            rows_parts.append(gi + row_off)
            cols_parts.append(gk + col0)
            vals_parts.append(kern.D_gen[gi, gk])
            rhs_parts.append(det_rhs)
            row_off += kern.gen_rows.size
        objective[col0:col0 + n2] = rz.q
    mp = MathProgram(
        n_vars=n2 * chunk.size,
        objective=objective,
        row_ind=np.concatenate(rows_parts),
        col_ind=np.concatenate(cols_parts),
        values=np.concatenate(vals_parts),
        senses=np.full(row_off, ">"),
        rhs=np.concatenate(rhs_parts),
        lower=np.tile(kern.y_lower, chunk.size),
        upper=np.tile(kern.y_upper, chunk.size),
        integrality=np.zeros(n2 * chunk.size, dtype=bool),
        name="recourse-batch",
    )
    res = solve_lp(mp)
    if res.status != "optimal":
        return None
    return [
        float(rz.q @ res.x[b * n2:(b + 1) * n2])
        for b, rz in enumerate(realizations)
    ]
