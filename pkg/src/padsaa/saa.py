"""Standard SAA: the extensive-form program over a scenario sample, and an
exhaustive solver over an explicit finite candidate set.

The extensive form carries one recourse copy y^j per scenario:

    min  c'x + N^{-1} sum_j q(xi^j)' y^j
    s.t. A x <= b
         Wbar(xi^j) y^j >= hbar(xi^j) - Tbar(xi^j) x     for each j
         D y^j >= d - C x                                for each j

Feasibility of x against every sampled scenario (H(x, xi^j) <= 0) is
implied by the existence of the y^j copies.  Single-variable rows of X and
of the deterministic block are folded into variable bounds during
assembly, which keeps the row count at desk scale.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .backend import (FEASIBILITY_TOL, MathProgram, SOLVER_NAME, SolveResult,
                      solve_lp, solve_milp)
from .feasibility import (INFEASIBLE, HBatchEvaluator, eval_Q_batch,
                          is_infeasible)
from .model import LinearScenarioMap, TwoStageProblem
from .sampling import SampleSet


class SAAInfeasibleError(RuntimeError):
    """The extensive form has no feasible point (empty X or contradictory
    scenario constraints)."""


class UnboundedSAAError(RuntimeError):
    """The extensive form is unbounded below: a model defect."""


@dataclass
class SAASolution:
    """First-stage point with per-scenario recourse costs.

    ``objective = c'x + mean(theta)``; ``is_vertex`` reports whether the
    backend certified a basic solution of the extensive form.
    """

    x: np.ndarray
    theta: np.ndarray
    objective: float
    is_vertex: bool
    N: int
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "x": self.x.tolist(),
            "theta": self.theta.tolist(),
            "objective": self.objective,
            "is_vertex": self.is_vertex,
            "N": self.N,
            "seed": self.seed,
            "provenance": self.provenance,
        })

    @classmethod
    def from_json(cls, text: str) -> "SAASolution":
        data = json.loads(text)
        return cls(
            x=np.array(data["x"], dtype=float),
            theta=np.array(data["theta"], dtype=float),
            objective=float(data["objective"]),
            is_vertex=bool(data["is_vertex"]),
            N=int(data["N"]),
            seed=data.get("seed"),
            provenance=data.get("provenance", {}),
        )


@dataclass(frozen=True)
class CandidateEval:
    x: np.ndarray
    fhat: object
    feasible_count: int


@dataclass(frozen=True)
class FiniteXResult:
    candidates: tuple
    vhat: object
    delta: float
    delta_optimal_indices: tuple

    @property
    def delta_optimal_set(self):
        return [self.candidates[i].x for i in self.delta_optimal_indices]


def _sample_values(sample) -> np.ndarray:
    return sample.values if isinstance(sample, SampleSet) else np.asarray(sample, dtype=float)


def _fold_x_rows(X):
    """Split A x <= b into variable bounds (singleton rows) and general rows."""
    lb = np.full(X.n1, -np.inf)
    ub = np.full(X.n1, np.inf)
    general = []
    nonzeros = (X.A != 0).sum(axis=1)
    for i in range(X.m1):
        if nonzeros[i] == 1:
            k = int(np.flatnonzero(X.A[i])[0])
            coef = X.A[i, k]
            bound = X.b[i] / coef
            if coef > 0:
                ub[k] = min(ub[k], bound)
            else:
                lb[k] = max(lb[k], bound)
        else:
            general.append(i)
    return lb, ub, np.array(general, dtype=int)


class _RealizedSample:
    """All scenario data realized at once for a linear map."""

    def __init__(self, smap: LinearScenarioMap, values: np.ndarray):
        Z = smap.augment_many(values)
        self.W = np.einsum("kid,Nd->Nik", smap.Wk, Z)   # (N, I, n2)
        self.T = np.einsum("kid,Nd->Nik", smap.Tk, Z)   # (N, I, n1)
        self.h = Z @ smap.Hbar.T                        # (N, I)
        self.q = Z @ smap.q_map.T                       # (N, n2)


def _realize_all(p: TwoStageProblem, values: np.ndarray):
    if p.has_linear_map:
        return _RealizedSample(p.scenario_map, values)
    rs = [p.realize(row) for row in values]
    out = _RealizedSample.__new__(_RealizedSample)
    out.W = np.stack([r.Wbar for r in rs])
    out.T = np.stack([r.Tbar for r in rs])
    out.h = np.stack([r.hbar for r in rs])
    out.q = np.stack([r.q for r in rs])
    return out


def build_extensive_form(p: TwoStageProblem, sample,
                         extra_blocks: list | None = None,
                         scenario_padding: float = 0.0,
                         name: str = "saa-extensive-form") -> MathProgram:
    """One LP/MILP with a recourse copy per scenario; integrality flags are
    copied from X.

    ``extra_blocks`` appends zero-cost recourse copies: a list of
    ``(realization, padding)`` pairs whose random rows are tightened by
    ``padding``; ``scenario_padding`` tightens the random rows of the N
    scenario copies themselves (both used by the padded formulations).
    """
    values = _sample_values(sample)
    N = values.shape[0]
    if N < 1:
        raise ValueError("need at least one scenario")
    from .feasibility import kernel_for
    kern = kernel_for(p)
    rs = _realize_all(p, values)
    nI = p.n_random_rows
    n1, n2 = p.n1, p.n2
    x_lb, x_ub, x_general = _fold_x_rows(p.X)
    blocks = list(extra_blocks or [])
    n_copies = N + len(blocks)
    n_vars = n1 + n_copies * n2

    rows_parts, cols_parts, vals_parts, rhs_parts, sense_parts = [], [], [], [], []
    row_off = 0

    if x_general.size:
        gi, gk = np.nonzero(p.X.A[x_general])
        rows_parts.append(gi)
        cols_parts.append(gk)
        vals_parts.append(p.X.A[x_general][gi, gk])
        rhs_parts.append(p.X.b[x_general])
        sense_parts.append(np.full(x_general.size, "<"))
        row_off += x_general.size

    gen_i, gen_k = np.nonzero(kern.D_gen)
    n_gen = kern.gen_rows.size

    def add_copy(Wb, Tb, hb, pad, col0):
        nonlocal row_off
        # random rows: Tbar x + Wbar y >= hbar + pad
        si, sk = np.nonzero(Tb)
        rows_parts.append(si + row_off)
        cols_parts.append(sk)
        vals_parts.append(Tb[si, sk])
        wi, wk = np.nonzero(Wb)
        rows_parts.append(wi + row_off)
        cols_parts.append(wk + col0)
        vals_parts.append(Wb[wi, wk])
        rhs_parts.append(hb + pad)
        sense_parts.append(np.full(nI, ">"))
        row_off += nI
        if n_gen:
            ci, ck = np.nonzero(kern.C_gen)
            rows_parts.append(ci + row_off)
            cols_parts.append(ck)
            vals_parts.append(kern.C_gen[ci, ck])
            rows_parts.append(gen_i + row_off)
            cols_parts.append(gen_k + col0)
            vals_parts.append(kern.D_gen[gen_i, gen_k])
            rhs_parts.append(kern.d_gen)
            sense_parts.append(np.full(n_gen, ">"))
            row_off += n_gen

    for j in range(N):
        add_copy(rs.W[j], rs.T[j], rs.h[j], scenario_padding, n1 + j * n2)
    for b, (rz, pad) in enumerate(blocks):
        add_copy(rz.Wbar, rz.Tbar, rz.hbar, pad, n1 + (N + b) * n2)

    objective = np.zeros(n_vars)
    objective[:n1] = p.c
    objective[n1:n1 + N * n2] = (rs.q / N).ravel()

    integrality = np.zeros(n_vars, dtype=bool)
    for k in p.X.integrality_mask:
        integrality[k] = True

    return MathProgram(
        n_vars=n_vars,
        objective=objective,
        row_ind=np.concatenate(rows_parts) if rows_parts else np.zeros(0, dtype=int),
        col_ind=np.concatenate(cols_parts) if cols_parts else np.zeros(0, dtype=int),
        values=np.concatenate(vals_parts) if vals_parts else np.zeros(0),
        senses=np.concatenate(sense_parts) if sense_parts else np.zeros(0, dtype="U1"),
        rhs=np.concatenate(rhs_parts) if rhs_parts else np.zeros(0),
        lower=np.concatenate([x_lb, np.tile(kern.y_lower, n_copies)]),
        upper=np.concatenate([x_ub, np.tile(kern.y_upper, n_copies)]),
        integrality=integrality,
        name=name,
    )


def extract_solution(p: TwoStageProblem, sample, res: SolveResult,
                     seed=None, recheck: bool = True) -> SAASolution:
    """Build an SAASolution from a solved extensive-form-style program:
    re-derives theta by re-evaluating the recourse LPs at the returned x and
    independently re-checks sampled feasibility."""
    values = _sample_values(sample)
    N = values.shape[0]
    x = res.x[:p.n1].copy()
    if recheck:
        mask = HBatchEvaluator(p, x).classify(values, threshold=FEASIBILITY_TOL)
        if not mask.all():
            strict = HBatchEvaluator(p, x).classify(values, threshold=10 * FEASIBILITY_TOL)
            if not strict.all():
                raise SAAInfeasibleError(
                    f"solver returned x violating {int((~strict).sum())} sampled "
                    "feasibility constraints beyond tolerance")
    theta_vals = eval_Q_batch(p, x, values, relax=FEASIBILITY_TOL)
    if any(is_infeasible(t) for t in theta_vals):
        raise SAAInfeasibleError("recourse evaluation infeasible at returned x")
    theta = np.array(theta_vals, dtype=float)
    objective = float(p.c @ x + theta.mean())
    return SAASolution(
        x=x,
        theta=theta,
        objective=objective,
        is_vertex=res.is_vertex_solution,
        N=N,
        seed=seed,
        provenance={"solver": SOLVER_NAME, "wall_time": res.wall_time,
                    "solver_objective": res.objective},
    )


def solve_saa(p: TwoStageProblem, sample, want_vertex: bool = True,
              time_limit: float | None = None) -> SAASolution:
    """Solve the SAA extensive form.  Purely continuous problems are solved
    with a simplex method when ``want_vertex`` so the result is a basic
    solution; mixed-integer X delegates to the MILP path (``is_vertex`` is
    then reported False)."""
    values = _sample_values(sample)
    mp = build_extensive_form(p, values)
    if mp.is_mip:
        res = solve_milp(mp, time_limit=time_limit, compute_lp_relaxation=False)
    else:
        res = solve_lp(mp, want_vertex=want_vertex, time_limit=time_limit)
    if res.status == "infeasible":
        raise SAAInfeasibleError("SAA extensive form is infeasible")
    if res.status == "unbounded":
        raise UnboundedSAAError("SAA extensive form is unbounded below")
    res.require_optimal()
    seed = sample.seed if isinstance(sample, SampleSet) else None
    sol = extract_solution(p, values, res, seed=seed)
    if mp.is_mip:
        sol.provenance["node_count"] = res.node_count
    return sol


def solve_finite_X(p: TwoStageProblem, candidates, sample, delta: float) -> FiniteXResult:
    """Exhaustive SAA over an explicit finite candidate set.

    fhat_N(x) is the sampled average with INFEASIBLE propagation: one
    infeasible scenario makes the whole average infeasible.  When every
    candidate is infeasible the delta-optimal set is all of them (the
    convention under which an everywhere-infinite objective makes every
    point optimal).
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    candidates = [np.asarray(c, dtype=float) for c in candidates]
    if not candidates:
        raise ValueError("need at least one candidate")
    values = _sample_values(sample)
    N = values.shape[0]
    evals = []
    for x in candidates:
        mask = feasible = HBatchEvaluator(p, x).classify(values)
        count = int(mask.sum())
        if count < N:
            evals.append(CandidateEval(x=x, fhat=INFEASIBLE, feasible_count=count))
            continue
        qs = eval_Q_batch(p, x, values, feasible_mask=feasible)
        if any(is_infeasible(v) for v in qs):
            evals.append(CandidateEval(x=x, fhat=INFEASIBLE, feasible_count=count))
            continue
        fhat = float(p.c @ x + np.mean(np.array(qs, dtype=float)))
        evals.append(CandidateEval(x=x, fhat=fhat, feasible_count=count))
    finite = [e.fhat for e in evals if not is_infeasible(e.fhat)]
    if not finite:
        return FiniteXResult(tuple(evals), INFEASIBLE, float(delta),
                             tuple(range(len(evals))))
    vhat = min(finite)
    selected = tuple(
        i for i, e in enumerate(evals)
        if not is_infeasible(e.fhat) and e.fhat <= vhat + delta
    )
    return FiniteXResult(tuple(evals), vhat, float(delta), selected)
