"""LP/MILP solving through a single external backend (HiGHS via scipy).

Every other module states its formulation as a :class:`MathProgram` (triplet
rows, senses, bounds, optional integrality) and hands it to :func:`solve_lp`
or :func:`solve_milp`.  The wrapper re-verifies returned primal points
against the constraints instead of trusting the solver status blindly, and
exposes the pieces the rest of the package needs: vertex (basic) solutions,
row duals, LP-relaxation values and branch-and-bound node counts.

Shared numerical tolerances live here so that "H(x, xi) <= 0"-style checks
mean the same thing in every module.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

#: Absolute feasibility tolerance used everywhere a constraint or a
#: feasibility-function value is classified as satisfied.
FEASIBILITY_TOL = 1e-6

#: Relative optimality tolerance requested from the backend.
OPTIMALITY_TOL = 1e-8

#: Identity string recorded in solution provenance.
SOLVER_NAME = f"scipy-{scipy.__version__}-highs"

_SENSES = frozenset("<>=")


class BackendError(RuntimeError):
    """A solve failed in a way the caller cannot interpret as a status."""


@dataclass(frozen=True)
class MathProgram:
    """A linear or mixed-integer linear program in triplet form.

    Rows are ``sum_j values[t] * x[col_ind[t]]  (sense)  rhs[i]`` over the
    triplets ``t`` with ``row_ind[t] == i``; senses are ``'<'``, ``'>'`` or
    ``'='``.  Variable bounds may be +-inf, all other coefficients must be
    finite.
    """

    n_vars: int
    objective: np.ndarray
    row_ind: np.ndarray
    col_ind: np.ndarray
    values: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integrality: np.ndarray
    minimize: bool = True
    name: str = "program"

    def __post_init__(self):
        object.__setattr__(self, "objective", np.asarray(self.objective, dtype=float))
        object.__setattr__(self, "row_ind", np.asarray(self.row_ind, dtype=np.int64))
        object.__setattr__(self, "col_ind", np.asarray(self.col_ind, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "senses", np.asarray(self.senses, dtype="U1"))
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=float))
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "integrality", np.asarray(self.integrality, dtype=bool))
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length must equal n_vars")
        if not (self.row_ind.shape == self.col_ind.shape == self.values.shape):
            raise ValueError("triplet arrays must have identical shapes")
        if self.senses.shape != self.rhs.shape:
            raise ValueError("senses and rhs must have identical shapes")
        for arr, what in ((self.objective, "objective"), (self.values, "values"),
                          (self.rhs, "rhs")):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite coefficient in {what}")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("NaN variable bound")
        if self.lower.shape != (self.n_vars,) or self.upper.shape != (self.n_vars,):
            raise ValueError("bound arrays must have length n_vars")
        if self.integrality.shape != (self.n_vars,):
            raise ValueError("integrality array must have length n_vars")
        if self.senses.size and not set(self.senses.tolist()) <= _SENSES:
            raise ValueError("senses must be one of '<', '>', '='")
        if self.row_ind.size:
            if self.row_ind.min() < 0 or self.row_ind.max() >= self.n_rows:
                raise ValueError("row index out of range")
            if self.col_ind.min() < 0 or self.col_ind.max() >= self.n_vars:
                raise ValueError("column index out of range")

    @property
    def n_rows(self) -> int:
        return int(self.rhs.shape[0])

    @property
    def is_mip(self) -> bool:
        return bool(self.integrality.any())

    def constraint_matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (self.values, (self.row_ind, self.col_ind)),
            shape=(self.n_rows, self.n_vars),
        )

    def dump_lp(self, path: str) -> None:
        """Write the program in CPLEX LP text format (for debugging)."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"\\ {self.name}\n")
            fh.write("Minimize\n" if self.minimize else "Maximize\n")
            fh.write(" obj: " + _lp_expr(self.objective.nonzero()[0], self.objective) + "\n")
            fh.write("Subject To\n")
            mat = self.constraint_matrix()
            op = {"<": "<=", ">": ">=", "=": "="}
            for i in range(self.n_rows):
                row = mat.getrow(i)
                expr = _lp_expr(row.indices, None, row.data) or "0 x0"
                fh.write(f" c{i}: {expr} {op[self.senses[i]]} {self.rhs[i]:.17g}\n")
            fh.write("Bounds\n")
            for j in range(self.n_vars):
                lo, hi = self.lower[j], self.upper[j]
                if lo == -np.inf and hi == np.inf:
                    fh.write(f" x{j} free\n")
                else:
                    lo_s = "-inf" if lo == -np.inf else f"{lo:.17g}"
                    hi_s = "+inf" if hi == np.inf else f"{hi:.17g}"
                    fh.write(f" {lo_s} <= x{j} <= {hi_s}\n")
            ints = np.flatnonzero(self.integrality)
            if ints.size:
                fh.write("General\n " + " ".join(f"x{j}" for j in ints) + "\n")
            fh.write("End\n")


def _lp_expr(indices, dense=None, data=None) -> str:
    parts = []
    for t, j in enumerate(indices):
        v = dense[j] if dense is not None else data[t]
        sign = "-" if v < 0 else "+"
        if not parts and sign == "+":
            parts.append(f"{v:.17g} x{j}")
        else:
            parts.append(f"{sign} {abs(v):.17g} x{j}")
    return " ".join(parts)


@dataclass
class SolveResult:
    """Outcome of one backend solve.

    ``status`` is one of ``optimal``, ``infeasible``, ``unbounded`` or
    ``limit``.  ``duals`` holds row duals (LPs only, original row order,
    marginal convention d obj / d rhs), ``reduced_costs`` the bound duals.
    MILP solves populate ``lp_relaxation_value``, ``mip_gap`` and
    ``node_count``, the latter counting nodes beyond the root so that 0
    means the instance was solved without branching.
    """

    status: str
    x: np.ndarray | None
    objective: float | None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    is_vertex_solution: bool = False
    lp_relaxation_value: float | None = None
    node_count: int | None = None
    mip_gap: float | None = None
    wall_time: float = 0.0
    message: str = ""
    max_violation: float = 0.0

    def require_optimal(self) -> "SolveResult":
        if self.status != "optimal":
            raise BackendError(f"expected optimal solve, got {self.status}: {self.message}")
        return self


_STATUS_MAP = {0: "optimal", 1: "limit", 2: "infeasible", 3: "unbounded", 4: "limit"}


def _split_rows(p: MathProgram):
    """Return (A_ub, b_ub, A_eq, b_eq, ub_rows, ub_flip, eq_rows).

    '>' rows are negated into '<=' form; ``ub_flip`` records the sign so
    duals can be mapped back to the original orientation.
    """
    mat = p.constraint_matrix()
    le = p.senses == "<"
    ge = p.senses == ">"
    eq = p.senses == "="
    ub_rows = np.flatnonzero(le | ge)
    ub_flip = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = b_ub = A_eq = b_eq = None
    if ub_rows.size:
        A_ub = sparse.diags(ub_flip) @ mat[ub_rows]
        b_ub = ub_flip * p.rhs[ub_rows]
    eq_rows = np.flatnonzero(eq)
    if eq_rows.size:
        A_eq = mat[eq_rows]
        b_eq = p.rhs[eq_rows]
    return A_ub, b_ub, A_eq, b_eq, ub_rows, ub_flip, eq_rows


def _violations(p: MathProgram, x: np.ndarray) -> float:
    if p.n_rows == 0:
        viol_rows = 0.0
    else:
        ax = p.constraint_matrix() @ x
        res = np.zeros_like(ax)
        le = p.senses == "<"
        ge = p.senses == ">"
        eq = p.senses == "="
        res[le] = ax[le] - p.rhs[le]
        res[ge] = p.rhs[ge] - ax[ge]
        res[eq] = np.abs(ax[eq] - p.rhs[eq])
        viol_rows = float(np.max(res, initial=0.0))
    lb_viol = float(np.max(p.lower - x, initial=0.0))
    ub_viol = float(np.max(x - p.upper, initial=0.0))
    return max(viol_rows, lb_viol, ub_viol, 0.0)


def solve_lp(
    p: MathProgram,
    want_vertex: bool = False,
    feasibility_tol: float | None = None,
    time_limit: float | None = None,
    dump_path: str | None = None,
) -> SolveResult:
    """Solve the LP.  With ``want_vertex`` a simplex method is used so the
    returned primal is a basic (vertex) solution; ``is_vertex_solution``
    reports whether that was achieved.
    """
    if p.is_mip:
        raise ValueError("solve_lp requires a continuous program; use solve_milp")
    if dump_path:
        p.dump_lp(dump_path)
    c = p.objective if p.minimize else -p.objective
    A_ub, b_ub, A_eq, b_eq, ub_rows, ub_flip, eq_rows = _split_rows(p)
    bounds = list(zip(p.lower, p.upper))
    method = "highs-ds" if want_vertex else "highs"
    options: dict = {"presolve": True}
    if feasibility_tol is not None:
        options["primal_feasibility_tolerance"] = feasibility_tol
        options["dual_feasibility_tolerance"] = feasibility_tol
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    t0 = time.perf_counter()
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method=method, options=options)
    wall = time.perf_counter() - t0
    status = _STATUS_MAP.get(res.status, "limit")
    if status != "optimal":
        return SolveResult(status=status, x=None, objective=None,
                           wall_time=wall, message=str(res.message))
    x = np.asarray(res.x, dtype=float)
    sign = 1.0 if p.minimize else -1.0
    duals = np.zeros(p.n_rows)
    if ub_rows.size:
        duals[ub_rows] = sign * ub_flip * np.asarray(res.ineqlin.marginals)
    if eq_rows.size:
        duals[eq_rows] = sign * np.asarray(res.eqlin.marginals)
    rc = sign * (np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals))
    viol = _violations(p, x)
    tol = max(FEASIBILITY_TOL, feasibility_tol or 0.0)
    if viol > tol:
        return SolveResult(status="limit", x=x, objective=sign * float(res.fun),
                           wall_time=wall, max_violation=viol,
                           message=f"solver primal violates constraints by {viol:.3e}")
    return SolveResult(
        status="optimal",
        x=x,
        objective=sign * float(res.fun),
        duals=duals,
        reduced_costs=rc,
        is_vertex_solution=want_vertex,
        wall_time=wall,
        max_violation=viol,
    )


def solve_milp(
    p: MathProgram,
    time_limit: float | None = 600.0,
    mip_rel_gap: float = 1e-9,
    compute_lp_relaxation: bool = True,
    dump_path: str | None = None,
) -> SolveResult:
    """Solve the MILP; on hitting the time limit the incumbent (if any) and
    its optimality gap are returned with ``status == 'limit'``.

    ``lp_relaxation_value`` and ``node_count`` are recorded so callers can
    report root-relaxation gaps alongside branch-and-bound effort.
    """
    if not p.is_mip:
        return solve_lp(p, dump_path=dump_path, time_limit=time_limit)
    if dump_path:
        p.dump_lp(dump_path)
    sign = 1.0 if p.minimize else -1.0
    c = p.objective if p.minimize else -p.objective
    constraints = []
    if p.n_rows:
        mat = p.constraint_matrix()
        lo = np.where(p.senses == "<", -np.inf, p.rhs)
        hi = np.where(p.senses == ">", np.inf, p.rhs)
        constraints.append(LinearConstraint(mat, lo, hi))
    bounds = Bounds(p.lower, p.upper)
    options: dict = {"mip_rel_gap": mip_rel_gap}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    lp_value = None
    t_lp = 0.0
    if compute_lp_relaxation:
        relax = MathProgram(
            n_vars=p.n_vars, objective=p.objective,
            row_ind=p.row_ind, col_ind=p.col_ind, values=p.values,
            senses=p.senses, rhs=p.rhs, lower=p.lower, upper=p.upper,
            integrality=np.zeros(p.n_vars, dtype=bool),
            minimize=p.minimize, name=p.name + "-relaxation",
        )
        t0 = time.perf_counter()
        lp_res = solve_lp(relax)
        t_lp = time.perf_counter() - t0
        if lp_res.status == "optimal":
            lp_value = lp_res.objective
    t0 = time.perf_counter()
    res = milp(c, constraints=constraints, bounds=bounds,
               integrality=p.integrality.astype(int), options=options)
    wall = time.perf_counter() - t0
    status = _STATUS_MAP.get(res.status, "limit")
    # report branching effort: nodes beyond the root (0 = solved at the root)
    node_count = (max(0, int(res.mip_node_count) - 1)
                  if res.mip_node_count is not None else None)
    gap = float(res.mip_gap) if res.mip_gap is not None else None
    if res.x is None:
        if status == "optimal":
            status = "limit"
        return SolveResult(status=status, x=None, objective=None,
                           lp_relaxation_value=lp_value, node_count=node_count,
                           mip_gap=gap, wall_time=wall + t_lp,
                           message=str(res.message))
    x = np.asarray(res.x, dtype=float)
    viol = _violations(p, x)
    int_viol = float(np.max(np.abs(x[p.integrality] - np.round(x[p.integrality])),
                            initial=0.0))
    if status == "optimal" and max(viol, int_viol) > 1e-5:
        status = "limit"
    return SolveResult(
        status=status,
        x=x,
        objective=sign * float(res.fun),
        is_vertex_solution=False,
        lp_relaxation_value=lp_value,
        node_count=node_count,
        mip_gap=gap,
        wall_time=wall + t_lp,
        max_violation=max(viol, int_viol),
        message=str(res.message),
    )
