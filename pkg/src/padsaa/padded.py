"""Padded SAA formulations, the mixed-scenario constraint-generation loop,
and the separation problem solvers.

Under product-form marginal supports, every "mixed scenario" xi^J --
coordinate q taken from sample member J[q] -- is a valid support point, so
the padded problem enforces H(x, xi^J) + gamma <= 0 for all J in [N]^d on
top of the standard SAA.  Three routes are provided:

* ``rhs_only``: with fixed Wbar and Tbar, tightening each sampled
  scenario's random rows by gamma already yields the guarantee, so no
  mixed scenarios are needed.
* ``monotone_shortcut``: when H(x, .) is monotone coordinate-wise, the
  single dominating mixed scenario (per-coordinate extreme in the monotone
  direction) dominates all others; one padded recourse copy suffices.
* ``mixed_scenario_cg``: constraint generation.  The master enforces the
  padded constraints for a working set of mixed scenarios; separation
  maximizes H(x_hat, xi^J) over J in [N]^d, either by MILP (a general
  formulation for data linear in xi, and a two-point formulation
  strengthened by reformulation-linearization when the recourse matrix is
  fixed) or by brute-force enumeration for test-sized instances.

Coordinates with a declared monotone sign are pinned to their sample
extreme before a separation MILP is built (partial monotonicity), as is
the internal constant coordinate carrying affine terms.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .backend import (FEASIBILITY_TOL, MathProgram, SolveResult, solve_lp,
                      solve_milp)
from .feasibility import HBatchEvaluator, eval_H
from .model import LinearScenarioMap, TwoStageProblem, mixed_scenario
from .saa import (SAAInfeasibleError, SAASolution, build_extensive_form,
                  extract_solution)
from .sampling import SampleSet

_VARIANTS = ("rhs_only", "monotone_shortcut", "mixed_scenario_cg")
_SEPARATIONS = ("general", "fixed_recourse", "brute_force")


class PaddedMasterInfeasibleError(RuntimeError):
    """The padded master has no feasible point: gamma is too large for this
    sample."""


class SeparationError(RuntimeError):
    """A separation solve ended without a usable certificate."""


class CGNumericalError(RuntimeError):
    """Constraint generation returned an already-present cut twice even
    after tightening the master tolerance."""


@dataclass(frozen=True)
class PaddingMode:
    """Which padded formulation to use and at what padding level."""

    variant: str
    gamma: float
    signs: np.ndarray | None = None
    separation: str = "fixed_recourse"
    seed_cuts: tuple = ()

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.separation not in _SEPARATIONS:
            raise ValueError(f"unknown separation {self.separation!r}")
        if self.signs is not None:
            object.__setattr__(self, "signs", np.asarray(self.signs, dtype=int))
        if self.variant == "monotone_shortcut":
            if self.signs is None or np.any(self.signs == 0):
                raise ValueError("monotone_shortcut needs a full +-1 sign vector")
        object.__setattr__(self, "seed_cuts",
                           tuple(tuple(int(i) for i in J) for J in self.seed_cuts))


@dataclass
class SeparationResult:
    """Worst mixed scenario found: index vector J and H(x_hat, xi^J)."""

    J: np.ndarray
    value: float
    recheck_value: float
    status: str
    node_count: int | None = None
    lp_relaxation_value: float | None = None
    mip_gap: float | None = None
    wall_time: float = 0.0

    @property
    def gap_lp(self) -> float | None:
        """Root-relaxation gap relative to the best value found."""
        if self.lp_relaxation_value is None:
            return None
        return (self.lp_relaxation_value - self.value) / max(1e-10, abs(self.value))


@dataclass(frozen=True)
class CGIteration:
    iteration: int
    J: tuple
    separation_value: float
    master_objective: float
    separation_wall_time: float = 0.0


@dataclass
class CGTrace:
    iterations: list = field(default_factory=list)
    status: str = "running"

    @property
    def n_separations(self) -> int:
        return len(self.iterations)

    def to_json(self) -> str:
        import json
        return json.dumps({
            "status": self.status,
            "iterations": [
                {"iteration": it.iteration, "J": list(it.J),
                 "separation_value": it.separation_value,
                 "master_objective": it.master_objective,
                 "separation_wall_time": it.separation_wall_time}
                for it in self.iterations
            ],
        })


def _values(sample) -> np.ndarray:
    return sample.values if isinstance(sample, SampleSet) else np.asarray(sample, dtype=float)


def _require_linear(p: TwoStageProblem) -> LinearScenarioMap:
    if not p.has_linear_map:
        raise ValueError("this operation requires a linear scenario map")
    return p.scenario_map


# --- padded formulation builders ---------------------------------------------

def build_padded_rhs(p: TwoStageProblem, sample, gamma: float) -> MathProgram:
    """Right-hand-side padding: every scenario copy's random rows are
    tightened by gamma.  Requires fixed Wbar and Tbar (only hbar random)."""
    smap = _require_linear(p)
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    d = smap.d
    if np.any(smap.Wk[:, :, :d]) or np.any(smap.Tk[:, :, :d]):
        raise ValueError("rhs_only padding requires fixed Wbar and Tbar")
    return build_extensive_form(p, sample, scenario_padding=float(gamma),
                                name="padded-rhs-saa")


def dominating_index_vector(sample, signs) -> np.ndarray:
    """Sample index per coordinate attaining the monotone-direction extreme
    (max where sign > 0, min where sign < 0)."""
    values = _values(sample)
    signs = np.asarray(signs, dtype=int)
    if signs.shape != (values.shape[1],):
        raise ValueError("signs must have one entry per coordinate")
    if np.any(signs == 0):
        raise ValueError("every coordinate needs a monotone sign")
    return np.where(signs > 0, values.argmax(axis=0), values.argmin(axis=0))


def build_padded_mixed(p: TwoStageProblem, sample, gamma: float,
                       index_vectors, name: str = "padded-mixed-saa") -> MathProgram:
    """Standard SAA extensive form plus one gamma-padded zero-cost recourse
    copy per given mixed-scenario index vector."""
    values = _values(sample)
    blocks = [(p.realize(mixed_scenario(values, J)), float(gamma))
              for J in index_vectors]
    return build_extensive_form(p, values, extra_blocks=blocks, name=name)


def build_padded_monotone(p: TwoStageProblem, sample, gamma: float,
                          signs) -> MathProgram:
    """Monotone shortcut: one padded copy at the dominating mixed scenario."""
    values = _values(sample)
    J = dominating_index_vector(values, signs)
    return build_padded_mixed(p, values, gamma, [J], name="padded-monotone-saa")


def solve_padded(p: TwoStageProblem, sample, mode: PaddingMode,
                 want_vertex: bool = True, time_limit: float | None = None,
                 max_iters: int = 50):
    """Solve the padded SAA selected by ``mode``.  Returns an
    :class:`SAASolution` (plus a :class:`CGTrace` for the CG variant)."""
    if mode.variant == "mixed_scenario_cg":
        return constraint_generation_solve(p, sample, mode, max_iters=max_iters,
                                           time_limit=time_limit)
    values = _values(sample)
    if mode.variant == "rhs_only":
        mp = build_padded_rhs(p, values, mode.gamma)
    else:
        mp = build_padded_monotone(p, values, mode.gamma, mode.signs)
    res = _solve_master(mp, want_vertex, time_limit, mode.gamma)
    seed = sample.seed if isinstance(sample, SampleSet) else None
    return extract_solution(p, values, res, seed=seed)


def _solve_master(mp: MathProgram, want_vertex, time_limit, gamma,
                  feasibility_tol=None) -> SolveResult:
    if mp.is_mip:
        res = solve_milp(mp, time_limit=time_limit, compute_lp_relaxation=False)
    else:
        res = solve_lp(mp, want_vertex=want_vertex, time_limit=time_limit,
                       feasibility_tol=feasibility_tol)
    if res.status == "infeasible":
        raise PaddedMasterInfeasibleError(
            f"padded master infeasible at gamma={gamma}")
    return res.require_optimal()


# --- separation --------------------------------------------------------------

@dataclass
class _Coord:
    """One augmented coordinate of the separation problem.

    Fixed coordinates contribute a constant value (the internal constant
    coordinate, or a sign-pinned sample extreme); free coordinates carry a
    finite choice set of (sample index, value) pairs.
    """

    fixed_value: float | None = None
    fixed_index: int | None = None
    choice_idx: np.ndarray | None = None
    choice_val: np.ndarray | None = None

    @property
    def free(self) -> bool:
        return self.fixed_value is None


def _prepare_coords(values: np.ndarray, signs, two_point: bool) -> list[_Coord]:
    N, d = values.shape
    coords: list[_Coord] = []
    for q in range(d):
        col = values[:, q]
        sign = 0 if signs is None else int(signs[q])
        if sign != 0:
            idx = int(col.argmax()) if sign > 0 else int(col.argmin())
            coords.append(_Coord(fixed_value=float(col[idx]), fixed_index=idx))
        elif two_point:
            imin, imax = int(col.argmin()), int(col.argmax())
            coords.append(_Coord(choice_idx=np.array([imin, imax]),
                                 choice_val=np.array([col[imin], col[imax]])))
        else:
            coords.append(_Coord(choice_idx=np.arange(N),
                                 choice_val=col.copy()))
    # internal constant coordinate: pinned to 1, never reported in J
    coords.append(_Coord(fixed_value=1.0, fixed_index=-1))
    return coords


def _decode_J(coords: list[_Coord], picks: dict[int, int]) -> np.ndarray:
    J = []
    for q, coord in enumerate(coords[:-1]):
        if coord.free:
            J.append(int(coord.choice_idx[picks[q]]))
        else:
            J.append(coord.fixed_index)
    return np.array(J, dtype=int)


def _separation_milp(p: TwoStageProblem, sample, x_hat, two_point: bool,
                     signs=None, time_limit: float | None = 600.0,
                     dump_path: str | None = None) -> SeparationResult:
    smap = _require_linear(p)
    values = _values(sample)
    x_hat = np.asarray(x_hat, dtype=float)
    coords = _prepare_coords(values, signs, two_point)
    free_q = [q for q, c in enumerate(coords) if c.free]
    if two_point:
        free_cols = [q for q in free_q]
        if np.any(smap.Wk[:, :, free_cols]):
            raise ValueError("two-point separation requires fixed recourse on "
                             "the free coordinates")
    if not free_q:
        J = _decode_J(coords, {})
        value = eval_H(p, x_hat, mixed_scenario(values, J))
        return SeparationResult(J=J, value=value, recheck_value=value,
                                status="optimal", node_count=0,
                                lp_relaxation_value=value, mip_gap=0.0)

    nI = p.n_random_rows
    det = p.det
    m_det = det.rows
    n2 = p.n2
    # hbar(xi) - Tbar(xi) x_hat coefficient per (row, augmented coordinate)
    coefH = smap.Hbar - np.einsum("kid,k->id", smap.Tk, x_hat)
    fixed_cols = np.array([q for q, c in enumerate(coords) if not c.free], dtype=int)
    fixed_vals = np.array([coords[q].fixed_value for q in fixed_cols])
    # realized Wbar columns restricted to the fixed coordinates: (nI, n2)
    W_fixed = np.einsum("kid,d->ik", smap.Wk[:, :, fixed_cols], fixed_vals)

    var_off: dict = {}
    n_vars = 0

    def alloc(key, count):
        nonlocal n_vars
        var_off[key] = n_vars
        n_vars += count

    alloc("alpha", nI)
    alloc("beta", m_det)
    for q in free_q:
        nc = coords[q].choice_idx.size
        alloc(("delta", q), nc)
        alloc(("z", q), nI * nc)
        if two_point:
            alloc(("w", q), m_det * nc)

    rows_l, cols_l, vals_l, rhs_l = [], [], [], []
    row = 0

    def add_entry(r, c, v):
        rows_l.append(r)
        cols_l.append(c)
        vals_l.append(v)

    objective = np.zeros(n_vars)
    objective[var_off["alpha"]:var_off["alpha"] + nI] = coefH[:, fixed_cols] @ fixed_vals
    if m_det:
        objective[var_off["beta"]:var_off["beta"] + m_det] = det.d - det.C @ x_hat

    for q in free_q:
        nc = coords[q].choice_idx.size
        vqs = coords[q].choice_val
        z0 = var_off[("z", q)]
        d0 = var_off[("delta", q)]
        # objective on z
        for c in range(nc):
            objective[z0 + c:z0 + nI * nc:nc] = coefH[:, q] * vqs[c]
        # sum_p z_pqc = delta_qc
        for c in range(nc):
            for pp in range(nI):
                add_entry(row, z0 + pp * nc + c, 1.0)
            add_entry(row, d0 + c, -1.0)
            rhs_l.append(0.0)
            row += 1
        # sum_c z_pqc = alpha_p
        for pp in range(nI):
            for c in range(nc):
                add_entry(row, z0 + pp * nc + c, 1.0)
            add_entry(row, var_off["alpha"] + pp, -1.0)
            rhs_l.append(0.0)
            row += 1
        if two_point:
            w0 = var_off[("w", q)]
            # sum_c w_rqc = beta_r
            for rr in range(m_det):
                for c in range(nc):
                    add_entry(row, w0 + rr * nc + c, 1.0)
                add_entry(row, var_off["beta"] + rr, -1.0)
                rhs_l.append(0.0)
                row += 1
            # disaggregated dual rows: W'z + D'w = 0 per (k, choice)
            for k in range(n2):
                wcol = W_fixed[:, k]
                dcol = det.D[:, k] if m_det else np.zeros(0)
                for c in range(nc):
                    nz = np.flatnonzero(wcol)
                    for pp in nz:
                        add_entry(row, z0 + pp * nc + c, wcol[pp])
                    for rr in np.flatnonzero(dcol):
                        add_entry(row, w0 + rr * nc + c, dcol[rr])
                    rhs_l.append(0.0)
                    row += 1

    if not two_point:
        # aggregated dual rows: Wbar(xi)' alpha + D' beta = 0, with the
        # bilinear alpha * xi terms carried by z
        for k in range(n2):
            base = W_fixed[:, k]
            for pp in np.flatnonzero(base):
                add_entry(row, var_off["alpha"] + pp, base[pp])
            for q in free_q:
                nc = coords[q].choice_idx.size
                z0 = var_off[("z", q)]
                wk_col = smap.Wk[k, :, q]
                for pp in np.flatnonzero(wk_col):
                    for c in range(nc):
                        add_entry(row, z0 + pp * nc + c,
                                  wk_col[pp] * coords[q].choice_val[c])
            for rr in np.flatnonzero(det.D[:, k]) if m_det else []:
                add_entry(row, var_off["beta"] + rr, det.D[rr, k])
            rhs_l.append(0.0)
            row += 1

    # e' alpha = 1
    for pp in range(nI):
        add_entry(row, var_off["alpha"] + pp, 1.0)
    rhs_l.append(1.0)
    row += 1

    integrality = np.zeros(n_vars, dtype=bool)
    upper = np.full(n_vars, np.inf)
    for q in free_q:
        d0 = var_off[("delta", q)]
        nc = coords[q].choice_idx.size
        integrality[d0:d0 + nc] = True
        upper[d0:d0 + nc] = 1.0

    mp = MathProgram(
        n_vars=n_vars,
        objective=objective,
        row_ind=np.array(rows_l, dtype=int),
        col_ind=np.array(cols_l, dtype=int),
        values=np.array(vals_l, dtype=float),
        senses=np.full(row, "="),
        rhs=np.array(rhs_l, dtype=float),
        lower=np.zeros(n_vars),
        upper=upper,
        integrality=integrality,
        minimize=False,
        name="separation-two-point" if two_point else "separation-general",
    )
    res = solve_milp(mp, time_limit=time_limit, dump_path=dump_path)
    if res.status == "infeasible":
        # the dual of the feasibility LP is empty at every mixed scenario,
        # i.e. H(x_hat, .) is -inf throughout: nothing to separate
        J = _decode_J(coords, {q: 0 for q in free_q})
        recheck = eval_H(p, x_hat, mixed_scenario(values, J))
        return SeparationResult(J=J, value=-math.inf, recheck_value=float(recheck),
                                status="optimal", node_count=res.node_count,
                                wall_time=res.wall_time)
    if res.x is None:
        raise SeparationError(f"separation MILP ended without incumbent: {res.status}")
    picks = {}
    for q in free_q:
        d0 = var_off[("delta", q)]
        nc = coords[q].choice_idx.size
        picks[q] = int(np.argmax(res.x[d0:d0 + nc]))
    J = _decode_J(coords, picks)
    value = float(res.objective)
    recheck = eval_H(p, x_hat, mixed_scenario(values, J))
    if res.status == "optimal":
        if not math.isinf(recheck) and abs(value - recheck) > 1e-5:
            raise SeparationError(
                f"separation value {value} disagrees with H at decoded J ({recheck})")
    elif value > recheck + 1e-5:
        raise SeparationError(
            f"incumbent value {value} exceeds H at decoded J ({recheck})")
    return SeparationResult(
        J=J, value=value, recheck_value=float(recheck), status=res.status,
        node_count=res.node_count, lp_relaxation_value=res.lp_relaxation_value,
        mip_gap=res.mip_gap, wall_time=res.wall_time,
    )


def separation_milp_general(p: TwoStageProblem, sample, x_hat, signs=None,
                            time_limit: float | None = 600.0,
                            dump_path: str | None = None) -> SeparationResult:
    """MILP over all d x N scenario-pick binaries; valid whenever the
    scenario data are linear in xi."""
    return _separation_milp(p, sample, x_hat, two_point=False, signs=signs,
                            time_limit=time_limit, dump_path=dump_path)


def separation_milp_fixed_recourse(p: TwoStageProblem, sample, x_hat, signs=None,
                                   time_limit: float | None = 600.0,
                                   dump_path: str | None = None) -> SeparationResult:
    """Two-point MILP (coordinate min/max only) with disaggregated dual rows;
    requires the recourse matrix not to vary with the free coordinates."""
    return _separation_milp(p, sample, x_hat, two_point=True, signs=signs,
                            time_limit=time_limit, dump_path=dump_path)


def brute_force_separation(p: TwoStageProblem, sample, x_hat,
                           limit: int = 100_000) -> SeparationResult:
    """Exhaustive max of H(x_hat, xi^J) over J in [N]^d (test oracle).

    Coordinates with repeated sample values are enumerated once per
    distinct value (any attaining index stands in for the rest), and
    candidate recourse actions from solved scenarios give upper bounds on H
    at the remaining mixed scenarios, so most enumeration is pruned without
    an LP solve; the result is still the exact maximum.
    """
    values = _values(sample)
    N, d = values.shape
    reps = []
    total = 1
    for q in range(d):
        _, first = np.unique(values[:, q], return_index=True)
        reps.append(np.sort(first))
        total *= first.size
    if total > limit:
        raise ValueError(
            f"{total} distinct mixed scenarios exceed the enumeration budget {limit}")
    t0 = time.perf_counter()
    J_all = np.array([list(combo) for combo in itertools.product(*reps)], dtype=int)
    mixed = values[J_all, np.arange(d)[None, :]]
    ev = HBatchEvaluator(p, x_hat)
    best = -math.inf
    best_row = 0
    if ev.linear:
        Z = p.scenario_map.augment_many(mixed)
        remaining = np.arange(total)
        bounds = np.full(total, np.inf)
        while remaining.size:
            pick = remaining[int(np.argmax(bounds[remaining]))]
            if bounds[pick] <= best + 1e-12:
                break
            before = len(ev.pool)
            h = ev.exact(mixed[pick])
            if h > best:
                best, best_row = h, int(pick)
            remaining = remaining[remaining != pick]
            if len(ev.pool) > before and remaining.size:
                new = ev.upper_bounds(Z[remaining], candidates=ev.pool[before:])
                bounds[remaining] = np.minimum(bounds[remaining], new)
                remaining = remaining[bounds[remaining] > best + 1e-12]
    else:
        for row in range(total):
            h = ev.exact(mixed[row], collect=False)
            if h > best:
                best, best_row = h, row
    return SeparationResult(
        J=J_all[best_row], value=float(best), recheck_value=float(best),
        status="optimal", wall_time=time.perf_counter() - t0,
    )


def separate(p: TwoStageProblem, sample, x_hat, mode: PaddingMode,
             time_limit: float | None = 600.0) -> SeparationResult:
    if mode.separation == "general":
        return separation_milp_general(p, sample, x_hat, signs=mode.signs,
                                       time_limit=time_limit)
    if mode.separation == "fixed_recourse":
        return separation_milp_fixed_recourse(p, sample, x_hat, signs=mode.signs,
                                              time_limit=time_limit)
    return brute_force_separation(p, sample, x_hat)


# --- constraint generation ----------------------------------------------------

def constraint_generation_solve(p: TwoStageProblem, sample, mode: PaddingMode,
                                max_iters: int = 50,
                                time_limit: float | None = 600.0,
                                want_vertex: bool = True,
                                ) -> tuple[SAASolution, CGTrace]:
    """Iterate master-solve / worst-mixed-scenario separation until the
    padded feasibility condition H(x_hat, xi^J) + gamma <= 0 certifies for
    all J, or the iteration limit is reached.

    A cut returned twice with positive violation signals numerical trouble:
    the master feasibility tolerance is tightened tenfold once, and the run
    aborts on recurrence.
    """
    if mode.variant != "mixed_scenario_cg":
        raise ValueError("constraint_generation_solve requires mixed_scenario_cg mode")
    values = _values(sample)
    gamma = mode.gamma
    cuts: list[tuple] = list(mode.seed_cuts)
    trace = CGTrace()
    tightened = False
    master_tol = None
    res = None
    for it in range(max_iters):
        mp = build_padded_mixed(p, values, gamma, cuts, name="cg-master")
        res = _solve_master(mp, want_vertex, time_limit, gamma,
                            feasibility_tol=master_tol)
        x_hat = res.x[:p.n1]
        sep = separate(p, values, x_hat, mode, time_limit=time_limit)
        trace.iterations.append(CGIteration(
            iteration=it, J=tuple(int(i) for i in sep.J),
            separation_value=sep.value, master_objective=float(res.objective),
            separation_wall_time=sep.wall_time))
        if sep.value + gamma <= FEASIBILITY_TOL:
            if sep.status != "optimal":
                raise SeparationError(
                    "separation hit its limit without certifying feasibility")
            trace.status = "feasible_certified"
            break
        J_key = tuple(int(i) for i in sep.J)
        if J_key in cuts:
            if tightened:
                raise CGNumericalError(
                    f"cut {J_key} regenerated with violation {sep.value + gamma:.3e} "
                    "after tolerance tightening")
            tightened = True
            master_tol = FEASIBILITY_TOL / 10.0
            continue
        cuts.append(J_key)
    else:
        trace.status = "iteration_limit"
    seed = sample.seed if isinstance(sample, SampleSet) else None
    sol = extract_solution(p, values, res, seed=seed)
    sol.provenance["cg_status"] = trace.status
    sol.provenance["cg_cuts"] = [list(c) for c in cuts]
    return sol, trace
