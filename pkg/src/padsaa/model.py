"""Canonical representation of two-stage stochastic LPs.

The second stage is split into a block whose data depend on the random
vector xi and a deterministic block, all stored in ">=" orientation:

    random block:        Wbar(xi) y >= hbar(xi) - Tbar(xi) x
    deterministic block: D y       >= d        - C x

Scenario data that are linear (or affine) in xi are described by a
:class:`LinearScenarioMap`; affine terms are handled by an internal
constant coordinate appended to xi, so the user-visible dimension ``d``
never includes it.  Problems whose data are not linear in xi can plug in
any object with ``realize(xi)`` (an "opaque" map); such problems can be
sampled and solved via standard SAA but are rejected by the mixed-scenario
separation machinery, which requires linearity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .backend import FEASIBILITY_TOL, MathProgram, solve_lp


def _matrix(a, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if out.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={out.ndim}")
    return out


def _vector(a, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if out.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got ndim={out.ndim}")
    return out


@dataclass(frozen=True, eq=False)
class PolyhedralSet:
    """First-stage feasible region {x : A x <= b}, bounds folded into A.

    ``integrality_mask`` lists 0-based indices of components that must be
    integer.
    """

    A: np.ndarray
    b: np.ndarray
    integrality_mask: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "A", _matrix(self.A, "A"))
        object.__setattr__(self, "b", _vector(self.b, "b"))
        object.__setattr__(self, "integrality_mask", frozenset(self.integrality_mask))
        if self.n1 < 1:
            raise ValueError("X needs at least one variable")
        if not all(0 <= i < self.n1 for i in self.integrality_mask):
            raise ValueError("integrality_mask index out of range")

    @property
    def m1(self) -> int:
        return self.A.shape[0]

    @property
    def n1(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class DeterministicSecondStage:
    """Scenario-independent second-stage block D y >= d - C x."""

    D: np.ndarray
    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "D", _matrix(self.D, "D"))
        object.__setattr__(self, "C", _matrix(self.C, "C"))
        object.__setattr__(self, "d", _vector(self.d, "d"))

    @property
    def rows(self) -> int:
        return self.D.shape[0]

    @property
    def n2(self) -> int:
        return self.D.shape[1]

    @classmethod
    def nonnegativity(cls, n2: int, n1: int) -> "DeterministicSecondStage":
        """The common block y >= 0."""
        return cls(np.eye(n2), np.zeros((n2, n1)), np.zeros(n2))


@dataclass(frozen=True, eq=False)
class ScenarioRealization:
    """One realization (q, Wbar, Tbar, hbar) of the random second-stage data."""

    q: np.ndarray
    Wbar: np.ndarray
    Tbar: np.ndarray
    hbar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _vector(self.q, "q"))
        object.__setattr__(self, "Wbar", _matrix(self.Wbar, "Wbar"))
        object.__setattr__(self, "Tbar", _matrix(self.Tbar, "Tbar"))
        object.__setattr__(self, "hbar", _vector(self.hbar, "hbar"))
        rows = self.Wbar.shape[0]
        if self.Tbar.shape[0] != rows or self.hbar.shape[0] != rows:
            raise ValueError("random-block row counts disagree")
        if self.q.shape[0] != self.Wbar.shape[1]:
            raise ValueError("q length must match Wbar columns")

    @property
    def n_rows(self) -> int:
        return self.Wbar.shape[0]


class LinearScenarioMap:
    """Column-wise linear (optionally affine) scenario data.

    Column k of Tbar(xi) is ``Tk[k] @ xi`` and column k of Wbar(xi) is
    ``Wk[k] @ xi``; ``hbar(xi) = Hbar @ xi`` and ``q(xi) = q_map @ xi``.
    Matrices may carry ``d`` columns (purely linear) or ``d + 1`` columns,
    in which case the last column multiplies an internal constant
    coordinate fixed to 1 (affine data).  ``d`` is the user-visible
    dimension of xi and never counts the constant coordinate.
    """

    def __init__(self, Tk, Wk, Hbar, q_map=None, d: int | None = None):
        Hbar = _matrix(Hbar, "Hbar")
        n_rows = Hbar.shape[0]
        Tk = [_matrix(t, "Tk[k]") for t in Tk]
        Wk = [_matrix(w, "Wk[k]") for w in Wk]
        cols = {m.shape[1] for m in Tk + Wk} | {Hbar.shape[1]}
        if q_map is not None:
            q_map = _matrix(q_map, "q_map")
            cols.add(q_map.shape[1])
        if len(cols) != 1:
            raise ValueError(f"scenario-map matrices disagree on column count: {sorted(cols)}")
        ncols = cols.pop()
        if d is None:
            d = ncols
        if ncols == d:
            pad = lambda m: np.hstack([m, np.zeros((m.shape[0], 1))])
        elif ncols == d + 1:
            pad = lambda m: m
        else:
            raise ValueError(f"matrices have {ncols} columns; expected d={d} or d+1")
        for m in Tk + Wk:
            if m.shape[0] != n_rows:
                raise ValueError("scenario-map matrices disagree on row count")
        self._d = int(d)
        self._Tk = np.stack([pad(t) for t in Tk]) if Tk else np.zeros((0, n_rows, d + 1))
        self._Wk = np.stack([pad(w) for w in Wk]) if Wk else np.zeros((0, n_rows, d + 1))
        self._Hbar = pad(Hbar)
        if q_map is None:
            q_map = np.zeros((len(Wk), ncols))
        if q_map.shape[0] != len(Wk):
            raise ValueError("q_map must have one row per second-stage variable")
        self._q = pad(q_map)
        for arr in (self._Tk, self._Wk, self._Hbar, self._q):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self._d

    @property
    def n1(self) -> int:
        return self._Tk.shape[0]

    @property
    def n2(self) -> int:
        return self._Wk.shape[0]

    @property
    def n_random_rows(self) -> int:
        return self._Hbar.shape[0]

    @property
    def Tk(self) -> np.ndarray:
        """(n1, rows, d+1) stack; last column is the constant part."""
        return self._Tk

    @property
    def Wk(self) -> np.ndarray:
        return self._Wk

    @property
    def Hbar(self) -> np.ndarray:
        return self._Hbar

    @property
    def q_map(self) -> np.ndarray:
        return self._q

    @property
    def is_fixed_recourse(self) -> bool:
        """True when Wbar(xi) does not depend on xi (constant column aside)."""
        return not np.any(self._Wk[:, :, : self._d])

    def augment(self, xi: np.ndarray) -> np.ndarray:
        xi = _vector(np.asarray(xi, dtype=float), "xi")
        if xi.shape[0] != self._d:
            raise ValueError(f"xi has length {xi.shape[0]}, expected {self._d}")
        return np.append(xi, 1.0)

    def augment_many(self, xis: np.ndarray) -> np.ndarray:
        xis = np.asarray(xis, dtype=float)
        if xis.ndim != 2 or xis.shape[1] != self._d:
            raise ValueError("scenario matrix must be N x d")
        return np.hstack([xis, np.ones((xis.shape[0], 1))])

    def realize(self, xi) -> ScenarioRealization:
        z = self.augment(xi)
        return ScenarioRealization(
            q=self._q @ z,
            Wbar=(self._Wk @ z).T,
            Tbar=(self._Tk @ z).T,
            hbar=self._Hbar @ z,
        )


class OpaqueScenarioMap:
    """Arbitrary xi -> realization callable with declared dimensions."""

    def __init__(self, realize_fn, d: int, n1: int, n2: int, n_random_rows: int,
                 is_fixed_recourse: bool = False):
        self._fn = realize_fn
        self.d = int(d)
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.n_random_rows = int(n_random_rows)
        self.is_fixed_recourse = bool(is_fixed_recourse)

    def realize(self, xi) -> ScenarioRealization:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.d,):
            raise ValueError(f"xi must have length {self.d}")
        return self._fn(xi)


@dataclass(frozen=True, eq=False)
class TwoStageProblem:
    """First-stage cost c over X plus the two-block second stage.

    Immutable after construction; the single source of truth for every
    formulation built elsewhere in the package.
    """

    c: np.ndarray
    X: PolyhedralSet
    det: DeterministicSecondStage
    scenario_map: LinearScenarioMap | OpaqueScenarioMap
    name: str = "two-stage-problem"

    def __post_init__(self):
        object.__setattr__(self, "c", _vector(self.c, "c"))

    @property
    def n1(self) -> int:
        return self.X.n1

    @property
    def n2(self) -> int:
        return self.det.n2

    @property
    def d(self) -> int:
        return self.scenario_map.d

    @property
    def n_random_rows(self) -> int:
        return self.scenario_map.n_random_rows

    @property
    def m2(self) -> int:
        return self.n_random_rows + self.det.rows

    @property
    def fixed_recourse(self) -> bool:
        return self.scenario_map.is_fixed_recourse

    @property
    def has_linear_map(self) -> bool:
        return isinstance(self.scenario_map, LinearScenarioMap)

    def realize(self, xi) -> ScenarioRealization:
        return self.scenario_map.realize(xi)


def realize_scenario(scenario_map, xi) -> ScenarioRealization:
    """Assemble (q, Wbar, Tbar, hbar) at xi from the column maps."""
    return scenario_map.realize(xi)


def mixed_scenario(sample, J) -> np.ndarray:
    """Coordinate-wise recombination: component q of the result is component
    q of sample row ``J[q]`` (0-based row indices).
    """
    values = sample.values if hasattr(sample, "values") else np.asarray(sample, dtype=float)
    if values.ndim != 2:
        raise ValueError("sample must be an N x d matrix")
    N, d = values.shape
    J = np.asarray(J, dtype=np.int64)
    if J.shape != (d,):
        raise ValueError(f"J must have length d={d}")
    if J.size and (J.min() < 0 or J.max() >= N):
        raise ValueError("scenario index out of range")
    return values[J, np.arange(d)]


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    fatal: bool


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple

    @property
    def ok(self) -> bool:
        return not any(i.fatal for i in self.issues)

    def codes(self) -> set:
        return {i.code for i in self.issues}


def chebyshev_center(X: PolyhedralSet, box: float = 1e6) -> np.ndarray | None:
    """A deep interior point of X (ties broken inside a +-box), or None if
    X is empty."""
    m1, n1 = X.A.shape
    norms = np.linalg.norm(X.A, axis=1) if m1 else np.zeros(0)
    rows = np.repeat(np.arange(m1), n1)
    cols = np.tile(np.arange(n1), m1)
    vals = X.A.ravel()
    rows = np.concatenate([rows, np.arange(m1)])
    cols = np.concatenate([cols, np.full(m1, n1)])
    vals = np.concatenate([vals, norms])
    mp = MathProgram(
        n_vars=n1 + 1,
        objective=np.append(np.zeros(n1), -1.0),
        row_ind=rows, col_ind=cols, values=vals,
        senses=np.full(m1, "<"), rhs=X.b,
        lower=np.append(np.full(n1, -box), 0.0),
        upper=np.append(np.full(n1, box), box),
        integrality=np.zeros(n1 + 1, dtype=bool),
        name="chebyshev-center",
    )
    res = solve_lp(mp)
    if res.status != "optimal":
        return None
    return res.x[:n1]


def validate_problem(p: TwoStageProblem) -> ValidationReport:
    """Consistency report: dimensions, the m2 >= n2 + 1 requirement,
    emptiness of X and of the deterministic block at an interior point of X.
    Fatal issues are flagged, never raised.
    """
    issues: list[ValidationIssue] = []

    def flag(code, message, fatal=True):
        issues.append(ValidationIssue(code, message, fatal))

    X, det, smap = p.X, p.det, p.scenario_map
    if X.A.shape[0] != X.b.shape[0]:
        flag("dim-X", f"A has {X.A.shape[0]} rows but b has {X.b.shape[0]} entries")
    if p.c.shape[0] != X.n1:
        flag("dim-c", f"c has length {p.c.shape[0]} but X has {X.n1} variables")
    if det.C.shape[0] != det.rows or det.d.shape[0] != det.rows:
        flag("dim-det", "row counts of D, C, d disagree")
    if det.C.shape[1] != X.n1:
        flag("dim-det-C", f"C has {det.C.shape[1]} columns but n1={X.n1}")
    if smap.n1 != X.n1:
        flag("dim-map-n1", f"scenario map built for n1={smap.n1}, problem has n1={X.n1}")
    if smap.n2 != det.n2:
        flag("dim-map-n2", f"scenario map built for n2={smap.n2}, problem has n2={det.n2}")
    if any(i.code.startswith("dim") for i in issues):
        return ValidationReport(tuple(issues))

    if p.m2 < p.n2 + 1:
        flag("m2-too-small",
             f"m2={p.m2} violates the standing requirement m2 >= n2+1={p.n2 + 1}")

    center = chebyshev_center(X)
    if center is None:
        flag("X-empty", "first-stage region X is empty")
        return ValidationReport(tuple(issues))

    if det.rows:
        rhs = det.d - det.C @ center
        mp = MathProgram(
            n_vars=det.n2,
            objective=np.zeros(det.n2),
            row_ind=np.repeat(np.arange(det.rows), det.n2),
            col_ind=np.tile(np.arange(det.n2), det.rows),
            values=det.D.ravel(),
            senses=np.full(det.rows, ">"), rhs=rhs,
            lower=np.full(det.n2, -np.inf), upper=np.full(det.n2, np.inf),
            integrality=np.zeros(det.n2, dtype=bool),
            name="det-block-feasibility",
        )
        if solve_lp(mp).status != "optimal":
            flag("det-infeasible",
                 "deterministic block {y : Dy >= d - Cx} is empty at an interior "
                 "point of X; the standing recourse contract fails")
    return ValidationReport(tuple(issues))


# --- instance file format ---------------------------------------------------

def problem_to_dict(p: TwoStageProblem) -> dict:
    if not p.has_linear_map:
        raise ValueError("only problems with a linear scenario map are serializable")
    m = p.scenario_map
    return {
        "c": p.c.tolist(),
        "A": p.X.A.tolist(),
        "b": p.X.b.tolist(),
        "integrality": sorted(p.X.integrality_mask),
        "D": p.det.D.tolist(),
        "C": p.det.C.tolist(),
        "d": p.det.d.tolist(),
        "Tk": [t.tolist() for t in m.Tk],
        "Wk": [w.tolist() for w in m.Wk],
        "Hbar": m.Hbar.tolist(),
        "q_map": m.q_map.tolist(),
        "d_dim": m.d,
        "fixed_recourse": m.is_fixed_recourse,
        "name": p.name,
    }


def problem_from_dict(data: dict) -> TwoStageProblem:
    smap = LinearScenarioMap(
        Tk=data["Tk"], Wk=data["Wk"], Hbar=data["Hbar"],
        q_map=data.get("q_map"), d=data["d_dim"],
    )
    p = TwoStageProblem(
        c=data["c"],
        X=PolyhedralSet(data["A"], data["b"], frozenset(data.get("integrality", []))),
        det=DeterministicSecondStage(data["D"], data["C"], data["d"]),
        scenario_map=smap,
        name=data.get("name", "two-stage-problem"),
    )
    if bool(data.get("fixed_recourse", smap.is_fixed_recourse)) != smap.is_fixed_recourse:
        raise ValueError("fixed_recourse flag contradicts the Wk matrices")
    return p


def save_problem(p: TwoStageProblem, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(p), fh)


def load_problem(path: str) -> TwoStageProblem:
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))
