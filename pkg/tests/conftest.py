"""Shared fixtures: small problems with known closed forms."""

import numpy as np
import pytest

from padsaa.model import (DeterministicSecondStage, LinearScenarioMap,
                          PolyhedralSet, TwoStageProblem)


def make_threshold_toy() -> TwoStageProblem:
    """F(x, xi) = min{y : xi <= x <= y} on X = [0, 2].

    H(x, xi) = xi - x; Q(x, xi) = x when x >= xi, infeasible otherwise.
    """
    smap = LinearScenarioMap(
        Tk=[np.array([[0.0, 1.0]])],
        Wk=[np.array([[0.0, 0.0]])],
        Hbar=np.array([[1.0, 0.0]]),
        q_map=np.array([[0.0, 1.0]]),
        d=1,
    )
    return TwoStageProblem(
        c=np.array([0.0]),
        X=PolyhedralSet(np.array([[1.0], [-1.0]]), np.array([2.0, 0.0])),
        det=DeterministicSecondStage(np.array([[1.0]]), np.array([[-1.0]]),
                                     np.array([0.0])),
        scenario_map=smap,
        name="threshold-toy",
    )


def make_box_recourse(d: int = 2, n_rows: int = 2, seed: int = 0,
                      fixed_recourse: bool = True, n2: int = 1,
                      strong_first_stage: bool = False) -> TwoStageProblem:
    """Random small problem: eta e + Wbar(xi) y >= xi-driven rhs, y boxed.

    Wbar columns carry mixed signs so the separation dual is nonempty.
    With ``strong_first_stage`` the first-stage variable uniformly relaxes
    every random row, so padded masters stay feasible for moderate gamma.
    """
    rng = np.random.default_rng(seed)
    Wk = []
    for k in range(n2):
        M = np.zeros((n_rows, d + 1))
        M[:, d] = rng.normal(0.0, 1.0, n_rows)
        M[0, d] = abs(M[0, d]) + 0.2
        M[1, d] = -abs(M[1, d]) - 0.2
        if not fixed_recourse:
            M[:, :d] = rng.normal(0.0, 0.3, (n_rows, d))
        Wk.append(M)
    Tk = [np.hstack([rng.normal(0.0, 0.5, (n_rows, d)),
                     rng.normal(0.0, 0.5, (n_rows, 1))])]
    if strong_first_stage:
        Tk[0][:, d] = 1.5
    Hbar = np.hstack([rng.normal(0.0, 1.0, (n_rows, d)), np.zeros((n_rows, 1))])
    smap = LinearScenarioMap(Tk=Tk, Wk=Wk, Hbar=Hbar,
                             q_map=np.ones((n2, d + 1)) * 0.1, d=d)
    x_hi = 4.0 if strong_first_stage else 1.0
    x_lo = 0.0 if strong_first_stage else -1.0
    return TwoStageProblem(
        c=np.array([0.1]),
        X=PolyhedralSet(np.array([[1.0], [-1.0]]), np.array([x_hi, -x_lo])),
        det=DeterministicSecondStage(np.eye(n2), np.zeros((n2, 1)),
                                     -10.0 * np.ones(n2)),
        scenario_map=smap,
        name="box-recourse",
    )


@pytest.fixture
def threshold_toy():
    return make_threshold_toy()


@pytest.fixture(scope="session")
def trp_2x2():
    from padsaa.trp import TRPConfig, generate_trp
    return generate_trp(TRPConfig(n=2, m=2, seed=5))


@pytest.fixture(scope="session")
def trp_10x10():
    from padsaa.trp import TRPConfig, generate_trp
    return generate_trp(TRPConfig(n=10, m=10, seed=42))
