import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedmfg import (GroupParams, MIParams, MPMatrices, MPParams, RiccatiSolutionMP, TimeGrid,
                      build_mp_matrices, check_mi_condition, check_mp_assumption, solve_mi, solve_mp)
from mixedmfg.conditions import (INCONCLUSIVE, NO, YES, assumption_eigenvalues, build_assumption_blocks,
                                 complex_to_pairs, hermitian_eigvals, pairs_to_complex)

from conftest import mi_params

A_ONE = dict(b_X=0.0, b_alpha=1.0, c_alpha=1.0, c_X=1.0, c_T=1.0)


def test_mi_condition_positive_regime():
    rep = check_mi_condition(MIParams(b_mu=1.0))
    assert rep.holds == YES and rep.min_margin >= 1.0


def test_mi_condition_violated_everywhere():
    grid = TimeGrid(1.0, 100)
    rep = check_mi_condition(MIParams(b_mu=-2.0, c_mu=1.0, **A_ONE), grid)
    assert rep.holds == NO
    assert abs(rep.min_margin + 1.0) <= 1e-12
    assert 0.0 <= rep.witness_time <= 1.0


@given(mi_params())
@settings(max_examples=30, deadline=None)
def test_mi_condition_without_mean_drift(p):
    from dataclasses import replace
    rep = check_mi_condition(replace(p, b_mu=0.0), TimeGrid(p.T, 200))
    assert rep.holds == YES and rep.min_margin == p.c_mu


@given(st.floats(-3.0, 3.0), st.floats(0.1, 2.0))
@settings(max_examples=60, deadline=None)
def test_mi_condition_flips_at_zero_slack(b_mu, c_mu):
    rep = check_mi_condition(MIParams(b_mu=b_mu, c_mu=c_mu, **A_ONE), TimeGrid(1.0, 100))
    assert abs(rep.min_margin - (b_mu + c_mu)) <= 1e-10
    assert rep.holds == (YES if b_mu + c_mu >= 0 else NO)


@given(mi_params())
@settings(max_examples=20, deadline=None)
def test_mi_condition_grid_stable(p):
    a = check_mi_condition(p, TimeGrid(p.T, 1000))
    b = check_mi_condition(p, TimeGrid(p.T, 2000))
    assert abs(a.min_margin - b.min_margin) <= 1e-8 * max(1.0, abs(a.min_margin)) or \
        abs(a.min_margin - b.min_margin) <= 1e-6 * abs(p.b_mu)


@given(mi_params())
@settings(max_examples=15, deadline=None)
def test_condition_yes_implies_solvable(p):
    rep = check_mi_condition(p, TimeGrid(p.T, 500))
    if rep.holds == YES:
        sol, _ = solve_mi(p, TimeGrid(p.T, 500))
        assert np.all(np.isfinite(sol.B))


# ---------------------------------------------------------------------------
# assumption blocks and eigenvalues


def test_blocks_at_zero_A():
    m = build_mp_matrices(MPParams(nc=GroupParams(b_mu=0.4), c=GroupParams(b_mu=0.9), p=0.3))
    M11, M21, M22 = build_assumption_blocks(m, np.zeros((2, 2)))
    np.testing.assert_array_equal(M21, m.M5)
    np.testing.assert_array_equal(M11, m.M1 + m.M3)
    np.testing.assert_array_equal(M22, -m.M1 + m.M6)


def test_blocks_at_terminal_time_by_hand():
    one = GroupParams(b_mu=1.0)
    m = build_mp_matrices(MPParams(nc=one, c=one, p=0.5))
    _, M21, _ = build_assumption_blocks(m, np.eye(2))
    # -M3 + M5 with M3 = 0.5 everywhere, M5 = [[0, 0], [0.5, 0.5]]
    np.testing.assert_allclose(M21, [[-0.5, -0.5], [0.0, 0.0]], atol=0)


def test_blocks_p_one():
    g = GroupParams(b_mu=0.7)
    m = build_mp_matrices(MPParams(nc=g, c=g, p=1.0))
    A = np.diag([1.3, 0.8])
    _, M21, _ = build_assumption_blocks(m, A)
    np.testing.assert_array_equal(M21, -A @ m.M3)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_jacobi_matches_lapack(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((5, 4, 4)) + 1j * rng.standard_normal((5, 4, 4))
    H = G + np.conj(np.swapaxes(G, -1, -2))
    np.testing.assert_allclose(hermitian_eigvals(H), np.linalg.eigvalsh(H), atol=1e-12)


def test_jacobi_diagonal_and_degenerate():
    np.testing.assert_array_equal(hermitian_eigvals(np.diag([3.0, -1.0, 2.0, 0.0])), [-1, 0, 2, 3])
    np.testing.assert_allclose(hermitian_eigvals(np.ones((4, 4))), [0, 0, 0, 4], atol=1e-14)


def test_pairs_round_trip():
    z = np.array([[1 + 2j, -0.5], [3j, 4.0]])
    np.testing.assert_array_equal(pairs_to_complex(complex_to_pairs(z)), z)


def _one_node_solution(A):
    grid = TimeGrid(1.0, 1)
    A = np.stack([A, A])
    return RiccatiSolutionMP(grid=grid, A=A, B=np.zeros_like(A), C=np.zeros((2, 2)),
                             Xbar=np.zeros((2, 2)))


def test_zero_F_fails_when_M2_nonzero():
    m = build_mp_matrices(MPParams())
    lam = assumption_eigenvalues(m, np.eye(2)[None], np.eye(2), np.zeros((2, 2)))
    # the Hermitian part is [[S, M2], [M2, 0]]; the lower block is 0 and M2 != 0
    S = 2 * (m.M2 + m.M1 + m.M3)
    H = np.block([[S, m.M2], [m.M2, np.zeros((2, 2))]])
    assert lam[0] > 0
    assert abs(lam[0] - np.linalg.eigvalsh(H)[-1]) <= 1e-12


def test_degenerate_model_accepts_zero_F():
    z = np.zeros((2, 2))
    m = MPMatrices(M1=np.diag([-1.0, -2.0]), M2=z, M3=np.array([[0.0, 0.5], [0.5, 0.0]]), M4=z, M5=z,
                   M6=z, K=np.eye(2))
    rep = check_mp_assumption(m, _one_node_solution(np.eye(2)), candidates=[(np.eye(2), z)])
    assert rep.holds == YES
    # L + L* = diag(2 (M1 + M3), 0): largest eigenvalue 0
    assert abs(rep.min_margin) <= 1e-14


def test_candidate_validation():
    z = np.zeros((2, 2))
    m = build_mp_matrices(MPParams())
    sol = _one_node_solution(np.eye(2))
    with pytest.raises(ValueError, match="E must be Hermitian"):
        check_mp_assumption(m, sol, candidates=[(np.array([[1, 1j], [1j, 1]]), z)])
    with pytest.raises(ValueError, match="E must be positive definite"):
        check_mp_assumption(m, sol, candidates=[(-np.eye(2), z)])


def test_candidates_accept_pair_encoding():
    z = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
    eye = [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]
    m = MPMatrices(M1=-np.eye(2), M2=np.zeros((2, 2)), M3=np.zeros((2, 2)), M4=np.zeros((2, 2)),
                   M5=np.zeros((2, 2)), M6=np.zeros((2, 2)), K=np.eye(2))
    rep = check_mp_assumption(m, _one_node_solution(np.eye(2)), candidates=[{"E": eye, "F": z}])
    assert rep.holds == YES


def test_heuristic_pool_never_says_no():
    mp = MPParams(nc=GroupParams(b_mu=1.5), c=GroupParams(b_mu=-1.5), p=0.5)
    sol, _ = solve_mp(mp, TimeGrid(1.0, 200))
    rep = check_mp_assumption(build_mp_matrices(mp), sol)
    assert rep.holds in (YES, INCONCLUSIVE)
    assert rep.details["candidates_tried"] >= 1


def test_unit_model_has_heuristic_witness():
    sol, _ = solve_mp(MPParams(), TimeGrid(1.0, 200))
    rep = check_mp_assumption(build_mp_matrices(MPParams()), sol)
    assert rep.holds == YES and rep.min_margin >= 0


def test_adding_candidates_keeps_yes():
    mp = MPParams()
    m = build_mp_matrices(mp)
    sol, _ = solve_mp(mp, TimeGrid(1.0, 200))
    good = (np.eye(2), np.eye(2))
    bad = (np.eye(2), np.zeros((2, 2)))
    assert check_mp_assumption(m, sol, candidates=[good]).holds == YES
    assert check_mp_assumption(m, sol, candidates=[bad, good]).holds == YES
    assert check_mp_assumption(m, sol, candidates=[good, bad]).holds == YES
