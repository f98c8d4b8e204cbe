"""Existence checks: the scalar condition of the mixed-individual model and
the matrix-inequality assumption of the mixed-population model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import MIParams, MPMatrices, TimeGrid
from .riccati import RiccatiSolutionMP, closed_form_A

YES, NO, INCONCLUSIVE = "yes", "no", "inconclusive"

# heuristic pool size and its fixed seed
N_RANDOM_CANDIDATES = 64
CANDIDATE_SEED = 20240611


@dataclass
class ConditionReport:
    holds: str
    min_margin: float
    witness_time: float
    witness_matrices: tuple | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"holds": self.holds, "min_margin": self.min_margin, "witness_time": self.witness_time}
        if self.witness_matrices is not None:
            d["witness_matrices"] = {name: complex_to_pairs(m)
                                     for name, m in zip(("E", "F"), self.witness_matrices)}
        d.update(self.details)
        return d


def check_mi_condition(params: MIParams, grid: TimeGrid | None = None) -> ConditionReport:
    """Evaluate ``b_mu A_t + c_mu`` on the grid with the closed-form ``A``."""
    grid = TimeGrid.default(params.T) if grid is None else grid
    t = grid.nodes
    slack = params.b_mu * closed_form_A(params, t) + params.c_mu
    k = int(np.argmin(slack))
    margin = float(slack[k])
    return ConditionReport(holds=YES if margin >= 0 else NO, min_margin=margin,
                           witness_time=float(t[k]))


def build_assumption_blocks(matrices: MPMatrices, A_t):
    """Return ``(M11, M21, M22)`` at one time from the ``A`` matrix there."""
    m = matrices
    A_t = np.asarray(A_t)
    M21 = -A_t @ m.M3 + m.M5
    M11 = m.M2 @ A_t + m.M1 + m.M3
    M22 = -A_t @ m.M2 - m.M1 + m.M6
    return M11, M21, M22


# ---------------------------------------------------------------------------
# batched cyclic Jacobi for Hermitian matrices


def hermitian_eigvals(H, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues (ascending) of a stack of Hermitian matrices ``(..., n, n)``
    by cyclic complex Jacobi rotations applied to the whole stack at once."""
    H = np.array(H, dtype=complex)
    shape = H.shape
    n = shape[-1]
    a = H.reshape(-1, n, n)
    a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    idx = np.arange(a.shape[0])
    scale = np.maximum(np.abs(a).max(axis=(1, 2)), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.abs(a - np.einsum("kii->ki", a)[:, :, None] * np.eye(n)).max(axis=(1, 2))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                r = np.abs(apq)
                active = r > tol * scale * 1e-3
                if not active.any():
                    continue
                phase = np.where(active, apq / np.where(active, r, 1.0), 1.0)
                app, aqq = a[:, p, p].real, a[:, q, q].real
                theta = np.where(active, (aqq - app) / (2.0 * np.where(active, r, 1.0)), 0.0)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Q = np.zeros_like(a)
                Q[:, range(n), range(n)] = 1.0
                Q[idx, p, p] = c
                Q[idx, p, q] = s
                Q[idx, q, p] = -s * np.conj(phase)
                Q[idx, q, q] = c * np.conj(phase)
                a = np.conj(np.swapaxes(Q, -1, -2)) @ a @ Q
    w = np.sort(np.einsum("kii->ki", a).real, axis=-1)
    return w.reshape(shape[:-1])


# ---------------------------------------------------------------------------
# mixed population assumption


def pairs_to_complex(m) -> np.ndarray:
    """``[[[re, im], ...], ...]`` (or plain reals) to a complex array."""
    arr = np.asarray(m)
    if np.iscomplexobj(arr):
        return arr.astype(complex)
    arr = arr.astype(float)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(complex)


def complex_to_pairs(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _validate_candidate(E, F):
    E = np.asarray(E, dtype=complex)
    F = np.asarray(F, dtype=complex)
    if E.shape != (2, 2) or F.shape != (2, 2):
        raise ValueError("E and F must be 2x2")
    if not np.allclose(E, E.conj().T, rtol=0, atol=1e-12):
        raise ValueError("E must be Hermitian")
    if hermitian_eigvals(E)[0] <= 0:
        raise ValueError("E must be positive definite")
    return E, F


def assumption_eigenvalues(matrices: MPMatrices, A, E, F) -> np.ndarray:
    """Largest eigenvalue of ``L(t) + L(t)^*`` at every row of ``A``."""
    m = matrices
    A = np.asarray(A, dtype=float)
    M2 = m.M2
    M11 = M2 @ A + m.M1 + m.M3
    M21 = -A @ m.M3 + m.M5
    M22 = -A @ M2 - m.M1 + m.M6
    n = A.shape[0]
    L = np.zeros((n, 4, 4), dtype=complex)
    L[:, :2, :2] = E @ M11 + F @ M21
    L[:, :2, 2:] = E @ M2 + np.swapaxes(M11, -1, -2) @ F + F @ M22
    L[:, 2:, 2:] = M2 @ F
    S = L + np.conj(np.swapaxes(L, -1, -2))
    return hermitian_eigvals(S)[:, -1]


def heuristic_candidates(matrices: MPMatrices):
    I = np.eye(2, dtype=complex)
    M2inv = np.linalg.inv(matrices.M2).astype(complex)
    pool = [("E=I,F=0", I, np.zeros((2, 2), complex)), ("E=I,F=I", I, I), ("E=I,F=-I", I, -I),
            ("E=I,F=inv(M2)", I, M2inv), ("E=I,F=-inv(M2)", I, -M2inv)]
    rng = np.random.default_rng(CANDIDATE_SEED)
    for i in range(N_RANDOM_CANDIDATES):
        G = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        E = G @ G.conj().T + 0.1 * I
        F = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        pool.append((f"random[{i}]", E, F))
    return pool


def check_mp_assumption(matrices: MPMatrices, solution: RiccatiSolutionMP, candidates=None,
                        tol: float = 1e-10) -> ConditionReport:
    """Search for a witness ``(E, F)`` of the matrix inequality.

    Candidates are tried in order; the first whose worst eigenvalue over the
    grid is ``<= tol`` yields ``yes``.  Failure of every candidate only gives
    ``inconclusive``: it does not refute existence.  With ``candidates=None``
    the built-in heuristic pool is used.
    """
    if candidates is None:
        pool = heuristic_candidates(matrices)
    else:
        pool = []
        for i, cand in enumerate(candidates):
            E, F = (cand["E"], cand["F"]) if isinstance(cand, dict) else cand
            E, F = _validate_candidate(pairs_to_complex(E), pairs_to_complex(F))
            pool.append((f"candidate[{i}]", E, F))
    t = solution.grid.nodes
    best = None
    for name, E, F in pool:
        lam_max = assumption_eigenvalues(matrices, solution.A, E, F)
        k = int(np.argmax(lam_max))
        margin = -float(lam_max[k])
        if best is None or margin > best[0]:
            best = (margin, float(t[k]), name, E, F)
        if lam_max[k] <= tol:
            return ConditionReport(holds=YES, min_margin=margin, witness_time=float(t[k]),
                                   witness_matrices=(E, F),
                                   details={"witness": name, "candidates_tried": len(pool)})
    margin, wt, name, E, F = best
    return ConditionReport(holds=INCONCLUSIVE, min_margin=margin, witness_time=wt,
                           witness_matrices=(E, F),
                           details={"best_candidate": name, "candidates_tried": len(pool)})
