"""Backward Riccati / linear ODE systems and the forward mean-field ODEs.

All integrators are classical fixed-step RK4 on a :class:`TimeGrid`.  When an
equation needs a previously computed coefficient (``A`` inside the
``B``-equation, say) at a half step, the coefficient is reconstructed by cubic
Hermite interpolation from its node values and its own ODE right-hand side,
which keeps the composite scheme fourth order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import MIParams, MPMatrices, MPParams, TimeGrid

FBSDE = "fbsde_consistent"
LITERAL = "paper_literal"
VARIANTS = (FBSDE, LITERAL)
_ALIASES = {"fbsde": FBSDE, "paper": LITERAL, FBSDE: FBSDE, LITERAL: LITERAL}

# above this exponent the closed form is evaluated with exp(-x) instead
_STABLE_EXPONENT = 30.0


class RiccatiBlowUpError(ArithmeticError):
    """A backward or forward ODE left the finite floats.

    ``time`` is the first grid time at which a non-finite value appeared.
    """

    def __init__(self, equation: str, time: float):
        super().__init__(f"Riccati blow-up in {equation}-equation at t={time:.17g}")
        self.equation = equation
        self.time = time


def resolve_variant(variant: str) -> str:
    try:
        return _ALIASES[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(_ALIASES)}") from None


@dataclass(frozen=True)
class RiccatiSolutionMI:
    grid: TimeGrid
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Xbar: np.ndarray
    variant: str = FBSDE


@dataclass(frozen=True)
class RiccatiSolutionMP:
    """``A``, ``B`` have shape ``(n+1, 2, 2)``; ``C``, ``Xbar`` ``(n+1, 2)``.
    Index 0 is the non-cooperative group, index 1 the cooperative one."""

    grid: TimeGrid
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Xbar: np.ndarray
    variant: str = FBSDE


# ---------------------------------------------------------------------------
# generic fixed-step RK4 on a half grid


def _half_grid(values, derivs, dt):
    """Interleave node values with Hermite midpoints: slot ``2k`` is node
    ``k``, slot ``2k+1`` the midpoint of ``[t_k, t_{k+1}]``."""
    values = np.asarray(values, dtype=float)
    derivs = np.asarray(derivs, dtype=float)
    n = values.shape[0] - 1
    out = np.empty((2 * n + 1,) + values.shape[1:])
    out[0::2] = values
    out[1::2] = 0.5 * (values[:-1] + values[1:]) + (dt / 8.0) * (derivs[:-1] - derivs[1:])
    return out


def _check(y, equation, t):
    if not np.all(np.isfinite(y)):
        raise RiccatiBlowUpError(equation, float(t))


def _rk4_backward(rhs, y_T, grid: TimeGrid, equation: str):
    n, dt = grid.n_steps, grid.dt
    t = grid.nodes
    ys = [None] * (n + 1)
    ys[n] = y_T
    y = y_T
    k = n
    # overflow near a blow-up is reported through _check, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for k in range(n - 1, -1, -1):
                j = 2 * k + 2
                k1 = rhs(y, j)
                k2 = rhs(y - 0.5 * dt * k1, j - 1)
                k3 = rhs(y - 0.5 * dt * k2, j - 1)
                k4 = rhs(y - dt * k3, j - 2)
                y = y - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                _check(y, equation, t[k])
                ys[k] = y
        except (OverflowError, FloatingPointError):
            raise RiccatiBlowUpError(equation, float(t[k])) from None
    return np.array(ys, dtype=float)


def _rk4_forward(rhs, y_0, grid: TimeGrid, equation: str):
    n, dt = grid.n_steps, grid.dt
    t = grid.nodes
    ys = [None] * (n + 1)
    ys[0] = y_0
    y = y_0
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for k in range(n):
                j = 2 * k
                k1 = rhs(y, j)
                k2 = rhs(y + 0.5 * dt * k1, j + 1)
                k3 = rhs(y + 0.5 * dt * k2, j + 1)
                k4 = rhs(y + dt * k3, j + 2)
                y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                _check(y, equation, t[k + 1])
                ys[k + 1] = y
        except (OverflowError, FloatingPointError):
            raise RiccatiBlowUpError(equation, float(t[k + 1])) from None
    return np.array(ys, dtype=float)


# ---------------------------------------------------------------------------
# mixed individual model


def characteristic_roots(b_alpha, b_X, c_alpha, c_X) -> tuple[float, float]:
    """Roots ``b_X +/- sqrt(b_X**2 + c_X b_alpha**2 / c_alpha)``."""
    disc = math.sqrt(b_X * b_X + c_X * b_alpha * b_alpha / c_alpha)
    return b_X + disc, b_X - disc


def _closed_form(b_alpha, b_X, c_alpha, c_X, c_T, T, t):
    if t < 0 or t > T:
        raise ValueError(f"t={t} outside [0, {T}]")
    if t == T:
        return float(c_T)
    k = b_alpha * b_alpha / c_alpha
    dp, dm = characteristic_roots(b_alpha, b_X, c_alpha, c_X)
    x = (dp - dm) * (T - t)
    if x > _STABLE_EXPONENT:
        r = math.exp(-x)
        num = -c_X * (1.0 - r) - c_T * (dp - dm * r)
        den = (dm - dp * r) - c_T * k * (1.0 - r)
    else:
        e = math.exp(x)
        num = -c_X * (e - 1.0) - c_T * (dp * e - dm)
        den = (dm * e - dp) - c_T * k * (e - 1.0)
    return num / den


def closed_form_A(params: MIParams, t) -> float | np.ndarray:
    """Explicit solution of the scalar ``A``-Riccati equation at time(s) ``t``."""
    args = (params.b_alpha, params.b_X, params.c_alpha, params.c_X, params.c_T, params.T)
    if np.ndim(t) == 0:
        return _closed_form(*args, float(t))
    return np.array([_closed_form(*args, float(s)) for s in np.ravel(t)]).reshape(np.shape(t))


def _rhs_A_mi(params):
    k, bX, cX = params.k, params.b_X, params.c_X
    return lambda a: k * a * a - 2.0 * bX * a - cX


def _rhs_B_mi(params, variant):
    k, bX, bmu, cmu, lam = params.k, params.b_X, params.b_mu, params.c_mu, params.lam
    lin = 2.0 * bX + 2.0 * bmu - lam * bmu
    forcing = bmu * (2.0 - lam) if variant == FBSDE else bmu * (1.0 - lam)
    const = cmu * (1.0 - lam)
    return lambda b, a: k * b * b + 2.0 * k * a * b - lin * b - forcing * a - const


def _coef_C_mi(params):
    k, bX, bmu, lam = params.k, params.b_X, params.b_mu, params.lam
    return lambda a, b: k * (a + b) - bX - bmu * (1.0 - lam)


def integrate_A_mi(params: MIParams, grid: TimeGrid) -> np.ndarray:
    f = _rhs_A_mi(params)
    return _rk4_backward(lambda y, j: f(y), float(params.c_T), grid, "A")


def integrate_B_mi(params: MIParams, grid: TimeGrid, A, variant: str = FBSDE) -> np.ndarray:
    variant = resolve_variant(variant)
    A = np.asarray(A, dtype=float)
    Ah = _half_grid(A, _rhs_A_mi(params)(A), grid.dt)
    f = _rhs_B_mi(params, variant)
    return _rk4_backward(lambda y, j: f(y, Ah[j]), 0.0, grid, "B")


def _derivs_AB_mi(params, A, B, variant):
    return _rhs_A_mi(params)(A), _rhs_B_mi(params, variant)(B, A)


def integrate_C_mi(params: MIParams, grid: TimeGrid, A, B, variant: str = FBSDE,
                   terminal: float = 0.0) -> np.ndarray:
    """Linear homogeneous ``C``-equation; ``terminal`` exists for testing the
    integrating factor and is zero in the model."""
    variant = resolve_variant(variant)
    A, B = np.asarray(A, float), np.asarray(B, float)
    dA, dB = _derivs_AB_mi(params, A, B, variant)
    coef = _coef_C_mi(params)
    kappa = _half_grid(coef(A, B), params.k * (dA + dB), grid.dt)
    return _rk4_backward(lambda y, j: kappa[j] * y, float(terminal), grid, "C")


def _mean_coef_mi(params):
    k, bX, bmu = params.k, params.b_X, params.b_mu
    return lambda a, b: -k * (a + b) + bX + bmu


def integrate_mean_mi(params: MIParams, grid: TimeGrid, A, B, C, variant: str = FBSDE) -> np.ndarray:
    variant = resolve_variant(variant)
    A, B, C = (np.asarray(v, float) for v in (A, B, C))
    dA, dB = _derivs_AB_mi(params, A, B, variant)
    k = params.k
    a_node = _mean_coef_mi(params)(A, B)
    a_half = _half_grid(a_node, -k * (dA + dB), grid.dt)
    dC = _coef_C_mi(params)(A, B) * C
    c_half = _half_grid(-k * C, -k * dC, grid.dt)
    return _rk4_forward(lambda y, j: a_half[j] * y + c_half[j], float(params.mu0_mean), grid, "Xbar")


def integrate_mi_system(params: MIParams, grid: TimeGrid, variant: str = FBSDE) -> RiccatiSolutionMI:
    variant = resolve_variant(variant)
    A = integrate_A_mi(params, grid)
    B = integrate_B_mi(params, grid, A, variant)
    C = integrate_C_mi(params, grid, A, B, variant)
    Xbar = integrate_mean_mi(params, grid, A, B, C, variant)
    return RiccatiSolutionMI(grid=grid, A=A, B=B, C=C, Xbar=Xbar, variant=variant)


# ---------------------------------------------------------------------------
# mixed population model
#
# The scalar adjoint of the cooperative group reads
#   dY^C = -(b_X Y^C + c_X X^C + b_mu(1-p) Ybar^C + 2 c_mu (1-p) (p Xbar^NC + (1-p) Xbar^C)) dt,
# i.e. dY = (-M1 Y + M4 X - M5 Xbar - M6 Ybar) dt with the (positive-entry) M5, M6.


def _rhs_A_mp(m: MPMatrices):
    M1, M2, M4 = m.M1, m.M2, m.M4
    return lambda a: -(a @ M2 @ a + M1 @ a + a @ M1 - M4)


def _rhs_B_mp(m: MPMatrices, variant):
    M1, M2, M3, M5, M6 = m.M1, m.M2, m.M3, m.M5, m.M6
    M13 = M1 + M3
    if variant == FBSDE:
        def f(b, a):
            return -(b @ M2 @ b + a @ M2 @ b + b @ M2 @ a + (M1 + M6) @ b + b @ M13
                     + a @ M3 + M5 + M6 @ a)
    else:
        def f(b, a):
            return -(b @ M2 @ b + a @ M2 @ b + b @ M2 @ a + (M1 - M6) @ b + b @ M13 + a @ M3 - M5)
    return f


def _coef_C_mp(m: MPMatrices, variant):
    sign = 1.0 if variant == FBSDE else -1.0
    shift = m.M1 + sign * m.M6
    # C' = -((A+B) M2 + M1 +/- M6) C
    return lambda a, b: -((a + b) @ m.M2 + shift)


def _batched(f, *arrays):
    return np.array([f(*vals) for vals in zip(*arrays)])


def integrate_mp_system(params: MPParams, matrices: MPMatrices, grid: TimeGrid,
                        variant: str = FBSDE, C_terminal=None) -> RiccatiSolutionMP:
    variant = resolve_variant(variant)
    m = matrices
    fA = _rhs_A_mp(m)
    A_T = np.diag([params.nc.c_T, params.c.c_T])
    A = _rk4_backward(lambda y, j: fA(y), A_T, grid, "A")
    dA = _batched(fA, A)
    Ah = _half_grid(A, dA, grid.dt)

    fB = _rhs_B_mp(m, variant)
    B = _rk4_backward(lambda y, j: fB(y, Ah[j]), np.zeros((2, 2)), grid, "B")
    dB = _batched(fB, B, A)
    Bh = _half_grid(B, dB, grid.dt)

    gC = _coef_C_mp(m, variant)
    Ch_coef = np.array([gC(a, b) for a, b in zip(Ah, Bh)])
    C_T = np.zeros(2) if C_terminal is None else np.asarray(C_terminal, float)
    C = _rk4_backward(lambda y, j: Ch_coef[j] @ y, C_T, grid, "C")
    dC = np.einsum("kij,kj->ki", Ch_coef[0::2], C)
    Chalf = _half_grid(C, dC, grid.dt)

    # forward mean: Xbar' = (M1 + M2 A + M2 B + M3) Xbar + M2 C, midpoints of
    # the coefficient matrix come from those of A and B
    G = np.array([m.M1 + m.M2 @ a + m.M2 @ b + m.M3 for a, b in zip(Ah, Bh)])
    x0 = np.array([params.nc.mu0_mean, params.c.mu0_mean])
    Xbar = _rk4_forward(lambda y, j: G[j] @ y + m.M2 @ Chalf[j], x0, grid, "Xbar")
    return RiccatiSolutionMP(grid=grid, A=A, B=B, C=C, Xbar=Xbar, variant=variant)
