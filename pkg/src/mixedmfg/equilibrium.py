"""Equilibrium policies, drift-identity verification and reduction oracles."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from . import riccati
from .params import (GroupParams, MIParams, MPParams, TimeGrid, build_mp_matrices,
                     validate_mi, validate_mp)
from .riccati import FBSDE, RiccatiSolutionMI, RiccatiSolutionMP, resolve_variant


@dataclass(frozen=True)
class FeedbackPolicy:
    """Affine feedback ``alpha(t, x) = gain_self x + gain_mean . xbar + intercept``.

    ``xbar`` is the deterministic mean-field path the policy was built
    against.  For the mixed-individual model every array is 1-d over the grid.
    For the mixed-population model the last axis indexes the group:
    ``gain_self`` and ``intercept`` are ``(n+1, 2)``, ``gain_mean`` is
    ``(n+1, 2, 2)`` (row = acting group, column = mean it multiplies) and
    ``xbar`` is ``(n+1, 2)``.
    """

    grid: TimeGrid
    gain_self: np.ndarray
    gain_mean: np.ndarray
    intercept: np.ndarray
    xbar: np.ndarray
    label: str = "equilibrium"

    @property
    def feedforward(self) -> np.ndarray:
        """Deterministic part ``gain_mean . xbar + intercept`` on the grid."""
        if self.gain_mean.ndim == 3:
            return np.einsum("kgj,kj->kg", self.gain_mean, self.xbar) + self.intercept
        if self.gain_mean.ndim == 2:
            return np.einsum("kj,kj->k", self.gain_mean, self.xbar) + self.intercept
        return self.gain_mean * self.xbar + self.intercept

    def group(self, g: int) -> "FeedbackPolicy":
        """Single-agent policy of group ``g`` of a two-group policy."""
        return replace(self, gain_self=self.gain_self[:, g], gain_mean=self.gain_mean[:, g, :],
                       intercept=self.intercept[:, g], label=f"{self.label}[{g}]")

    def scaled(self, self_factor: float = 1.0, mean_factor: float = 1.0) -> "FeedbackPolicy":
        return replace(self, gain_self=self.gain_self * self_factor,
                       gain_mean=self.gain_mean * mean_factor,
                       label=f"gain_self*{self_factor:g},gain_mean*{mean_factor:g}")

    def __call__(self, t, x, xbar=None):
        """Evaluate the control at times ``t`` (linear interpolation between
        nodes) for states ``x``; ``xbar`` defaults to the stored mean path."""
        t = np.asarray(t, dtype=float)
        nodes = self.grid.nodes
        g = np.interp(t, nodes, self.gain_self)
        if xbar is None:
            return g * x + np.interp(t, nodes, self.feedforward)
        gm = np.interp(t, nodes, self.gain_mean)
        h = np.interp(t, nodes, self.intercept)
        return g * x + gm * xbar + h


@dataclass
class ResidualReport:
    variant: str
    max_coefficient_residual: float
    breakdown: dict = field(default_factory=dict)
    argmax_time: float = 0.0

    def to_dict(self) -> dict:
        return {"variant": self.variant,
                "max_coefficient_residual": self.max_coefficient_residual,
                "argmax_time": self.argmax_time,
                "breakdown": dict(self.breakdown)}


def _grid_for(params, grid):
    return TimeGrid.default(params.T) if grid is None else grid


def policy_mi(params: MIParams, solution: RiccatiSolutionMI) -> FeedbackPolicy:
    r = -params.b_alpha / params.c_alpha
    return FeedbackPolicy(grid=solution.grid, gain_self=r * solution.A, gain_mean=r * solution.B,
                          intercept=r * solution.C, xbar=solution.Xbar)


def policy_mp(params: MPParams, solution: RiccatiSolutionMP) -> FeedbackPolicy:
    K = np.array([params.nc.b_alpha / params.nc.c_alpha, params.c.b_alpha / params.c.c_alpha])
    A, B, C = solution.A, solution.B, solution.C
    return FeedbackPolicy(
        grid=solution.grid,
        gain_self=-K * np.stack([A[:, 0, 0], A[:, 1, 1]], axis=1),
        gain_mean=-K[None, :, None] * B,
        intercept=-K * C,
        xbar=solution.Xbar,
    )


def solve_mi(params: MIParams, grid: TimeGrid | None = None, variant: str = FBSDE,
             validate: bool = True) -> tuple[RiccatiSolutionMI, FeedbackPolicy]:
    if validate:
        validate_mi(params)
    solution = riccati.integrate_mi_system(params, _grid_for(params, grid), variant)
    return solution, policy_mi(params, solution)


def solve_mp(params: MPParams, grid: TimeGrid | None = None, variant: str = FBSDE,
             validate: bool = True) -> tuple[RiccatiSolutionMP, FeedbackPolicy]:
    if validate:
        validate_mp(params)
    grid = _grid_for(params, grid)
    solution = riccati.integrate_mp_system(params, build_mp_matrices(params), grid, variant)
    return solution, policy_mp(params, solution)


# ---------------------------------------------------------------------------
# drift identities


def _fd_weights(offsets) -> np.ndarray:
    """First-derivative weights on integer ``offsets`` (unit spacing), exact
    for polynomials of degree ``len(offsets) - 1``."""
    offsets = np.asarray(offsets, dtype=float)
    m = offsets.size
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


# stencil half-width; order of accuracy is 2 * _HALF
_HALF = 4
_WIDTH = 2 * _HALF + 1
_CENTRAL = _fd_weights(np.arange(-_HALF, _HALF + 1))
_EDGE = [_fd_weights(np.arange(_WIDTH) - i) for i in range(_HALF)]


def time_derivative(values, dt):
    """Eighth-order finite-difference derivative along axis 0: nine-point
    centered stencil in the interior, nine-point one-sided stencils at the
    first and last four nodes."""
    f = np.asarray(values, dtype=float)
    n = f.shape[0]
    if n < _WIDTH:
        raise ValueError(f"need at least {_WIDTH} nodes for the derivative stencil")
    d = np.zeros_like(f)
    for j, w in enumerate(_CENTRAL):
        d[_HALF:n - _HALF] += w * f[j:n - 2 * _HALF + j]
    for i, w in enumerate(_EDGE):
        d[i] = np.tensordot(w, f[:_WIDTH], axes=1)
        d[n - 1 - i] = -np.tensordot(w, f[::-1][:_WIDTH], axes=1)
    return d / dt


def _summarize(variant, parts, t):
    breakdown = {}
    worst, worst_t = 0.0, float(t[0])
    for name, r in parts.items():
        per_node = np.abs(r).reshape(r.shape[0], -1).max(axis=1)
        k = int(np.argmax(per_node))
        breakdown[name] = float(per_node[k])
        if per_node[k] > worst:
            worst, worst_t = float(per_node[k]), float(t[k])
    return ResidualReport(variant=variant, max_coefficient_residual=worst, breakdown=breakdown,
                          argmax_time=worst_t)


def verify_drift_identity_mi(params: MIParams, solution: RiccatiSolutionMI,
                             variant: str | None = None) -> ResidualReport:
    """Substitute ``Y = A X + B Xbar + C`` into the backward equation
    ``dY = -(b_X Y + c_X X + b_mu(1-lam) Ybar + c_mu(1-lam) Xbar) dt`` and into
    the expected forward drift, and report coefficient mismatches.

    The identities do not depend on how the solution was computed; ``variant``
    is only recorded (it defaults to the solution's own tag).
    """
    variant = resolve_variant(variant or solution.variant)
    k, bX, bmu, cX, cmu, lam = (params.k, params.b_X, params.b_mu, params.c_X, params.c_mu,
                                params.lam)
    dt = solution.grid.dt
    A, B, C, Xb = solution.A, solution.B, solution.C, solution.Xbar
    dA, dB, dC, dXb = (time_derivative(v, dt) for v in (A, B, C, Xb))
    # d(A X + B Xbar + C) with dX = (-k Y + b_X X + b_mu Xbar) dt, dXbar = (-k Ybar + (b_X+b_mu) Xbar) dt
    lhs_x = dA + A * (-k * A + bX)
    lhs_xbar = A * (-k * B + bmu) + dB + B * (-k * (A + B) + bX + bmu)
    lhs_const = dC - k * A * C - k * B * C
    rhs_x = -(bX * A + cX)
    rhs_xbar = -(bX * B + bmu * (1 - lam) * (A + B) + cmu * (1 - lam))
    rhs_const = -(bX * C + bmu * (1 - lam) * C)
    forward = dXb - ((-k * (A + B) + bX + bmu) * Xb - k * C)
    parts = {"backward.x": lhs_x - rhs_x, "backward.xbar": lhs_xbar - rhs_xbar,
             "backward.const": lhs_const - rhs_const, "forward.mean": forward}
    return _summarize(variant, parts, solution.grid.nodes)


def verify_drift_identity_mp(params: MPParams, solution: RiccatiSolutionMP,
                             variant: str | None = None) -> ResidualReport:
    """Matrix analogue against ``dY = (-M1 Y + M4 X - M5 Xbar - M6 Ybar) dt``
    (the two scalar adjoint equations written jointly)."""
    variant = resolve_variant(variant or solution.variant)
    m = build_mp_matrices(params)
    M1, M2, M3, M4, M5, M6 = m.M1, m.M2, m.M3, m.M4, m.M5, m.M6
    dt = solution.grid.dt
    A, B, C, Xb = solution.A, solution.B, solution.C, solution.Xbar
    dA, dB, dC, dXb = (time_derivative(v, dt) for v in (A, B, C, Xb))
    AB = A + B
    lhs_x = dA + A @ M1 + A @ M2 @ A
    rhs_x = -M1 @ A + M4
    lhs_xbar = A @ M2 @ B + A @ M3 + dB + B @ (M1 + M3) + B @ M2 @ AB
    rhs_xbar = -M1 @ B - M5 - M6 @ AB
    lhs_const = np.einsum("kij,kj->ki", AB @ M2, C) + dC
    rhs_const = -(C @ M1.T) - (C @ M6.T)
    drift = np.einsum("kij,kj->ki", M1 + M2 @ AB + M3, Xb) + C @ M2.T
    parts = {"backward.x": lhs_x - rhs_x, "backward.xbar": lhs_xbar - rhs_xbar,
             "backward.const": lhs_const - rhs_const, "forward.mean": dXb - drift}
    return _summarize(variant, parts, solution.grid.nodes)


# ---------------------------------------------------------------------------
# Hamiltonians


def _hamiltonian_mi(params, x, a, xbar, xbar_a, y):
    lam = params.lam
    drift = params.b_alpha * a + params.b_X * x + params.b_mu * (lam * xbar + (1 - lam) * xbar_a)
    return (drift * y + 0.5 * params.c_alpha * a * a + 0.5 * params.c_X * x * x
            + 0.5 * params.c_mu * (lam * xbar * xbar + (1 - lam) * xbar_a * xbar_a))


def _hamiltonian_group(g: GroupParams, p, x, a, xbar_nc, xbar_c, y):
    mixed = p * xbar_nc + (1 - p) * xbar_c
    drift = g.b_alpha * a + g.b_X * x + g.b_mu * mixed
    return (drift * y + 0.5 * g.c_alpha * a * a + 0.5 * g.c_X * x * x
            + 0.5 * g.c_mu * mixed * mixed)


@dataclass(frozen=True)
class HamiltonianCheck:
    alpha_hat: float
    gradient_residual: float
    second_difference: float

    @property
    def convex(self) -> bool:
        return self.second_difference > 0


def hamiltonian_minimizer_check(params, model: str, point: dict, step: float = 1e-5) -> HamiltonianCheck:
    """Finite-difference check that ``-b_alpha y / c_alpha`` zeroes the
    control derivative of the Hamiltonian at ``point``.

    ``model`` is ``"MI"``, ``"MP-NC"`` or ``"MP-C"``.  ``point`` carries ``x``,
    ``y`` and the means: ``xbar``/``xbar_alpha`` (MI) or ``xbar_nc``/``xbar_c``.
    """
    x, y = float(point.get("x", 0.0)), float(point.get("y", 0.0))
    if model == "MI":
        xb = float(point.get("xbar", 0.0))
        xba = float(point.get("xbar_alpha", xb))
        H = lambda a: _hamiltonian_mi(params, x, a, xb, xba, y)  # noqa: E731
        coeffs = params
    elif model in ("MP-NC", "MP-C"):
        coeffs = params.nc if model == "MP-NC" else params.c
        xnc, xc = float(point.get("xbar_nc", 0.0)), float(point.get("xbar_c", 0.0))
        H = lambda a: _hamiltonian_group(coeffs, params.p, x, a, xnc, xc, y)  # noqa: E731
    else:
        raise ValueError(f"unknown model {model!r}")
    a_hat = -coeffs.b_alpha * y / coeffs.c_alpha
    h_plus, h_0, h_minus = H(a_hat + step), H(a_hat), H(a_hat - step)
    grad = (h_plus - h_minus) / (2.0 * step)
    second = (h_plus - 2.0 * h_0 + h_minus) / (step * step)
    return HamiltonianCheck(alpha_hat=a_hat, gradient_residual=abs(grad), second_difference=second)


# ---------------------------------------------------------------------------
# best responses against a frozen mean path


def _spline_half(values, grid):
    """Node values plus cubic-spline midpoints on the half grid."""
    t = grid.nodes
    half_t = np.empty(2 * grid.n_steps + 1)
    half_t[0::2] = t
    half_t[1::2] = 0.5 * (t[:-1] + t[1:])
    return CubicSpline(t, values, axis=0)(half_t)


def best_response_mi(params: MIParams, xbar, grid: TimeGrid | None = None) -> FeedbackPolicy:
    """Optimal control of one agent facing the population mean path ``xbar``.

    The agent still internalizes its own mean ``m`` (weight ``1-lam``), so the
    adjoint is ``Y = A X + G m + h`` with ``m`` the agent's own deterministic
    mean.  The returned policy has no ``gain_mean``: its feed-forward
    ``-b_alpha/c_alpha (G m + h)`` is stored in ``intercept``.
    """
    grid = _grid_for(params, grid)
    xbar = np.asarray(xbar, dtype=float)
    k, bX, bmu, cmu, lam = params.k, params.b_X, params.b_mu, params.c_mu, params.lam
    q = 1.0 - lam
    dt = grid.dt

    A = riccati.integrate_A_mi(params, grid)
    fA = lambda a: k * a * a - 2 * bX * a - params.c_X  # noqa: E731
    Ah = riccati._half_grid(A, fA(A), dt)
    fG = lambda g, a: k * g * g + 2 * k * a * g - (2 * bX + 2 * bmu * q) * g - 2 * bmu * q * a - cmu * q  # noqa: E731
    G = riccati._rk4_backward(lambda y, j: fG(y, Ah[j]), 0.0, grid, "G")
    Gh = riccati._half_grid(G, fG(G, A), dt)
    Xh = _spline_half(xbar, grid)
    fh = lambda h, j: (k * (Ah[j] + Gh[j]) - bX - bmu * q) * h - (Ah[j] + Gh[j]) * bmu * lam * Xh[j]  # noqa: E731
    h = riccati._rk4_backward(fh, 0.0, grid, "h")
    dh = (k * (A + G) - bX - bmu * q) * h - (A + G) * bmu * lam * xbar
    hh = riccati._half_grid(h, dh, dt)
    fm = lambda m, j: (-k * (Ah[j] + Gh[j]) + bX + bmu * q) * m - k * hh[j] + bmu * lam * Xh[j]  # noqa: E731
    m = riccati._rk4_forward(fm, float(params.mu0_mean), grid, "m")
    r = -params.b_alpha / params.c_alpha
    return FeedbackPolicy(grid=grid, gain_self=r * A, gain_mean=np.zeros_like(A),
                          intercept=r * (G * m + h), xbar=xbar, label="best_response")


def best_response_mp_nc(params: MPParams, xbar, grid: TimeGrid | None = None) -> FeedbackPolicy:
    """Best response of a non-cooperative agent to frozen group means
    ``xbar`` of shape ``(n+1, 2)``: ``Y = A X + h`` with
    ``h' = (k A - b_X) h - A b_mu (p xbar_nc + (1-p) xbar_c)``."""
    grid = _grid_for(params, grid)
    xbar = np.asarray(xbar, dtype=float)
    g, p = params.nc, params.p
    k = g.k
    scalar = MIParams(b_alpha=g.b_alpha, b_X=g.b_X, c_alpha=g.c_alpha, c_X=g.c_X, c_T=g.c_T, T=params.T)
    A = riccati.integrate_A_mi(scalar, grid)
    Ah = riccati._half_grid(A, k * A * A - 2 * g.b_X * A - g.c_X, grid.dt)
    mixed = p * xbar[:, 0] + (1 - p) * xbar[:, 1]
    Mh = _spline_half(mixed, grid)
    h = riccati._rk4_backward(lambda y, j: (k * Ah[j] - g.b_X) * y - Ah[j] * g.b_mu * Mh[j], 0.0, grid, "h")
    r = -g.b_alpha / g.c_alpha
    return FeedbackPolicy(grid=grid, gain_self=r * A, gain_mean=np.zeros((grid.n_steps + 1, 2)),
                          intercept=r * h, xbar=xbar, label="best_response")


# ---------------------------------------------------------------------------
# reduction oracles; deliberately built on scipy's adaptive integrator and
# never on the RK4 code above

_TIGHT = dict(method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True)


def _scalar_riccati(k, drift, q, terminal, T):
    # A' = k A^2 - 2 drift A - q, A(T) = terminal
    return solve_ivp(lambda t, a: k * a * a - 2 * drift * a - q, (T, 0.0), [terminal], **_TIGHT).sol


def exogenous_mean_oracle(b_alpha, b_X, b_mu, c_alpha, c_X, c_T, mu0_mean, T, times):
    """Equilibrium of the pure game with an exogenous mean.

    The agent's adjoint is ``Y = A X + h`` (no mean terms in the cost), and the
    equilibrium requires ``xbar`` to be the mean produced by that control:
    a linear two-point problem for ``(xbar, h)`` solved by superposition.
    Returns ``(A, xbar, h)`` at ``times``; ``B = h / xbar`` wherever defined.
    """
    k = b_alpha**2 / c_alpha
    A = _scalar_riccati(k, b_X, c_X, c_T, T)

    def rhs(t, z):
        a = A(t)[0]
        xb, h = z
        return [(-k * a + b_X + b_mu) * xb - k * h, (k * a - b_X) * h - a * b_mu * xb]

    kw = dict(method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    s1 = solve_ivp(rhs, (0.0, T), [mu0_mean, 0.0], **kw).sol
    s2 = solve_ivp(rhs, (0.0, T), [0.0, 1.0], **kw).sol
    shoot = -s1(T)[1] / s2(T)[1]
    z = s1(times) + shoot * s2(times)
    return A(times)[0], z[0], z[1]


def mfc_oracle(group: GroupParams, T, times, mean_cost_factor: float = 2.0):
    """Fully cooperative single population (the mixed population at ``p = 0``).

    Splitting ``X = (X - Xbar) + Xbar``, the fluctuation keeps the ``A``
    Riccati while the mean obeys its own Riccati ``P`` with drift
    ``b_X + b_mu`` and state weight ``c_X + mean_cost_factor * c_mu``; the
    default factor 2 mirrors the cooperative adjoint equation used by the
    solver.  Returns ``(A, B, xbar)`` with ``B = P - A``.
    """
    g = group
    k = g.k
    A = _scalar_riccati(k, g.b_X, g.c_X, g.c_T, T)
    P = _scalar_riccati(k, g.b_X + g.b_mu, g.c_X + mean_cost_factor * g.c_mu, g.c_T, T)
    xbar = solve_ivp(lambda t, x: (-k * P(t)[0] + g.b_X + g.b_mu) * x, (0.0, T), [g.mu0_mean],
                     **_TIGHT).sol
    a, pp = A(times)[0], P(times)[0]
    return a, pp - a, xbar(times)[0]
