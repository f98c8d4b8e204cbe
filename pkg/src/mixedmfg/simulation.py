"""Finite-population simulation under the mean-field policies.

Agents use the decentralized feedback ``gain_self * X_i + feed-forward(t)``
where the feed-forward is built from the deterministic mean-field path; the
population coupling in the dynamics and in the mean-penalty of the cost uses
the realized empirical means.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .equilibrium import FeedbackPolicy, best_response_mi, best_response_mp_nc, time_derivative
from .params import MIParams, MPParams
from .riccati import RiccatiSolutionMI, RiccatiSolutionMP, _half_grid, _rk4_forward
from .rng import box_muller, run_generator

SCHEMES = ("euler", "heun")
# normals are drawn per run in blocks of this many steps; changing it changes
# the streams, so it is part of the reproducibility contract
NOISE_BLOCK = 32
DEVIATION_FACTORS = (0.8, 0.9, 1.1, 1.2)
Z95 = 1.959963984540054


class SimulationError(ArithmeticError):
    def __init__(self, run: int, agent: int, step: int):
        super().__init__(f"non-finite state in run {run}, agent {agent}, step {step}")
        self.run, self.agent, self.step = run, agent, step


@dataclass(frozen=True)
class SimConfig:
    """``N`` is the agent count of the mixed-individual model; ``N_nc`` and
    ``N_c`` the group sizes of the mixed-population model.  ``n_steps``
    defaults to the policy grid."""

    N: int = 100
    N_nc: int | None = None
    N_c: int | None = None
    n_runs: int = 100
    n_steps: int | None = None
    seed: int = 0
    scheme: str = "euler"

    def __post_init__(self):
        for name in ("N", "n_runs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("N_nc", "N_c", "n_steps"):
            v = getattr(self, name)
            if v is not None and int(v) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def group_sizes(self) -> tuple[int, int]:
        if self.N_nc is None or self.N_c is None:
            raise ValueError("mixed-population simulation needs N_nc and N_c")
        return int(self.N_nc), int(self.N_c)


@dataclass
class SimulationResult:
    times: np.ndarray
    empirical_mean_path: np.ndarray
    xbar_reference: np.ndarray
    mean_consistency_error: float
    consistency_by_group: np.ndarray
    cost_estimates: dict
    run_costs: dict
    deviator_costs: np.ndarray = field(repr=False, default=None)


@dataclass
class EpsilonEstimate:
    epsilon_hat: float
    half_width: float
    best_member: str
    family: list
    gains: dict
    n_runs: int

    @property
    def clipped(self) -> float:
        return max(self.epsilon_hat, 0.0)

    def to_dict(self) -> dict:
        return {"epsilon_hat": self.epsilon_hat, "epsilon_clipped": self.clipped,
                "half_width": self.half_width, "best_member": self.best_member,
                "family": list(self.family), "n_runs": self.n_runs,
                "gains": {k: {"mean": m, "half_width": h} for k, (m, h) in self.gains.items()}}


# ---------------------------------------------------------------------------
# population description shared by both models


@dataclass
class _Population:
    groups: np.ndarray            # (N,) group index of every agent
    coef: dict                    # name -> (N,) per-agent coefficient
    averaging: np.ndarray         # (N, G) columns average each group
    drift_weights: np.ndarray     # (G,) weights of the mean entering the drift
    cost_weights: np.ndarray      # (G,) weights of the penalized mean
    cost_scale: float             # multiplier of the squared empirical mean
    xbar_reference: np.ndarray    # (n+1, G) on the simulation grid
    gain: np.ndarray              # (n+1, N)
    feedforward: np.ndarray       # (n+1, N)
    exo_drift: np.ndarray         # (n+1, N) deterministic drift terms
    exo_cost: np.ndarray          # (n+1, N) deterministic mean-penalty terms


def _sim_grid(policy: FeedbackPolicy, sim: SimConfig):
    n = int(sim.n_steps or policy.grid.n_steps)
    T = policy.grid.T
    t = np.arange(n + 1) * (T / n)
    t[-1] = T
    # policy held piecewise constant between its own nodes; exact when the
    # simulation nodes are a subset of the policy nodes
    idx = np.minimum(np.floor(t / policy.grid.dt + 1e-9).astype(int), policy.grid.n_steps)
    return n, T / n, t, idx


def _deviation_mean_offset(policy, deviant, coef_pull, b_alpha, idx, dt, n, scheme):
    """Shift of the deviator's own mean relative to the mean-field path.

    ``delta' = a'(t) delta + b_alpha ((g' - g) xbar + (u' - u))`` with
    ``a' = b_X + b_alpha g' + coef_pull``; identically zero when the deviation
    equals the equilibrium policy.
    """
    xd = policy.xbar[idx]
    g, gd = policy.gain_self[idx], deviant.gain_self[idx]
    forcing = b_alpha * ((gd - g) * xd + deviant.feedforward[idx] - policy.feedforward[idx])
    slope = coef_pull + b_alpha * gd
    delta = np.zeros(n + 1)
    for k in range(n):
        f0 = slope[k] * delta[k] + forcing[k]
        pred = delta[k] + dt * f0
        if scheme == "heun":
            delta[k + 1] = delta[k] + 0.5 * dt * (f0 + slope[k + 1] * pred + forcing[k + 1])
        else:
            delta[k + 1] = pred
    return delta


def _population_mi(params: MIParams, policy: FeedbackPolicy, sim: SimConfig, deviant=None):
    n, dt, t, idx = _sim_grid(policy, sim)
    N = int(sim.N)
    lam = params.lam
    xd = policy.xbar[idx]
    gain = np.repeat(policy.gain_self[idx][:, None], N, axis=1)
    ff = np.repeat(policy.feedforward[idx][:, None], N, axis=1)
    law_mean = np.repeat(xd[:, None], N, axis=1)
    if deviant is not None:
        gain[:, 0] = deviant.gain_self[idx]
        ff[:, 0] = deviant.feedforward[idx]
        law_mean[:, 0] = xd + _deviation_mean_offset(
            policy, deviant, params.b_X + params.b_mu * (1 - lam), params.b_alpha, idx, dt, n,
            sim.scheme)
    coef = {name: np.full(N, getattr(params, name)) for name in
            ("b_alpha", "b_X", "b_mu", "sigma", "c_alpha", "c_X", "c_mu", "c_T", "mu0_mean", "mu0_var")}
    return _Population(
        groups=np.zeros(N, dtype=int), coef=coef, averaging=np.full((N, 1), 1.0 / N),
        drift_weights=np.array([lam]), cost_weights=np.array([1.0]), cost_scale=lam,
        xbar_reference=np.interp(t, policy.grid.nodes, policy.xbar)[:, None],
        gain=gain, feedforward=ff,
        exo_drift=params.b_mu * (1 - lam) * law_mean,
        exo_cost=(1 - lam) * law_mean**2,
    ), t, dt


def _population_mp(params: MPParams, policy: FeedbackPolicy, sim: SimConfig, deviant=None):
    n, dt, t, idx = _sim_grid(policy, sim)
    n_nc, n_c = sim.group_sizes()
    N = n_nc + n_c
    if abs(n_nc / N - params.p) > 1.0 / N:
        warnings.warn(f"group sizes imply p={n_nc / N:.4g}, model uses p={params.p:.4g}", stacklevel=3)
    groups = np.r_[np.zeros(n_nc, int), np.ones(n_c, int)]
    coef = {}
    for name in ("b_alpha", "b_X", "b_mu", "sigma", "c_alpha", "c_X", "c_mu", "c_T", "mu0_mean", "mu0_var"):
        coef[name] = np.where(groups == 0, getattr(params.nc, name), getattr(params.c, name))
    averaging = np.zeros((N, 2))
    averaging[:n_nc, 0] = 1.0 / n_nc
    averaging[n_nc:, 1] = 1.0 / n_c
    ff_groups = policy.feedforward[idx]
    gain = policy.gain_self[idx][:, groups]
    ff = ff_groups[:, groups]
    if deviant is not None:
        gain[:, 0] = deviant.gain_self[idx]
        ff[:, 0] = deviant.feedforward[idx]
    w = np.array([params.p, 1.0 - params.p])
    ref = np.stack([np.interp(t, policy.grid.nodes, policy.xbar[:, g]) for g in range(2)], axis=1)
    zeros = np.zeros((n + 1, N))
    return _Population(groups=groups, coef=coef, averaging=averaging, drift_weights=w,
                       cost_weights=w, cost_scale=1.0, xbar_reference=ref, gain=gain,
                       feedforward=ff, exo_drift=zeros, exo_cost=zeros), t, dt


def _run(pop: _Population, sim: SimConfig, t, dt):
    R = int(sim.n_runs)
    N = pop.groups.shape[0]
    n = t.shape[0] - 1
    cf = pop.coef
    gens = [run_generator(sim.seed, r) for r in range(R)]
    z0 = np.stack([box_muller(g, (N,)) for g in gens])
    X = cf["mu0_mean"] + np.sqrt(cf["mu0_var"]) * z0
    sqdt = math.sqrt(dt)
    vol = cf["sigma"] * sqdt

    def drift_and_cost(X, k):
        gm = X @ pop.averaging
        pull = gm @ pop.drift_weights
        pen = gm @ pop.cost_weights
        alpha = pop.gain[k] * X + pop.feedforward[k]
        drift = cf["b_alpha"] * alpha + cf["b_X"] * X + cf["b_mu"] * pull[:, None] + pop.exo_drift[k]
        running = 0.5 * (cf["c_alpha"] * alpha**2 + cf["c_X"] * X**2
                         + cf["c_mu"] * (pop.cost_scale * pen[:, None] ** 2 + pop.exo_cost[k]))
        return drift, running, gm

    if sim.scheme == "euler":
        w = np.full(n + 1, dt)
        w[-1] = 0.0
    else:
        w = np.full(n + 1, dt)
        w[0] = w[-1] = 0.5 * dt
    cost = np.zeros((R, N))
    means = np.empty((R, n + 1, pop.averaging.shape[1]))
    drift, running, gm = drift_and_cost(X, 0)
    noise = None
    for k in range(n):
        if k % NOISE_BLOCK == 0:
            noise = np.stack([box_muller(g, (NOISE_BLOCK, N)) for g in gens], axis=1)
        means[:, k] = gm
        cost += w[k] * running
        dW = vol * noise[k % NOISE_BLOCK]
        if sim.scheme == "euler":
            X = X + drift * dt + dW
        else:
            pred = X + drift * dt + dW
            drift_pred = drift_and_cost(pred, k + 1)[0]
            X = X + 0.5 * (drift + drift_pred) * dt + dW
        if not np.isfinite(X).all():
            r, i = np.argwhere(~np.isfinite(X))[0]
            raise SimulationError(int(r), int(i), k + 1)
        drift, running, gm = drift_and_cost(X, k + 1)
    means[:, n] = gm
    cost += w[n] * running + 0.5 * cf["c_T"] * X**2
    return means, cost


def _summarize(pop, t, means, cost, roles):
    ref = pop.xbar_reference
    per_group = np.abs(means - ref[None]).max(axis=1).mean(axis=0)
    R = cost.shape[0]
    run_costs, estimates = {}, {}
    for g, role in enumerate(roles):
        c = cost[:, pop.groups == g].mean(axis=1)
        run_costs[role] = c
        se = float(c.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
        estimates[role] = (float(c.mean()), se)
    emp = means.mean(axis=0)
    if len(roles) == 1:
        emp, ref, per_group_out = emp[:, 0], ref[:, 0], per_group
    else:
        per_group_out = per_group
    return SimulationResult(times=t, empirical_mean_path=emp, xbar_reference=ref,
                            mean_consistency_error=float(per_group.max()),
                            consistency_by_group=per_group_out, cost_estimates=estimates,
                            run_costs=run_costs, deviator_costs=cost[:, 0].copy())


def simulate_mi(params: MIParams, policy: FeedbackPolicy, sim: SimConfig,
                deviant: FeedbackPolicy | None = None) -> SimulationResult:
    """Euler-Maruyama (or Heun) simulation of ``N`` coupled agents.

    ``deviant`` replaces agent 0's policy; the deviator's own-mean term is
    then its mean under the deviation against the frozen mean-field path.
    """
    pop, t, dt = _population_mi(params, policy, sim, deviant)
    # a diverging path is reported by SimulationError, not overflow warnings
    with np.errstate(over="ignore", invalid="ignore"):
        means, cost = _run(pop, sim, t, dt)
    return _summarize(pop, t, means, cost, ("agent",))


def simulate_mp(params: MPParams, policy: FeedbackPolicy, sim: SimConfig,
                deviant: FeedbackPolicy | None = None) -> SimulationResult:
    """Two-group analogue; agents ``0..N_nc-1`` are non-cooperative.  The
    cooperative role cost is the social average over cooperative agents."""
    pop, t, dt = _population_mp(params, policy, sim, deviant)
    with np.errstate(over="ignore", invalid="ignore"):
        means, cost = _run(pop, sim, t, dt)
    return _summarize(pop, t, means, cost, ("NC", "C"))


def default_family(params, policy: FeedbackPolicy) -> list[FeedbackPolicy]:
    agent = policy if isinstance(params, MIParams) else policy.group(0)
    family = [agent.scaled(self_factor=f) for f in DEVIATION_FACTORS]
    family += [agent.scaled(mean_factor=f) for f in DEVIATION_FACTORS]
    if isinstance(params, MIParams):
        family.append(best_response_mi(params, policy.xbar, policy.grid))
    else:
        family.append(best_response_mp_nc(params, policy.xbar, policy.grid))
    return family


def estimate_epsilon_nash(params, policy: FeedbackPolicy, sim: SimConfig,
                          family: list[FeedbackPolicy] | None = None) -> EpsilonEstimate:
    """Largest average cost reduction agent 0 obtains by a unilateral switch
    to a member of ``family`` while everyone else keeps ``policy``.

    Both arms reuse the same per-run streams, so each run contributes one
    paired difference.  For the mixed-population model the deviator is a
    non-cooperative agent.  The estimate is a lower bound on the true epsilon
    since the family is finite.
    """
    simulate = simulate_mi if isinstance(params, MIParams) else simulate_mp
    if family is None:
        family = default_family(params, policy)
    base = simulate(params, policy, sim).deviator_costs
    R = base.shape[0]
    gains = {}
    labels = []
    for member in family:
        label = member.label
        while label in gains:
            label += "'"
        labels.append(label)
        diff = base - simulate(params, policy, sim, deviant=member).deviator_costs
        hw = Z95 * float(diff.std(ddof=1)) / math.sqrt(R) if R > 1 else float("inf")
        gains[label] = (float(diff.mean()), hw)
    best = max(gains, key=lambda k: gains[k][0])
    return EpsilonEstimate(epsilon_hat=gains[best][0], half_width=gains[best][1], best_member=best,
                           family=labels, gains=gains, n_runs=R)


# ---------------------------------------------------------------------------
# deterministic mean-field cost


def _variance_path(slope, sigma, var0, grid):
    """RK4 for ``V' = 2 a(t) V + sigma^2`` with ``a`` known at the nodes."""
    a_half = _half_grid(slope, time_derivative(slope, grid.dt), grid.dt)
    return _rk4_forward(lambda v, j: 2.0 * a_half[j] * v + sigma * sigma, float(var0), grid, "variance")


def _group_cost(grid, g, u, xbar, pen, b_alpha, b_X, sigma, c_alpha, c_X, c_mu, c_T, var0):
    var = _variance_path(b_X + b_alpha * g, sigma, var0, grid)
    m2 = var + xbar**2
    e_alpha2 = g * g * m2 + 2.0 * g * u * xbar + u * u
    running = 0.5 * (c_alpha * e_alpha2 + c_X * m2 + c_mu * pen)
    return float(simpson(running, x=grid.nodes) + 0.5 * c_T * m2[-1])


def evaluate_cost_deterministic(params, policy: FeedbackPolicy, solution):
    """Mean-field cost of the policy along the deterministic mean dynamics,
    with second moments from the variance ODE.  Returns a float for the
    mixed-individual model and ``{"NC": ..., "C": ...}`` otherwise."""
    grid = solution.grid
    if isinstance(solution, RiccatiSolutionMI):
        p = params
        xb = solution.Xbar
        return _group_cost(grid, policy.gain_self, policy.feedforward, xb, xb**2, p.b_alpha, p.b_X,
                           p.sigma, p.c_alpha, p.c_X, p.c_mu, p.c_T, p.mu0_var)
    if not isinstance(solution, RiccatiSolutionMP):
        raise TypeError("unsupported solution type")
    xb = solution.Xbar
    pen = (params.p * xb[:, 0] + (1 - params.p) * xb[:, 1]) ** 2
    ff = policy.feedforward
    out = {}
    for gi, (role, gp) in enumerate((("NC", params.nc), ("C", params.c))):
        out[role] = _group_cost(grid, policy.gain_self[:, gi], ff[:, gi], xb[:, gi], pen, gp.b_alpha,
                                gp.b_X, gp.sigma, gp.c_alpha, gp.c_X, gp.c_mu, gp.c_T, gp.mu0_var)
    return out
