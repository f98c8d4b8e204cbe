"""scikit-learn style front end.

``fit`` solves the equilibrium for the hyperparameters; ``predict`` evaluates
the equilibrium control.  ``set_params`` plus ``clone`` make parameter sweeps
a one-liner.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .conditions import check_mi_condition, check_mp_assumption
from .equilibrium import solve_mi, solve_mp, verify_drift_identity_mi, verify_drift_identity_mp
from .params import GroupParams, MIParams, MPParams, TimeGrid, build_mp_matrices
from .riccati import FBSDE, resolve_variant


def _grid(T, n_steps):
    return TimeGrid.default(T) if n_steps is None else TimeGrid(T, n_steps)


class MixedIndividualMFG(BaseEstimator):
    """Equilibrium of the mixed-individual model.

    After ``fit``: ``params_``, ``solution_``, ``policy_``, ``condition_`` and
    ``residual_`` are available.  ``predict`` takes rows ``(t, x)`` or
    ``(t, x, xbar)``; without ``xbar`` the equilibrium mean path is used.
    """

    def __init__(self, b_alpha=1.0, b_X=0.0, b_mu=0.0, sigma=0.0, c_alpha=1.0, c_X=1.0, c_mu=1.0,
                 c_T=1.0, lam=0.5, T=1.0, mu0_mean=0.0, mu0_var=0.0, n_steps=None, variant=FBSDE):
        self.b_alpha = b_alpha
        self.b_X = b_X
        self.b_mu = b_mu
        self.sigma = sigma
        self.c_alpha = c_alpha
        self.c_X = c_X
        self.c_mu = c_mu
        self.c_T = c_T
        self.lam = lam
        self.T = T
        self.mu0_mean = mu0_mean
        self.mu0_var = mu0_var
        self.n_steps = n_steps
        self.variant = variant

    def to_params(self) -> MIParams:
        names = MIParams.__dataclass_fields__
        return MIParams(**{k: float(v) for k, v in self.get_params().items() if k in names})

    def fit(self, X=None, y=None):
        params = self.to_params()
        variant = resolve_variant(self.variant)
        solution, policy = solve_mi(params, _grid(params.T, self.n_steps), variant)
        self.params_ = params
        self.solution_ = solution
        self.policy_ = policy
        self.condition_ = check_mi_condition(params, solution.grid)
        self.residual_ = verify_drift_identity_mi(params, solution)
        return self

    def predict(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(X, ensure_min_features=2)
        if X.shape[1] not in (2, 3):
            raise ValueError("rows must be (t, x) or (t, x, xbar)")
        t = X[:, 0]
        if np.any((t < 0) | (t > self.params_.T)):
            raise ValueError("times must lie in [0, T]")
        xbar = X[:, 2] if X.shape[1] == 3 else None
        return self.policy_(t, X[:, 1], xbar)


def _as_group(g) -> GroupParams:
    if g is None:
        return GroupParams()
    if isinstance(g, GroupParams):
        return g
    return GroupParams.from_dict(dict(g))


class MixedPopulationMFG(BaseEstimator):
    """Equilibrium of the mixed-population model.

    ``nc`` and ``c`` are group coefficient sets (``GroupParams`` or dicts).
    ``predict`` takes rows ``(t, x, group)`` with group 0 non-cooperative and
    1 cooperative, optionally followed by the two group means.
    """

    def __init__(self, nc=None, c=None, p=0.5, T=1.0, n_steps=None, variant=FBSDE):
        self.nc = nc
        self.c = c
        self.p = p
        self.T = T
        self.n_steps = n_steps
        self.variant = variant

    def to_params(self) -> MPParams:
        return MPParams(nc=_as_group(self.nc), c=_as_group(self.c), p=float(self.p), T=float(self.T))

    def fit(self, X=None, y=None, check_assumption=True):
        params = self.to_params()
        variant = resolve_variant(self.variant)
        solution, policy = solve_mp(params, _grid(params.T, self.n_steps), variant)
        self.params_ = params
        self.solution_ = solution
        self.policy_ = policy
        self.residual_ = verify_drift_identity_mp(params, solution)
        self.condition_ = (check_mp_assumption(build_mp_matrices(params), solution)
                           if check_assumption else None)
        return self

    def predict(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(X, ensure_min_features=3)
        if X.shape[1] not in (3, 5):
            raise ValueError("rows must be (t, x, group) or (t, x, group, xbar_nc, xbar_c)")
        t, x, grp = X[:, 0], X[:, 1], X[:, 2]
        if not np.all((grp == 0) | (grp == 1)):
            raise ValueError("group must be 0 or 1")
        if np.any((t < 0) | (t > self.params_.T)):
            raise ValueError("times must lie in [0, T]")
        grp = grp.astype(int)
        pol = self.policy_
        nodes = pol.grid.nodes
        out = np.empty(X.shape[0])
        for g in (0, 1):
            sel = grp == g
            if not sel.any():
                continue
            ts = t[sel]
            gain = np.interp(ts, nodes, pol.gain_self[:, g])
            if X.shape[1] == 3:
                ff = np.interp(ts, nodes, pol.feedforward[:, g])
            else:
                ff = (np.interp(ts, nodes, pol.gain_mean[:, g, 0]) * X[sel, 3]
                      + np.interp(ts, nodes, pol.gain_mean[:, g, 1]) * X[sel, 4]
                      + np.interp(ts, nodes, pol.intercept[:, g]))
            out[sel] = gain * x[sel] + ff
        return out
