"""Model coefficients, validation, and the two-group coefficient matrices."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np


class ValidationError(ValueError):
    """Raised when a coefficient set violates a model invariant.

    ``field`` names the offending parameter so callers (the CLI in
    particular) can report it in machine-readable form.
    """

    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class MIParams:
    """Coefficients of the mixed-individual model.

    ``lam`` is the altruism weight: it splits the mean-field terms of the
    drift and the running cost between the exogenous population mean
    (weight ``lam``) and the agent's own, internalized mean (``1 - lam``).
    """

    b_alpha: float = 1.0
    b_X: float = 0.0
    b_mu: float = 0.0
    sigma: float = 0.0
    c_alpha: float = 1.0
    c_X: float = 1.0
    c_mu: float = 1.0
    c_T: float = 1.0
    lam: float = 0.5
    T: float = 1.0
    mu0_mean: float = 0.0
    mu0_var: float = 0.0

    @property
    def k(self) -> float:
        """Feedback strength ``b_alpha**2 / c_alpha``."""
        return self.b_alpha**2 / self.c_alpha

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MIParams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown parameter(s): {sorted(unknown)}", sorted(unknown)[0])
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class GroupParams:
    """Coefficients of one sub-population of the mixed-population model."""

    b_alpha: float = 1.0
    b_X: float = 0.0
    b_mu: float = 0.0
    sigma: float = 0.0
    c_alpha: float = 1.0
    c_X: float = 1.0
    c_mu: float = 1.0
    c_T: float = 1.0
    mu0_mean: float = 0.0
    mu0_var: float = 0.0

    @property
    def k(self) -> float:
        return self.b_alpha**2 / self.c_alpha

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GroupParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown parameter(s): {sorted(unknown)}", sorted(unknown)[0])
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class MPParams:
    """Mixed-population model: non-cooperative group ``nc``, cooperative
    group ``c``, and ``p`` the proportion of non-cooperative agents."""

    nc: GroupParams = field(default_factory=GroupParams)
    c: GroupParams = field(default_factory=GroupParams)
    p: float = 0.5
    T: float = 1.0

    def groups(self) -> tuple[GroupParams, GroupParams]:
        return self.nc, self.c

    def to_dict(self) -> dict:
        return {"nc": self.nc.to_dict(), "c": self.c.to_dict(), "p": self.p, "T": self.T}

    @classmethod
    def from_dict(cls, d: dict) -> "MPParams":
        unknown = set(d) - {"nc", "c", "p", "T"}
        if unknown:
            raise ValidationError(f"unknown parameter(s): {sorted(unknown)}", sorted(unknown)[0])
        return cls(
            nc=GroupParams.from_dict(d.get("nc", {})),
            c=GroupParams.from_dict(d.get("c", {})),
            p=float(d.get("p", 0.5)),
            T=float(d.get("T", 1.0)),
        )


def _check_finite(obj, prefix=""):
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ValidationError(f"{prefix}{f.name} must be finite", prefix + f.name)


def _check_coefficients(g, prefix=""):
    # order matters: the first violated invariant is the one reported
    _check_finite(g, prefix)
    if g.b_alpha == 0:
        raise ValidationError(f"{prefix}b_alpha must be nonzero", prefix + "b_alpha")
    if g.sigma < 0:
        raise ValidationError(f"{prefix}sigma must be >= 0", prefix + "sigma")
    for name in ("c_alpha", "c_X", "c_mu", "c_T"):
        if not getattr(g, name) > 0:
            raise ValidationError(f"{prefix}{name} must be > 0", prefix + name)
    if g.mu0_var < 0:
        raise ValidationError(f"{prefix}mu0_var must be >= 0", prefix + "mu0_var")


def validate_mi(params: MIParams) -> MIParams:
    """Return ``params`` unchanged, or raise :class:`ValidationError` naming
    the first violated invariant."""
    _check_coefficients(params)
    if not 0.0 <= params.lam <= 1.0:
        raise ValidationError("lambda out of [0,1]", "lambda")
    if not params.T > 0:
        raise ValidationError("T must be > 0", "T")
    return params


def validate_mp(params: MPParams) -> MPParams:
    for prefix, g in (("nc.", params.nc), ("c.", params.c)):
        _check_coefficients(g, prefix)
    if not (math.isfinite(params.p) and 0.0 <= params.p <= 1.0):
        raise ValidationError("p out of [0,1]", "p")
    if not (math.isfinite(params.T) and params.T > 0):
        raise ValidationError("T must be > 0", "T")
    return params


@dataclass(frozen=True)
class MPMatrices:
    """Coefficient matrices of the two-group system.

    ``K`` holds ``b_alpha / c_alpha`` per group with a *positive* sign, so the
    equilibrium control reads ``-K (A x + B xbar + C)``.
    """

    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    M4: np.ndarray
    M5: np.ndarray
    M6: np.ndarray
    K: np.ndarray

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in ("M1", "M2", "M3", "M4", "M5", "M6", "K")}


def build_mp_matrices(params: MPParams) -> MPMatrices:
    nc, c, p = params.nc, params.c, params.p
    q = 1.0 - p
    mats = MPMatrices(
        M1=np.diag([nc.b_X, c.b_X]),
        M2=np.diag([-nc.b_alpha**2 / nc.c_alpha, -c.b_alpha**2 / c.c_alpha]),
        M3=np.array([[p * nc.b_mu, q * nc.b_mu], [p * c.b_mu, q * c.b_mu]]),
        M4=np.diag([-nc.c_X, -c.c_X]),
        M5=np.array([[0.0, 0.0], [2.0 * q * p * c.c_mu, 2.0 * q * q * c.c_mu]]),
        M6=np.array([[0.0, 0.0], [0.0, c.b_mu * q]]),
        K=np.diag([nc.b_alpha / nc.c_alpha, c.b_alpha / c.c_alpha]),
    )
    for m in mats.as_dict().values():
        m.setflags(write=False)
    return mats


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = T``."""

    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValidationError("T must be > 0", "T")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError("n_steps must be a positive integer", "n_steps")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.T
        return t

    @classmethod
    def default(cls, T: float, steps_per_unit: int = 2000) -> "TimeGrid":
        return cls(T, max(1, int(math.ceil(steps_per_unit * T - 1e-9))))
