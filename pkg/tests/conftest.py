import numpy as np
import pytest
from hypothesis import strategies as st

from mixedmfg import GroupParams, MIParams, MPParams

coef = st.floats(-2.0, 2.0, allow_nan=False)
weight = st.floats(0.1, 2.0, allow_nan=False)
nonzero = st.one_of(st.floats(-2.0, -0.1), st.floats(0.1, 2.0))
unit = st.floats(0.0, 1.0)


@st.composite
def mi_params(draw, T=None, bounded_mean_coupling=True):
    """Valid coefficient sets.  The mean coupling is kept moderate by
    default so the B-equation stays far from blow-up."""
    b_mu = draw(st.floats(-1.0, 1.0) if bounded_mean_coupling else coef)
    return MIParams(b_alpha=draw(nonzero), b_X=draw(coef), b_mu=b_mu, sigma=draw(st.floats(0, 1)),
                    c_alpha=draw(weight), c_X=draw(weight), c_mu=draw(weight), c_T=draw(weight),
                    lam=draw(unit), T=draw(st.floats(0.5, 2.0)) if T is None else T,
                    mu0_mean=draw(coef), mu0_var=draw(st.floats(0, 1)))


@st.composite
def group_params(draw):
    return GroupParams(b_alpha=draw(nonzero), b_X=draw(st.floats(-1, 1)), b_mu=draw(st.floats(-1, 1)),
                       sigma=draw(st.floats(0, 1)), c_alpha=draw(weight), c_X=draw(weight),
                       c_mu=draw(st.floats(0.1, 1.0)), c_T=draw(weight), mu0_mean=draw(coef),
                       mu0_var=draw(st.floats(0, 1)))


@st.composite
def mp_params(draw, T=1.0):
    return MPParams(nc=draw(group_params()), c=draw(group_params()), p=draw(unit), T=T)


@pytest.fixture
def unit_mi():
    return MIParams(b_mu=1.0, mu0_mean=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def layer_rate(g) -> float:
    """Fastest linearized rate of the gain Riccati near the terminal time,
    ``2 (k max(c_T, A_stationary) + |b_X|)``."""
    from mixedmfg.riccati import characteristic_roots

    dp, _ = characteristic_roots(g.b_alpha, g.b_X, g.c_alpha, g.c_X)
    return 2.0 * (g.k * max(g.c_T, dp / g.k) + abs(g.b_X))


# grids with dt * layer_rate above this do not resolve the terminal layer well
# enough for 1e-8 drift residuals (measured: 7e-9 at 0.015, 2e-6 at 0.03)
RESOLVED = 0.015


def resolved(params, n_steps) -> bool:
    groups = (params,) if hasattr(params, "lam") else (params.nc, params.c)
    return max(layer_rate(g) for g in groups) * params.T / n_steps <= RESOLVED


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion after the run

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
    _CRITERIA[number] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, title, detail = _CRITERIA[number]
        line = f"{verdict} criterion {number:2d}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
