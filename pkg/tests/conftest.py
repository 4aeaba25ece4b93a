"""Shared synthetic fixtures. Everything is seeded through the
counter-based generator, so every test sees identical data on every
platform and run."""

import sys
from types import SimpleNamespace

import numpy as np
import pytest

from varcal.data import ReturnSeries, RunConfig, to_losses
from varcal.forecasters import hs_forecast
from varcal.regime import VALID_FROM, compute_embedding
from varcal.synth import RegimeModel, business_dates, simulate

TWO_STATE = dict(
    sigma=(0.008, 0.025),
    mu=(0.0, 0.0),
    transition=((0.98, 0.02), (0.05, 0.95)),
)


def make_market(n: int, seed: int) -> SimpleNamespace:
    """Two-regime synthetic market plus the standard derived objects."""
    model = RegimeModel(n=n, seed=seed, **TWO_STATE)
    sim = simulate(model)
    rs = ReturnSeries(dates=tuple(business_dates(n)), returns=sim.returns)
    ls = to_losses(rs)
    return SimpleNamespace(model=model, sim=sim, returns=rs, losses=ls)


@pytest.fixture(scope="session")
def market():
    """4,000-day series with a 1,200-day evaluation tail."""
    mkt = make_market(4000, seed=7)
    mkt.eval_range = (2800, 4000)
    mkt.forecasts = hs_forecast(mkt.losses, 0.01, window=252)
    mkt.embedding = compute_embedding(mkt.returns.returns, (VALID_FROM, 2800))
    return mkt


@pytest.fixture()
def cfg():
    return RunConfig(alpha=0.01, m=504, lam=0.005, h=1.0, n_min=50)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)


def assert_bit_equal(a: np.ndarray, b: np.ndarray, what: str = "") -> None:
    __tracebackhide__ = True
    if not np.array_equal(np.asarray(a), np.asarray(b)):
        raise AssertionError(f"arrays differ bit-wise {what}")
