"""Base quantile forecasters: rolling historical simulation, boosted
quantile trees, and the precomputed-forecast adapter."""

import numpy as np
import pytest

from varcal.data import LossSeries
from varcal.errors import ConfigError, DataError
from varcal.forecasters import (
    ForecastSeries,
    GbdtParams,
    GbdtQuantile,
    build_features,
    empirical_quantile_higher,
    gbdt_quantile_forecast,
    hs_forecast,
    load_external_forecasts,
    pinball_loss,
)
from varcal.regime import VALID_FROM
from varcal.synth import CounterRng, business_dates

from conftest import make_market


def _loss_series(values):
    return LossSeries(dates=tuple(business_dates(len(values))), losses=np.asarray(values, dtype=float))


def test_empirical_quantile_higher_convention():
    vals = np.array([5.0, 1.0, 3.0, 2.0, 4.0])
    assert empirical_quantile_higher(vals, 0.2) == 1.0  # ceil(1) -> 1st
    assert empirical_quantile_higher(vals, 0.21) == 2.0  # ceil(1.05) -> 2nd
    assert empirical_quantile_higher(vals, 1.0) == 5.0
    assert empirical_quantile_higher(vals, 0.5) == 3.0
    with pytest.raises(DataError):
        empirical_quantile_higher(np.array([]), 0.5)
    with pytest.raises(ConfigError):
        empirical_quantile_higher(vals, 0.0)


def test_hs_matches_direct_window_quantile():
    rng = CounterRng(61, 1)
    ls = _loss_series(0.01 * rng.normals(700))
    window, alpha = 252, 0.05
    f = hs_forecast(ls, alpha, window=window)
    assert f.valid_from == window
    assert np.all(np.isnan(f.qhat[:window]))
    picks = (np.abs(rng.normals(200, start=2000)) * 1e6).astype(np.int64) % (700 - window) + window
    for t in picks:
        assert f.qhat[t] == empirical_quantile_higher(ls.losses[t - window : t], 1.0 - alpha)


def test_hs_is_causal():
    rng = CounterRng(62, 1)
    base = 0.01 * rng.normals(600)
    bumped = base.copy()
    bumped[400] = 0.5
    fa = hs_forecast(_loss_series(base), 0.01, window=252)
    fb = hs_forecast(_loss_series(bumped), 0.01, window=252)
    assert np.array_equal(fa.qhat[: 400 + 1], fb.qhat[: 400 + 1], equal_nan=True)
    assert not np.array_equal(fa.qhat[401:], fb.qhat[401:])


def test_hs_window_floor():
    ls = _loss_series(np.zeros(400))
    with pytest.raises(ConfigError, match="too small"):
        hs_forecast(ls, 0.01, window=50)  # cannot resolve a 99% quantile


def test_forecast_series_validation():
    dates = tuple(business_dates(5))
    with pytest.raises(DataError):
        ForecastSeries(dates=dates, qhat=np.zeros(4), valid_from=0)
    with pytest.raises(DataError):
        ForecastSeries(dates=dates, qhat=np.array([0.0, np.nan, 0.0, 0.0, 0.0]), valid_from=0)
    ok = ForecastSeries(dates=dates, qhat=np.array([np.nan, 0.0, 0.0, np.nan, np.nan]), valid_from=1, valid_to=3)
    assert ok.valid_to == 3
    full = ForecastSeries(dates=dates, qhat=np.zeros(5), valid_from=0)
    assert full.valid_to == 5


def test_feature_matrix_lags_and_warmup():
    rng = CounterRng(63, 1)
    r = rng.normals(80)
    x = build_features(r)
    assert x.shape == (80, 7)
    assert np.all(np.isnan(x[:VALID_FROM]))
    t = 45
    for lag in range(1, 6):
        assert x[t, lag - 1] == r[t - lag]


def test_gbdt_training_pinball_never_increases():
    # five synthetic datasets; each boosting round's update is a leaf-wise
    # pinball minimizer, so training loss cannot rise
    for seed in range(5):
        rng = CounterRng(100 + seed, 1)
        n = 400
        x = rng.normals(3 * n).reshape(n, 3)
        noise = rng.normals(n, start=5000)
        y = 0.6 * x[:, 0] - 0.4 * np.abs(x[:, 1]) + 0.5 * noise
        params = GbdtParams(rounds=25, depth=2, learning_rate=0.2, window=1008, min_window=252)
        model = GbdtQuantile(0.9, params)
        model._edges = []
        qs = np.linspace(0.0, 1.0, params.n_bins + 1)[1:-1]
        for f in range(x.shape[1]):
            model._edges.append(np.unique(np.quantile(x[:, f], qs)))
        binned = model._bin(x)
        model.base_score = empirical_quantile_higher(y, 0.9)
        pred = np.full(n, model.base_score)
        losses = [pinball_loss(y, pred, 0.9)]
        from varcal.forecasters import _fit_tree

        for _ in range(params.rounds):
            resid = y - pred
            grad = np.where(resid < 0, 0.9 - 1.0, 0.9)
            tree = _fit_tree(binned, model._edges, grad, resid, 0.9, params)
            pred = pred + params.learning_rate * tree.predict(x, params.depth)
            losses.append(pinball_loss(y, pred, 0.9))
        for a, b in zip(losses, losses[1:]):
            assert b <= a + 1e-12
        assert losses[-1] < losses[0]  # and it actually learns


def test_gbdt_zero_rounds_is_global_quantile():
    rng = CounterRng(110, 1)
    x = rng.normals(200).reshape(100, 2)
    y = rng.normals(100, start=1000)
    model = GbdtQuantile(0.75, GbdtParams(rounds=0)).fit(x, y)
    assert np.all(model.predict(x) == empirical_quantile_higher(y, 0.75))


def test_gbdt_single_split_recovers_group_quantiles():
    # two clusters with integer targets: one stump at lr=1 must emit the
    # exact per-group quantile (integer arithmetic keeps floats exact)
    x = np.concatenate([np.zeros(20), np.ones(20)]).reshape(-1, 1)
    y = np.concatenate([np.arange(20.0), 100.0 + np.arange(20.0)])
    params = GbdtParams(rounds=1, depth=1, learning_rate=1.0)
    model = GbdtQuantile(0.9, params).fit(x, y)
    pred = model.predict(x)
    assert np.all(pred[:20] == empirical_quantile_higher(y[:20], 0.9))
    assert np.all(pred[20:] == empirical_quantile_higher(y[20:], 0.9))


def test_gbdt_forecast_is_causal_and_warm():
    mkt = make_market(700, seed=21)
    params = GbdtParams(rounds=10, depth=2, window=504, refit_every=21, min_window=252)
    f = gbdt_quantile_forecast(mkt.losses, mkt.returns.returns, 0.05, params)
    assert f.valid_from == VALID_FROM + params.min_window
    assert np.all(np.isnan(f.qhat[: f.valid_from]))
    assert np.all(np.isfinite(f.qhat[f.valid_from :]))

    t_hit = 500
    r2 = mkt.returns.returns.copy()
    r2[t_hit] = 0.2
    ls2 = LossSeries(dates=mkt.losses.dates, losses=-r2)
    f2 = gbdt_quantile_forecast(ls2, r2, 0.05, params)
    assert np.array_equal(f.qhat[: t_hit + 1], f2.qhat[: t_hit + 1], equal_nan=True)
    assert not np.array_equal(f.qhat[t_hit + 1 :], f2.qhat[t_hit + 1 :])


def test_gbdt_forecast_needs_enough_history():
    mkt = make_market(100, seed=1)
    with pytest.raises(DataError, match="too short"):
        gbdt_quantile_forecast(mkt.losses, mkt.returns.returns, 0.05, GbdtParams(rounds=1))


def test_gbdt_params_validation():
    with pytest.raises(ConfigError):
        GbdtParams(learning_rate=0.0)
    with pytest.raises(ConfigError):
        GbdtParams(window=100, min_window=252)
    with pytest.raises(ConfigError):
        GbdtParams(depth=0)
    with pytest.raises(ConfigError):
        GbdtQuantile(1.0, GbdtParams())


def test_external_adapter_covers_eval_and_trims_gaps(tmp_path):
    dates = tuple(business_dates(30))
    rows = ["date,qhat"]
    # a gap at position 9 breaks the early run; coverage is contiguous
    # from position 10 through the eval stop
    for i, d in enumerate(dates[:25]):
        if i == 9:
            continue
        rows.append(f"{d},{0.01 + 0.001 * i}")
    path = tmp_path / "f.csv"
    path.write_text("\n".join(rows) + "\n")

    f = load_external_forecasts(str(path), dates, eval_range=(15, 25))
    assert f.valid_from == 10
    assert f.valid_to == 25
    assert np.all(np.isfinite(f.qhat[10:25]))

    with pytest.raises(DataError, match="no forecast for"):
        load_external_forecasts(str(path), dates, eval_range=(15, 30))


def test_external_adapter_errors(tmp_path):
    dates = tuple(business_dates(10))
    p = tmp_path / "bad.csv"
    p.write_text("date,qhat\n" + f"{dates[0]},abc\n")
    with pytest.raises(DataError, match="bad forecast row"):
        load_external_forecasts(str(p), dates, eval_range=(0, 2))
    p2 = tmp_path / "cols.csv"
    p2.write_text("d,q\n2001-01-01,0.5\n")
    with pytest.raises(DataError, match="need columns"):
        load_external_forecasts(str(p2), dates, eval_range=(0, 2))
    with pytest.raises(DataError, match="cannot open"):
        load_external_forecasts(str(tmp_path / "none.csv"), dates, eval_range=(0, 2))
