"""Regime features: warm-up handling, causality, standardization, and
volatility-quintile bucketing."""

import numpy as np
import pytest

from varcal.errors import ConfigError, DataError
from varcal.regime import (
    ANNUALIZER,
    VALID_FROM,
    assign_vol_quintiles,
    compute_embedding,
    compute_raw_features,
    fit_standardizer,
    mar5,
    rv21,
)
from varcal.synth import CounterRng


@pytest.fixture(scope="module")
def returns():
    return 0.01 * CounterRng(51, 1).normals(400)


def test_batch_features_equal_point_functions_bitwise(returns):
    feats = compute_raw_features(returns)
    assert np.all(np.isnan(feats[:VALID_FROM]))
    for t in (VALID_FROM, 60, 150, 399):
        assert feats[t, 0] == rv21(returns, t)
        assert feats[t, 1] == mar5(returns, t)


def test_point_functions_refuse_short_history(returns):
    with pytest.raises(DataError):
        rv21(returns, VALID_FROM - 1)
    with pytest.raises(DataError):
        mar5(returns, 4)


def test_rv21_scaling_and_near_zero_variance():
    # constant returns: sample variance is zero up to representation
    # noise (0.01 has no exact binary form), so rv21 is ~0, not 0
    const = np.full(50, 0.01)
    assert abs(rv21(const, 30)) < 1e-12
    # an exactly representable constant gives exactly zero
    const2 = np.full(50, 0.015625)
    assert rv21(const2, 30) == 0.0
    # doubling returns doubles annualized vol
    rng = CounterRng(3, 1)
    r = 0.01 * rng.normals(100)
    assert rv21(2.0 * r, 50) == pytest.approx(2.0 * rv21(r, 50), rel=1e-12)
    assert ANNUALIZER == pytest.approx(np.sqrt(252.0))


def test_mar5_is_trailing_mean_absolute(returns):
    t = 100
    assert mar5(returns, t) == pytest.approx(np.mean(np.abs(returns[95:100])), rel=1e-15)


def test_features_are_causal(returns):
    base = compute_raw_features(returns)
    bumped = returns.copy()
    t_hit = 200
    bumped[t_hit] += 0.05
    after = compute_raw_features(bumped)
    # indices at or before the bump never move; later ones do
    assert np.array_equal(base[: t_hit + 1], after[: t_hit + 1], equal_nan=True)
    assert not np.allclose(base[t_hit + 1 :], after[t_hit + 1 :], equal_nan=True)


def test_standardize_invert_roundtrip(returns):
    emb = compute_embedding(returns, (VALID_FROM, 300))
    body = emb.raw[VALID_FROM:]
    back = emb.stats.invert(emb.standardized[VALID_FROM:])
    assert np.allclose(back, body, atol=1e-10)
    # standardized stats over the fit range: mean 0, sample std 1
    fit = emb.standardized[VALID_FROM:300]
    assert np.allclose(fit.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(fit.std(axis=0, ddof=1), 1.0, atol=1e-12)


def test_standardizer_rejects_degenerate_and_warmup_rows():
    flat = np.full(300, 0.015625)  # exactly zero variance feature
    raw = compute_raw_features(flat)
    with pytest.raises(DataError, match="degenerate"):
        fit_standardizer(raw, (VALID_FROM, 300))
    rng = CounterRng(8, 1)
    raw2 = compute_raw_features(0.01 * rng.normals(300))
    with pytest.raises(ConfigError, match="warm-up"):
        fit_standardizer(raw2, (0, 300))
    with pytest.raises(ConfigError):
        fit_standardizer(raw2, (50, 51))


def test_embedding_warmup_rows_stay_nan(returns):
    emb = compute_embedding(returns, (VALID_FROM, 300))
    assert np.all(np.isnan(emb.standardized[:VALID_FROM]))
    assert np.all(np.isfinite(emb.standardized[VALID_FROM:]))
    assert emb.valid_from == VALID_FROM


def test_quintile_sizes_and_ordering():
    rng = CounterRng(12, 1)
    vals = rng.normals(1751)
    labels = assign_vol_quintiles(vals)
    sizes = np.bincount(labels, minlength=5)
    assert sizes.tolist() == [351, 350, 350, 350, 350]
    # bucket boundaries respect value order up to ties
    for b in range(4):
        assert vals[labels == b].max() <= vals[labels == b + 1].min()


def test_quintile_even_split_and_small_input():
    labels = assign_vol_quintiles(np.arange(10.0))
    assert np.bincount(labels, minlength=5).tolist() == [2, 2, 2, 2, 2]
    assert labels.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    with pytest.raises(DataError):
        assign_vol_quintiles(np.array([]))


def test_quintile_ties_break_by_position():
    vals = np.zeros(10)
    labels = assign_vol_quintiles(vals)
    # all-equal values: earlier rows land in lower buckets
    assert labels.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
