"""Compiled and numpy kernel backends must agree.

Time-decay-only paths are held to bit equality. With the similarity
kernel active the threshold and fallback codes stay bit-equal, while the
weight diagnostics are allowed one part in 1e12 because the two backends
evaluate exp() through different library entry points.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from varcal import _kernels_py
from varcal.synth import CounterRng, simulate_iid_scores

_kernels = pytest.importorskip("varcal._kernels", reason="compiled extension not built")

N = 1200
START = 300


@pytest.fixture(scope="module")
def inputs():
    scores = simulate_iid_scores(N, seed=3, loc=0.0, scale=1.0)
    scores += 0.3 * np.sin(np.arange(N) / 50.0)
    rng = CounterRng(seed=3, stream=1)
    z = rng.normals(2 * N).reshape(N, 2)
    return np.ascontiguousarray(scores), np.ascontiguousarray(z)


def _both(fn_name, *args):
    a = getattr(_kernels_py, fn_name)(*args)
    b = getattr(_kernels, fn_name)(*args)
    return a, b


def assert_bits(x, y, what):
    __tracebackhide__ = True
    assert np.array_equal(np.asarray(x), np.asarray(y)), f"{what} differ between backends"


@pytest.mark.parametrize(
    "lam,correction",
    [(0.0, 0), (0.0, 1), (0.01, 0), (0.01, 1)],
    ids=["uniform", "uniform-corrected", "decayed", "decayed-corrected"],
)
def test_time_decay_paths_are_bit_identical(inputs, lam, correction):
    scores, z = inputs
    py, cy = _both(
        "run_weighted_conformal",
        scores, z, 0, 0, START, N, 252, lam, float("inf"), 0.0, 0.05, correction,
    )
    for p, c, what in zip(py, cy, ("chat", "n_eff", "tau", "fallback")):
        assert_bits(p, c, what)


def test_growing_window_is_bit_identical(inputs):
    scores, z = inputs
    # first == start - 1 leaves a single score in the earliest buffer
    py, cy = _both(
        "run_weighted_conformal",
        scores, z, 0, START - 1, START, N, 504, 0.005, float("inf"), 0.0, 0.01, 0,
    )
    for p, c, what in zip(py, cy, ("chat", "n_eff", "tau", "fallback")):
        assert_bits(p, c, what)


def test_similarity_kernel_threshold_matches_bitwise(inputs):
    scores, z = inputs
    py, cy = _both(
        "run_weighted_conformal",
        scores, z, 1, 0, START, N, 504, 0.005, 1.0, 50.0, 0.05, 0,
    )
    assert_bits(py[0], cy[0], "chat")
    assert_bits(py[3], cy[3], "fallback")
    np.testing.assert_allclose(py[1], cy[1], rtol=1e-12)
    np.testing.assert_allclose(py[2], cy[2], rtol=1e-12)


def test_safeguard_codes_agree_when_kernel_starves(inputs):
    scores, z = inputs
    z = z.copy()
    z[START:] += 40.0  # test points far from every calibration embedding
    py, cy = _both(
        "run_weighted_conformal",
        scores, z, 1, 0, START, N, 252, 0.0, 0.25, 100.0, 0.05, 0,
    )
    assert int(np.max(py[3])) >= 1
    assert_bits(py[3], cy[3], "fallback")
    assert_bits(py[0], cy[0], "chat")


def test_aci_is_bit_identical(inputs):
    scores, _ = inputs
    py, cy = _both("run_aci", scores, 0, START, N, 252, 0.05, 0.01, 0.001, 0.999)
    assert_bits(py[0], cy[0], "chat")
    assert_bits(py[1], cy[1], "alpha_t")


def _backend_name(env_value):
    env = dict(os.environ)
    env.pop("VARCAL_BACKEND", None)
    if env_value is not None:
        env["VARCAL_BACKEND"] = env_value
    return subprocess.run(
        [sys.executable, "-c", "import varcal.backend as b; print(b.BACKEND_NAME)"],
        capture_output=True,
        text=True,
        env=env,
    )


def test_env_var_forces_backend():
    out = _backend_name("python")
    assert out.returncode == 0 and out.stdout.strip() == "python"
    out = _backend_name("compiled")
    assert out.returncode == 0 and out.stdout.strip() == "compiled"
    out = _backend_name(None)
    assert out.returncode == 0 and out.stdout.strip() == "compiled"


def test_env_var_rejects_unknown_value():
    out = _backend_name("fast")
    assert out.returncode != 0
    assert "VARCAL_BACKEND" in out.stderr
