import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ivfunc.errors import ConfigError, DataError
from ivfunc.kernels import get_kernel
from ivfunc.sde_sim import SamplePath, TimeGrid, make_grid, simulate_expou, ExpOUConfig, JumpConfig
from ivfunc.spotvol import (
    NO_TRUNCATION,
    TruncationRule,
    jr_spot_vol,
    k_from_theta,
    nw_spot_vol,
    truncation_level,
)


def brute_nw(x, T, kernel, k, v_n=math.inf):
    """Double loop over the defining sums."""
    K = get_kernel(kernel)
    n = len(x) - 1
    dl = T / n
    out = np.empty(n)
    for i in range(1, n + 1):
        num = den = 0.0
        for j in range(1, n + 1):
            w = float(K((j - 1 - i) / k))
            r = x[j] - x[j - 1]
            den += w
            if abs(r) <= v_n:
                num += w * r * r
        out[i - 1] = num / (den * dl) if den > 0 else np.nan
    return out


def brute_jr(x, T, k):
    n = len(x) - 1
    dl = T / n
    r = np.diff(x)
    return np.array([sum(r[i - 1 + m] ** 2 for m in range(k)) / (k * dl) for i in range(1, n - k + 2)])


@pytest.fixture(scope="module")
def path():
    return simulate_expou(ExpOUConfig(), JumpConfig(), make_grid(2, 40, days_per_unit=252), 11)


@pytest.mark.parametrize("kernel", ["exp", "unif2", "unifR"])
def test_nw_matches_double_loop(path, kernel):
    k = 7
    got = nw_spot_vol(path, kernel, k)
    want = brute_nw(path.x, path.grid.horizon, kernel, k)
    live = np.isfinite(want)
    assert_allclose(got.values[live], want[live], rtol=1e-10)
    assert got.meta["empty_windows"] == np.sum(~live)


def test_nw_exp_fft_path_matches_direct():
    p = simulate_expou(ExpOUConfig(), JumpConfig(), make_grid(5, 1560, days_per_unit=252), 4)
    k = 300
    got = nw_spot_vol(p, "exp", k).values
    # spot-check a few points against the direct sum
    K = get_kernel("exp")
    r2 = p.increments**2
    n = p.grid.n_steps
    j = np.arange(1, n + 1)
    for i in (1, 17, n // 2, n - 3, n):
        w = K((j - 1 - i) / k)
        assert_allclose(got[i - 1], np.sum(w * r2) / (np.sum(w) * p.grid.delta), rtol=1e-9)


def test_jr_matches_double_loop(path):
    k = 5
    s = jr_spot_vol(path, k)
    assert_allclose(s.values, brute_jr(path.x, path.grid.horizon, k), rtol=1e-12)
    assert len(s) == path.grid.n_steps - k + 1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(12, 300), k=st.integers(2, 11), seed=st.integers(0, 2**32 - 1))
def test_right_uniform_is_shifted_forward_window(n, k, seed):
    if k >= n:
        return
    x = np.concatenate([[0.0], np.cumsum(np.random.default_rng(seed).normal(size=n))])
    p = SamplePath(TimeGrid(1.0, n), x)
    nw = nw_spot_vol(p, "unifR", k).values
    jr = jr_spot_vol(p, k).values
    # both are the same moving sum; the kernel estimate at t_i starts at increment i+1
    assert np.array_equal(nw[: n - k], jr[1:])


@settings(max_examples=40, deadline=None)
@given(
    sigma=st.floats(0.01, 3.0),
    n=st.integers(20, 400),
    kernel=st.sampled_from(["exp", "unif2", "unifR"]),
    frac=st.floats(0.05, 0.45),
)
def test_exact_recovery_constant_increments(sigma, n, kernel, frac):
    grid = TimeGrid(1.0, n)
    step = sigma * math.sqrt(grid.delta)
    # alternating signs: squared increments are identical
    dx = step * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    p = SamplePath(grid, np.concatenate([[0.0], np.cumsum(dx)]))
    k = max(2, int(frac * n))
    assert_allclose(nw_spot_vol(p, kernel, k).values, sigma**2, rtol=1e-12)
    assert_allclose(jr_spot_vol(p, k).values, sigma**2, rtol=1e-12)


def test_truncation_removes_jump():
    grid = TimeGrid(1.0, 200)
    dx = 0.1 * math.sqrt(grid.delta) * np.ones(200)
    dx[100] = 1.0
    p = SamplePath(grid, np.concatenate([[0.0], np.cumsum(dx)]))
    rule = TruncationRule(alpha=3 * 0.1, varpi=0.49)
    s = nw_spot_vol(p, "unif2", 10, rule)
    assert s.meta["truncated"] == 1
    # unit-weight box: truncated windows lose one of their 2k increments
    want = brute_nw(p.x, 1.0, "unif2", 10, truncation_level(rule, grid.delta))
    assert_allclose(s.values, want, rtol=1e-12)
    assert np.max(nw_spot_vol(p, "unif2", 10).values) > 10 * 0.01


def test_truncation_level():
    assert truncation_level(NO_TRUNCATION, 0.01) == math.inf
    assert_allclose(truncation_level(TruncationRule(2.0, 0.25), 0.0001), 0.2)
    assert_allclose(TruncationRule.lower_varpi(4, 0.0), 7 / 16)
    with pytest.raises(ConfigError):
        TruncationRule(varpi=0.5)
    with pytest.raises(ConfigError):
        TruncationRule(alpha=0.0)


def test_degenerate_windows_counted():
    grid = TimeGrid(1.0, 50)
    dx = np.full(50, 0.01)
    dx[20:30] = 5.0
    p = SamplePath(grid, np.concatenate([[0.0], np.cumsum(dx)]))
    s = jr_spot_vol(p, 4, TruncationRule(1.0, 0.01))
    assert s.meta["truncated"] == 10
    assert s.meta["degenerate_windows"] == 10 - 4 + 1


def test_errors():
    grid = TimeGrid(1.0, 20)
    x = np.linspace(0, 1, 21)
    p = SamplePath(grid, x)
    with pytest.raises(ConfigError, match="invalid bandwidth"):
        nw_spot_vol(p, "exp", 20)
    with pytest.raises(ConfigError):
        nw_spot_vol(p, "exp", 1)
    with pytest.raises(ConfigError, match="invalid bandwidth"):
        jr_spot_vol(p, 25)
    x[7] = np.nan
    with pytest.raises(DataError, match="j = 7"):
        nw_spot_vol(SamplePath(grid, x), "exp", 4)


def test_k_from_theta():
    assert k_from_theta(0.2, 1 / (252 * 78)) == round(0.2 * math.sqrt(252 * 78))
    assert k_from_theta(1e-6, 0.01) == 2
    with pytest.raises(ConfigError):
        k_from_theta(0.0, 0.01)
