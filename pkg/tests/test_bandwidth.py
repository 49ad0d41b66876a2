import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ivfunc.bandwidth import (
    THETA_MAX,
    BandwidthWarning,
    realized_quarticity,
    rv_on_spotvol,
    select_theta,
    theta_from_iq_vv,
    theta_from_moments,
    tsrv_volvol,
)
from ivfunc.errors import ConfigError, DataError
from ivfunc.kernels import compute_constants, get_kernel
from ivfunc.sde_sim import ExpOUConfig, JumpConfig, SamplePath, TimeGrid, make_grid, simulate_expou
from ivfunc.spotvol import k_from_theta, nw_spot_vol

EXP = compute_constants(get_kernel("exp"))


def deterministic_path(c_values, T=1.0):
    """Increments of size sqrt(c_j delta) with alternating sign."""
    n = len(c_values)
    grid = TimeGrid(T, n)
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return SamplePath(grid, np.concatenate([[0.0], np.cumsum(sign * np.sqrt(c_values * grid.delta))]))


def test_theta_closed_form():
    iq, vv = 0.3, 2.0
    assert_allclose(theta_from_iq_vv(iq, vv, EXP), math.sqrt(2 * 0.25 * iq / (0.75 * vv)), rtol=1e-9)
    assert_allclose(theta_from_moments(4 * iq, 2 * vv, EXP), theta_from_iq_vv(iq, vv, EXP))


@settings(max_examples=50)
@given(iq=st.floats(1e-6, 1e6), vv=st.floats(1e-6, 1e6), s=st.floats(1e-3, 1e3))
def test_theta_invariant_to_common_scale(iq, vv, s):
    assert_allclose(theta_from_iq_vv(s * iq, s * vv, EXP), theta_from_iq_vv(iq, vv, EXP), rtol=1e-12)


def test_tsrv_brownian_series():
    rng = np.random.default_rng(3)
    n, T, v = 10_000, 2.0, 0.7
    series = np.cumsum(rng.normal(0.0, math.sqrt(v * T / n), n))
    # without noise the slow-scale sum has relative sd sqrt(4K/(3n)); a short slow scale keeps it small
    assert abs(tsrv_volvol(series, slow_scale=10) / (v * T) - 1) < 0.15


def test_tsrv_linear_plus_noise():
    rng = np.random.default_rng(4)
    n = 10_000
    series = np.linspace(1.0, 2.0, n) + rng.normal(0.0, 0.01, n)
    # naive realized variance would be about 2 n sd^2 = 2
    assert abs(tsrv_volvol(series)) < 0.05


def test_tsrv_constant_and_errors():
    assert tsrv_volvol(np.full(100, 0.3)) >= -1e-15
    with pytest.raises(DataError, match="insufficient"):
        tsrv_volvol(np.zeros(10), slow_scale=5)
    with pytest.raises(ConfigError):
        tsrv_volvol(np.zeros(10), slow_scale=0)


def test_realized_quarticity_constant_magnitude():
    p = deterministic_path(np.full(500, 0.09), T=2.0)
    # sum (c delta)^2 / (3 delta) = n c^2 delta / 3
    assert_allclose(realized_quarticity(p), 2.0 * 0.09**2 / 3, rtol=1e-12)


def test_rv_on_spotvol_noise_only():
    # constant volatility: the lag-k differences are pure estimation noise
    corrected, raw = [], []
    for s in range(20):
        p = simulate_expou(ExpOUConfig(vol_of_factor=0.0, initial_factor=0.0), JumpConfig(),
                           make_grid(1, 23400, days_per_unit=252), s)
        spot = nw_spot_vol(p, "unifR", 200)
        corrected.append(rv_on_spotvol(spot, realized_quarticity(p)))
        raw.append(rv_on_spotvol(spot, 0.0))
    assert abs(np.mean(corrected)) < 0.1 * np.mean(raw)


def test_select_theta_exp_ou_band():
    for s in range(3):
        p = simulate_expou(ExpOUConfig(), JumpConfig(), make_grid(1, 23400, days_per_unit=252), s)
        sel = select_theta(p, "exp", "square")
        assert 0.05 < sel.theta_star < 1.0
        assert sel.k_n == k_from_theta(sel.theta_star, p.grid.delta)
        assert sel.iterations == 1 and sel.spot_evaluations == 2
        assert sel.inputs["volvol_method"] == "tsrv"
        assert sel.inputs["iq_hat"] > 0 and sel.inputs["volvol_hat"] > 0


def test_one_sided_kernel_uses_rv_on_spotvol():
    p = simulate_expou(ExpOUConfig(), JumpConfig(), make_grid(1, 23400, days_per_unit=252), 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        sel = select_theta(p, "unifR", "square")
    assert sel.inputs["volvol_method"] == "rv_on_spotvol"
    assert sel.spot_evaluations == 2


def test_near_constant_volatility_hits_cap():
    n = 20_000
    c = 0.04 * (1 + 1e-7 * np.arange(n))
    sel = select_theta(deterministic_path(c, T=1.0), "exp", "square")
    assert not sel.fallback
    assert sel.theta_star == THETA_MAX
    assert sel.inputs["hess_volvol"] > 0


def test_negative_volvol_estimate_falls_back():
    # constant volatility with a one-sided kernel: the noise-corrected volvol comes out negative
    cfg = ExpOUConfig(vol_of_factor=0.0, initial_factor=0.0)
    p = simulate_expou(cfg, JumpConfig(), make_grid(1, 23400, days_per_unit=252), 4)
    with pytest.warns(BandwidthWarning):
        sel = select_theta(p, "unifR", "square", init_theta=0.3)
    assert sel.fallback and sel.theta_star == 0.3
    assert sel.inputs["hess_volvol"] <= 0


def test_time_unit_rescaling_keeps_window():
    p = simulate_expou(ExpOUConfig(), JumpConfig(), make_grid(1, 23400, days_per_unit=252), 5)
    q = SamplePath(TimeGrid(2 * p.grid.horizon, p.grid.n_steps), p.x)
    a = select_theta(p, "exp", "square", init_theta=0.2)
    b = select_theta(q, "exp", "square", init_theta=0.2 * math.sqrt(2))
    assert a.k_n == b.k_n
    assert_allclose(b.theta_star, a.theta_star * math.sqrt(2), rtol=1e-9)


def test_select_theta_errors():
    p = deterministic_path(np.full(100, 0.04))
    with pytest.raises(ConfigError):
        select_theta(p, "exp", "square", init_theta=0.0)
