import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ivfunc.errors import ConfigError
from ivfunc.kernels import (
    compute_constants,
    discrete_constants,
    discrete_constants_all,
    eval_L,
    from_table,
    get_kernel,
    kbar,
    kbar_all,
    load_table_kernel,
)
from ivfunc.sde_sim import TimeGrid

E1 = math.exp(-1.0)


def riemann_constants(K, lo, hi, m=400_001):
    """Brute-force midpoint sums on a fine grid; independent of the quadrature code."""
    z, dz = np.linspace(lo, hi, m, retstep=True)
    zm = 0.5 * (z[1:] + z[:-1])
    k = K(zm)
    cdf = np.concatenate([[0.0], np.cumsum(k) * dz])
    mass = cdf[-1]
    cdf_mid = 0.5 * (cdf[1:] + cdf[:-1])
    Lm = np.where(zm > 0, mass - cdf_mid, -cdf_mid)
    return {
        "int_K2": np.sum(k * k) * dz,
        "int_L_pos": np.sum(Lm[zm > 0]) * dz,
        "int_L_neg": np.sum(Lm[zm < 0]) * dz,
        "int_L2": np.sum(Lm * Lm) * dz,
        "int_K_absz_cap1": np.sum(k * np.minimum(np.abs(zm), 1.0)) * dz,
    }


def test_exp_constants_closed_form():
    c = compute_constants(get_kernel("exp"))
    assert_allclose(c.int_K, 1.0, atol=1e-10)
    assert_allclose(c.int_K2, 0.25, atol=1e-10)
    assert_allclose(c.int_L2, 0.25, atol=1e-10)
    assert_allclose(c.int_L_pos, 0.5, atol=1e-10)
    assert_allclose(c.int_L_neg, -0.5, atol=1e-10)
    # int K(z) K(z-1) = (1 + 1) e^{-1} / 4 for the Laplace density
    assert_allclose(c.cross_KK1, 0.25 - 0.5 * E1, atol=1e-10)
    assert_allclose(c.int_K_absz_cap1, 1.0 - E1, atol=1e-10)
    assert_allclose(c.cross_LL1, 0.25, atol=1e-10)
    assert_allclose(c.c_k1, -0.75 / (E1 - 0.25), rtol=1e-9)
    assert_allclose(c.c_k2, c.cross_KK1 * c.c_k1, rtol=1e-12)


def test_uniform_constants_closed_form():
    c = compute_constants(get_kernel("unif2"))
    assert_allclose([c.int_K2, c.int_L_pos, c.int_L_neg, c.int_L2], [0.5, 0.25, -0.25, 1 / 6], atol=1e-10)
    r = compute_constants(get_kernel("unifR"))
    assert_allclose([r.int_K2, r.int_L_pos, r.int_L_neg, r.int_L2], [1.0, 0.5, 0.0, 1 / 3], atol=1e-10)
    assert_allclose([r.c_k1, r.c_k2], [-0.5, -0.5], atol=1e-10)


@pytest.mark.parametrize("name,lo,hi", [("exp", -40.0, 40.0), ("unif2", -1.0, 1.0), ("unifR", 0.0, 1.0)])
def test_constants_against_riemann_oracle(name, lo, hi):
    c = compute_constants(get_kernel(name))
    ref = riemann_constants(get_kernel(name), lo, hi)
    for key, value in ref.items():
        assert_allclose(getattr(c, key), value, atol=2e-5, err_msg=key)


def test_table_kernel_triangle():
    xs = np.linspace(-1, 1, 201)
    K = from_table(xs, 1 - np.abs(xs))
    c = compute_constants(K)
    assert_allclose(c.int_K2, 2 / 3, atol=1e-8)
    assert_allclose(c.int_L_pos, 1 / 6, atol=1e-8)
    assert_allclose(eval_L(K, 0.5), 0.125, atol=1e-12)


def test_load_table_kernel(tmp_path):
    xs = np.linspace(-1, 1, 11)
    f = tmp_path / "k.csv"
    np.savetxt(f, np.column_stack([xs, 2 * (1 - np.abs(xs))]), delimiter=",")
    with pytest.raises(ConfigError, match="integrates"):
        load_table_kernel(f)
    K = load_table_kernel(f, normalize=True)
    assert_allclose(compute_constants(K).int_K, 1.0, atol=1e-10)
    g = tmp_path / "k1.csv"
    np.savetxt(g, np.column_stack([xs, 1 - np.abs(xs)]), delimiter=",")
    assert get_kernel(f"table:{g}").support == (-1.0, 1.0)


def test_bad_kernels():
    with pytest.raises(ConfigError):
        get_kernel("gauss")
    with pytest.raises(ConfigError):
        from_table([0.0, 1.0, 0.5], [1.0, 1.0, 1.0])


def test_eval_L_quadrature_matches_closed_form():
    from dataclasses import replace

    exp = get_kernel("exp")
    bare = replace(exp, closed_form_L=None)
    t = np.array([-2.0, -0.3, 0.0, 0.4, 3.0])
    assert_allclose(eval_L(bare, t), eval_L(exp, t), atol=1e-10)


@pytest.mark.parametrize("name", ["exp", "unif2", "unifR"])
def test_discrete_constants_prefix_sums_match_direct(name):
    K = get_kernel(name)
    n, k = 48, 6
    grid = TimeGrid(1.0, n)
    fast = discrete_constants_all(K, n, k)
    for i in (1, 2, 7, 24, 41, 47, 48):
        direct = discrete_constants(K, grid, i, k)
        assert_allclose(fast.K2_sum[i - 1], direct["K2_sum"], atol=1e-13)
        assert_allclose(fast.L_pos_sum[i - 1], direct["L_pos_sum"], atol=1e-13)
        assert_allclose(fast.L_neg_sum[i - 1], direct["L_neg_sum"], atol=1e-13)
        assert_allclose(fast.L2_sum[i - 1], direct["L2_sum"], atol=1e-13)
        assert_allclose(kbar_all(K, n, k)[i - 1], kbar(K, grid, i, k), atol=1e-14)


def test_discrete_constants_approach_integrals_in_interior():
    K = get_kernel("unif2")
    c = compute_constants(K)
    dc = discrete_constants_all(K, 4000, 200)
    i = 2000
    assert_allclose(dc.K2_sum[i], c.int_K2, rtol=1e-2)
    assert_allclose(dc.L_pos_sum[i], c.int_L_pos, rtol=1e-2)
    assert_allclose(dc.L2_sum[i], c.int_L2, rtol=1e-2)


def test_window_must_be_smaller_than_n():
    with pytest.raises(ConfigError, match="k_n"):
        kbar_all(get_kernel("exp"), 10, 10)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(10, 200), k=st.integers(2, 9))
def test_kbar_interior_unity_right_uniform(n, k):
    kb = kbar_all(get_kernel("unifR"), n, k)
    assert np.all(kb[: n - k] == 1.0)
    assert kb[-1] == 0.0
