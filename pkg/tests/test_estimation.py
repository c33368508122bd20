import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from anytime import estimation as est
from anytime import plant as pl
from anytime.errors import InternalCorruption, QuantizerOverflow
from anytime.thresholds import CanonicalPlant

from oracles import min_area_slab_ellipse, sample_cut_ball

CART = pl.cart_stick().canonical


# -- quantizer -------------------------------------------------------------------

@given(st.floats(-1e3, 1e3), st.floats(0.0, 0.99), st.floats(0.01, 10.0), st.sampled_from([2, 8, 32]))
def test_dequantize_recovers_bin(y, pos, delta, L):
    q = est.QuantizerSpec(delta, L)
    width = 0.98 * delta * (L - 1)
    lo = y - pos * width
    b = est.dequantize(q, est.quantize(q, y), (lo, lo + width))
    assert b[0] - 1e-9 <= y and (y < b[1] + 1e-9)
    assert b[1] - b[0] == pytest.approx(delta)


def test_quantizer_bins_are_left_closed():
    q = est.QuantizerSpec(0.5, 4)
    assert est.quantize(q, 0.5) == 1
    assert est.quantize(q, 0.49999) == 0
    assert est.quantize(q, -0.1) == 3


def test_quantizer_overflow_and_validation():
    q = est.QuantizerSpec(1.0, 4)
    with pytest.raises(QuantizerOverflow):
        est.dequantize(q, 0, (0.5, 4.5))
    with pytest.raises(QuantizerOverflow):
        est.dequantize(q, 3, (0.1, 0.9))
    for d, L in [(0.0, 4), (1.0, 3), (1.0, 0)]:
        with pytest.raises(ValueError):
            est.QuantizerSpec(d, L)
    assert est.QuantizerSpec(1.0, 32).bits == 5


@given(st.floats(-50, 50), st.floats(0, 0.999))
def test_anchored_roundtrip(anchor, frac):
    q = est.QuantizerSpec(0.3, 16)
    y = anchor + frac * q.delta * q.levels
    lo, hi = est.dequantize_anchored(q, est.quantize_anchored(q, y, anchor), anchor)
    assert lo - 1e-9 <= y < hi + 1e-9
    with pytest.raises(QuantizerOverflow):
        est.quantize_anchored(q, anchor - 1.0, anchor)


# -- hypercuboid -------------------------------------------------------------------

def corners(h):
    m = len(h.x_min)
    idx = np.array(np.meshgrid(*[[0, 1]] * m)).reshape(m, -1).T
    return np.where(idx, h.x_max, h.x_min)


@given(st.integers(0, 2**31))
def test_hypercuboid_updates_contain_true_state(seed):
    rng = np.random.default_rng(seed)
    lo = rng.normal(size=3)
    h = est.Hypercuboid(lo, lo + rng.random(3))
    u = rng.normal(size=3)
    nxt = est.hypercuboid_time_update(h, CART, Gu=u)
    for x in corners(h):
        w = (rng.random(3) - 0.5) * CART.W_vec
        assert nxt.contains(CART.F @ x + u + w, tol=1e-9)
    x = rng.uniform(nxt.x_min, nxt.x_max)
    v = (rng.random() - 0.5) * CART.V
    q = est.QuantizerSpec(0.1, 1 << 12)
    b = est.dequantize(q, est.quantize(q, x[0] + v), (nxt.x_min[0] - CART.V, nxt.x_max[0] + CART.V))
    post = est.hypercuboid_measurement_update(nxt, b, CART.V)
    assert post.contains(x, tol=1e-12)
    assert post.Delta[0] <= q.delta + CART.V + 1e-12


def test_measurement_outside_box_is_corruption():
    h = est.Hypercuboid([0, 0], [1, 1])
    with pytest.raises(InternalCorruption):
        est.hypercuboid_measurement_update(h, (5, 6), 0.1)


def iterate_centered(plant, delta, steps, Delta0):
    """Filter run where every measurement sits at the centre of the prediction."""
    h = est.Hypercuboid(-0.5 * Delta0, 0.5 * Delta0)
    out = []
    for _ in range(steps):
        c = h.center[0]
        h = est.hypercuboid_measurement_update(h, (c - delta / 2, c + delta / 2), plant.V)
        h = est.hypercuboid_time_update(h, plant)
        out.append(h.Delta)
    return out


@pytest.mark.parametrize("a", [[3.3, -3.27, 0.98], [2.0, 0.25, -0.5], [1.5, -0.7]])
def test_steady_state_reached_after_m_steps(a):
    plant = CanonicalPlant.from_coefficients(a, W=0.05, V=0.05)
    delta = 0.02
    ss = est.steady_state_delta(a, delta, plant.V, plant.W)
    Ds = iterate_centered(plant, delta, len(a) + 3, np.full(len(a), 100.0))
    for D in Ds[len(a) - 1:]:
        np.testing.assert_allclose(D, ss.Delta_tu, rtol=0, atol=1e-9)
    assert ss.rate_bits == pytest.approx(math.log2(sum(abs(x) for x in a)))


def test_upper_cumsum():
    assert est.upper_cumsum([1, 2, 3]).tolist() == [6, 5, 3]


def test_designed_delta_covers_prediction():
    for L in (16, 32, 64):
        d = est.design_delta_hypercuboid(CART, L)
        ss = est.steady_state_delta(CART.a, d, CART.V, CART.W_vec)
        assert d * L >= ss.Delta_tu[0] + CART.V - 1e-12
    with pytest.raises(ValueError):
        est.design_delta_hypercuboid(CART, 4)


# -- ellipsoid ---------------------------------------------------------------------

UNIT2 = est.Ellipsoid(np.eye(2), np.zeros(2))


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_min_volume_parameters_properties(g, d):
    g, d = min(g, d), max(g, d)
    assume(d - g > 1e-3)
    for m in (2, 3, 5):
        u = est.min_volume_parameters(m, g, d)
        mirror = est.min_volume_parameters(m, -d, -g)
        assert u.case == mirror.case
        assert mirror.xi == pytest.approx(-u.xi, abs=1e-12)
        assert mirror.a == pytest.approx(u.a) and mirror.b == pytest.approx(u.b)
        assert 0 < u.a <= 1 + 1e-12
        assert u.b <= m / (m - 1) + 1e-12
        if u.case == 3:
            assert g - 1e-12 <= u.xi <= d + 1e-12


def test_case_selection():
    assert est.min_volume_parameters(2, -0.9, 0.9).case == 1
    assert est.min_volume_parameters(2, -0.3, 0.3).case == 2
    assert est.min_volume_parameters(2, 0.1, 0.5).case == 3


@pytest.mark.parametrize("g,d", [(-0.2, 0.3), (0.1, 0.9), (-0.05, 0.05), (0.5, 0.6), (-0.8, -0.1)])
def test_min_volume_matches_grid_search(g, d):
    e = est.min_volume_ellipsoid_slab(UNIT2, [1, 0], g, d)
    area = math.pi * e.volume_factor()
    assert area == pytest.approx(min_area_slab_ellipse(g, d), rel=1e-3)
    pts = sample_cut_ball(np.random.default_rng(0), 2, g, d, 3000)
    assert all(e.contains(p, tol=1e-9) for p in pts)


@pytest.mark.parametrize("m", [3, 4])
def test_min_volume_contains_cut_ball_in_higher_dims(m):
    rng = np.random.default_rng(m)
    A = rng.normal(size=(m, m))
    base = est.Ellipsoid(A @ A.T + np.eye(m), rng.normal(size=m))
    h = rng.normal(size=m)
    g, d = -0.3, 0.6
    out = est.min_volume_ellipsoid_slab(base, h, g, d)
    L = np.linalg.cholesky(base.P)
    s = math.sqrt(h @ base.P @ h)
    for z in sample_cut_ball(rng, m, -1, 1, 4000):
        x = base.c + L @ z
        if g <= h @ (x - base.c) / s <= d:
            assert out.contains(x, tol=1e-9)
    assert out.volume_factor() < base.volume_factor()


@given(st.integers(0, 2**31))
def test_ellipsoid_time_update_contains_image(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    e = est.Ellipsoid(A @ A.T + 0.1 * np.eye(3), rng.normal(size=3))
    nxt = est.ellipsoid_time_update(e, CART, 0.25, Gu=np.ones(3))
    L = np.linalg.cholesky(e.P)
    for _ in range(50):
        z = rng.normal(size=3)
        x = e.c + L @ (z / np.linalg.norm(z))
        w = (rng.random(3) - 0.5) * CART.W_vec
        assert nxt.contains(CART.F @ x + np.ones(3) + w, tol=1e-9)


def test_non_psd_shape_is_corruption():
    with pytest.raises(InternalCorruption):
        est.Ellipsoid(np.diag([1.0, -1.0]), np.zeros(2))


def test_diagonal_bound_dominates_filter():
    plant, eps, L = CART, 0.25, 64
    delta = est.design_delta_ellipsoid(plant, L, eps)
    q = est.QuantizerSpec(delta, L)
    rng = np.random.default_rng(3)
    e = est.ellipsoid_time_update(est.Ellipsoid(np.eye(3) * 0.01, np.zeros(3)), plant, eps)
    bound = np.sqrt(np.diag(e.P))
    for _ in range(200):
        lo, hi = e.first_interval()
        y = rng.uniform(lo, hi)
        b = est.dequantize(q, est.quantize(q, y), (lo - plant.V / 2, hi + plant.V / 2))
        e, _ = est.ellipsoid_measurement_update(e, b, plant.V)
        post, bound = est.ellipsoid_bound_step(bound, plant, eps, delta, plant.V)
        assert np.all(np.sqrt(np.diag(e.P)) <= post * (1 + 1e-9))
        # a control cancelling the drift keeps the centre near the origin
        e = est.ellipsoid_time_update(e, plant, eps, Gu=-plant.F @ e.c)
        assert np.all(np.sqrt(np.diag(e.P)) <= bound * (1 + 1e-9))
    # the designed width lets the levels cover the steady prediction
    assert 2 * bound[0] + plant.V <= delta * L * (1 + 1e-9)
