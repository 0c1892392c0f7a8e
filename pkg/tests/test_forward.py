import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extinv.forward import (
    Geometry,
    GeometryError,
    apply_adjoint,
    apply_forward,
    apply_forward_sampled,
    apply_normal,
    check_slowness,
    interior_range,
    validate_geometry,
)
from extinv.traces import (
    AnalyticWavelet,
    SampledWavelet,
    Trace,
    build_grid,
    inner_product,
    norm,
    wavelet_inner_product,
    wavelet_norm,
    wavelet_norm_sq,
)

from conftest import default_geometry


def test_validate_geometry_examples():
    assert validate_geometry(default_geometry()).ok
    rep = validate_geometry(default_geometry(lambda_max=0.65))
    assert not rep.ok
    assert rep.arrival_lo == pytest.approx(-0.525)
    assert "status = fail" in rep.lines()


def test_nonpositive_slowness_fails():
    g = Geometry(1.0, 0.0, 0.6, 0.1, build_grid(-0.5, 1.5, 11))
    assert not validate_geometry(g).positivity_ok
    with pytest.raises(GeometryError):
        Geometry(0.0, 0.1, 0.6, 0.1, build_grid(-0.5, 1.5, 11))


def test_slowness_range(geom):
    check_slowness(geom.m_min, geom)
    check_slowness(geom.m_max, geom)
    with pytest.raises(GeometryError):
        check_slowness(0.61, geom)
    lo, hi = interior_range(geom)
    assert lo == pytest.approx(geom.m_min + geom.dt / geom.r)
    assert hi == pytest.approx(geom.m_max - geom.dt / geom.r)


def test_forward_examples(geom, w_star):
    zero = AnalyticWavelet("bump", 0.05, amplitude=0.0)
    assert not np.any(apply_forward(0.3, zero, geom).samples)
    d = apply_forward(0.4, w_star, geom)
    i = int(round((0.4 - geom.grid.t_min) / geom.dt))
    assert d.samples[i] == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    assert d.samples[i] == pytest.approx(0.0795775, abs=1e-7)


@pytest.mark.parametrize("m", [0.125, 0.3, 0.4, 0.5873, 0.6])
@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_scaled_isometry(m, r):
    g = Geometry(r, 0.125, 0.6, 0.1, build_grid(-0.5, 1.5, 4001))
    w = AnalyticWavelet("modulated-bump", 0.05, modulation_freq=15.0)
    lhs = norm(apply_forward(m, w, g))
    rhs = math.sqrt(wavelet_norm_sq(w)) / (4 * math.pi * r)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def _aligned_random_pair(geom, rng):
    k = int(rng.integers(250, 1200))
    m = k * geom.dt / geom.r
    off, n = geom.wavelet_lattice(m)
    if rng.random() < 0.5:
        w = SampledWavelet(off, geom.dt, rng.standard_normal(n))
    else:
        # a sub-window of the lattice, zero at both ends
        i0 = int(rng.integers(0, n // 2))
        length = int(rng.integers(3, n - i0))
        s = rng.standard_normal(length)
        s[0] = s[-1] = 0.0
        w = SampledWavelet(off + i0 * geom.dt, geom.dt, s)
    g = Trace(geom.grid, rng.standard_normal(geom.grid.n))
    return m, w, g


def test_dot_test_aligned(geom, rng):
    worst = 0.0
    for _ in range(120):
        m, w, g = _aligned_random_pair(geom, rng)
        lhs = inner_product(apply_forward_sampled(m, w, geom), g)
        rhs = wavelet_inner_product(w, apply_adjoint(m, g, geom, like=w))
        rhs_natural = wavelet_inner_product(w, apply_adjoint(m, g, geom))
        scale = norm(apply_forward_sampled(m, w, geom)) * norm(g)
        worst = max(worst, abs(lhs - rhs) / scale, abs(lhs - rhs_natural) / scale)
    assert worst <= 1e-8


def test_dot_test_interpolated(geom, rng):
    worst = 0.0
    for _ in range(100):
        m = float(rng.uniform(0.2, 0.55))
        off = float(rng.uniform(-0.3, -0.2))
        f1, f2 = rng.uniform(1.0, 4.0, size=2)
        ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
        n = int(0.5 / geom.dt)
        t = off + geom.dt * np.arange(n)
        taper = np.sin(np.pi * (t - off) / (t[-1] - off)) ** 2
        w = SampledWavelet(off, geom.dt, taper * np.cos(2 * np.pi * f1 * t + ph1))
        g = Trace.from_function(geom.grid, lambda s: np.cos(2 * np.pi * f2 * s + ph2))
        lhs = inner_product(apply_forward_sampled(m, w, geom), g)
        rhs = wavelet_inner_product(w, apply_adjoint(m, g, geom, like=w))
        scale = norm(apply_forward_sampled(m, w, geom)) * norm(g)
        worst = max(worst, abs(lhs - rhs) / scale)
    assert worst <= 1e-4


def test_adjoint_support_and_zero(geom, rng):
    m = 0.37
    zero = apply_adjoint(m, Trace.zeros(geom.grid), geom)
    assert not np.any(zero.samples)
    g = Trace(geom.grid, rng.standard_normal(geom.grid.n))
    out = apply_adjoint(m, g, geom)
    lo, hi = out.window
    assert lo == pytest.approx(geom.grid.t_min - m * geom.r)
    assert hi == pytest.approx(geom.grid.t_max - m * geom.r)
    # on a wider lattice nothing leaks outside the window
    wide = SampledWavelet(lo - 100 * geom.dt, geom.dt, np.zeros(geom.grid.n + 200))
    out = apply_adjoint(m, g, geom, like=wide)
    assert not np.any(out.samples[:100]) and not np.any(out.samples[-100:])


def test_normal_operator(geom, rng):
    m = 800 * geom.dt
    off, n = geom.wavelet_lattice(m)
    amp2 = geom.amplitude**2
    inside = SampledWavelet(off, geom.dt, rng.standard_normal(n))
    assert np.array_equal(apply_normal(m, inside, geom).samples, amp2 * inside.samples)
    outside = SampledWavelet(off + n * geom.dt, geom.dt, rng.standard_normal(50))
    assert not np.any(apply_normal(m, outside, geom).samples)
    # normal == adjoint o forward on aligned shifts
    for k in (300, 650, 1111):
        m = k * geom.dt / geom.r
        off, n = geom.wavelet_lattice(m)
        w = SampledWavelet(off - 40 * geom.dt, geom.dt, rng.standard_normal(n + 80))
        composed = apply_adjoint(m, apply_forward_sampled(m, w, geom), geom, like=w)
        direct = apply_normal(m, w, geom)
        assert np.max(np.abs(composed.samples - direct.samples)) <= 1e-12 * amp2 * np.max(np.abs(w.samples))


def test_round_trip_aligned(geom, w_star):
    m = 0.4
    off, n = geom.wavelet_lattice(m)
    w = SampledWavelet.from_analytic(w_star, off, geom.dt, n)
    back = apply_adjoint(m, apply_forward_sampled(m, w, geom), geom, like=w)
    assert np.max(np.abs(back.samples - w.samples * geom.amplitude**2)) <= 1e-12


def test_interpolation_error_order(w_star):
    errs = []
    for n in (2001, 4001, 8001):
        g = default_geometry(n=n)
        m = 0.4 + 0.37 * g.dt
        off = -0.1 + 0.5 * g.dt
        w = SampledWavelet.from_analytic(w_star, off, g.dt, int(0.2 / g.dt))
        diff = apply_forward_sampled(m, w, g).samples - apply_forward(m, w_star, g).samples
        errs.append(np.max(np.abs(diff)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(1.8 <= p <= 2.2 for p in orders), orders


def test_window_algebra_on_sweep(geom):
    # [-lambda_max, lambda_max] sits inside every window [t_min - m r, t_max - m r]
    for m in np.linspace(geom.m_min, geom.m_max, 476):
        lo, hi = geom.window(m)
        for lam in (0.01, 0.05, geom.lambda_max):
            assert lo <= -lam and lam <= hi


@settings(max_examples=100, deadline=None)
@given(m=st.floats(0.125, 0.6), scale=st.floats(-10, 10))
def test_forward_linearity(m, scale):
    g = default_geometry(n=1001)
    w = AnalyticWavelet("bump", 0.05)
    ws = AnalyticWavelet("bump", 0.05, amplitude=scale)
    np.testing.assert_allclose(apply_forward(m, ws, g).samples,
                               scale * apply_forward(m, w, g).samples, rtol=1e-12, atol=1e-300)
