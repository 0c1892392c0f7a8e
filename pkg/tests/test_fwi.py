import numpy as np
import pytest

from extinv.forward import apply_forward, apply_forward_sampled
from extinv.fwi import SupportError, fwi_landscape, fwi_misfit, fwi_reduced
from extinv.solver import NoiseSpec, Scenario, synthesize_data
from extinv.traces import AnalyticWavelet, SampledWavelet, Trace, evaluate_wavelet

from conftest import M_STAR, MU, default_geometry

LAM = 0.05


def test_misfit_examples(geom, w_star, d_clean):
    assert fwi_misfit(M_STAR, w_star, d_clean, LAM, geom) <= 1e-10
    zero = AnalyticWavelet("bump", MU, amplitude=0.0)
    for m in (0.2, 0.4, 0.55):
        assert fwi_misfit(m, zero, d_clean, LAM, geom) == pytest.approx(0.5, rel=1e-14)
    # disjoint arrivals: 0.5 (|w|^2/|w*|^2 + 1) with w = w*
    assert fwi_misfit(0.25, w_star, d_clean, LAM, geom) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(SupportError):
        fwi_misfit(0.4, AnalyticWavelet("bump", 0.08), d_clean, LAM, geom)


def test_reduced_at_truth(geom, w_star, d_clean):
    value, w = fwi_reduced(M_STAR, d_clean, LAM, geom)
    assert value <= 1e-10
    np.testing.assert_allclose(w.samples, evaluate_wavelet(w_star, w.times), atol=1e-12)


def test_plateau(geom, d_clean):
    pts = fwi_landscape(d_clean, LAM, np.linspace(0.125, 0.6, 476), geom)
    far = [p for p in pts if abs(p.m - M_STAR) * geom.r > 2 * LAM]
    assert len(far) == 275
    assert max(abs(p.value - 0.5) for p in far) <= 1e-6


def test_reduced_matches_brute_force_projection(w_star):
    g = default_geometry(n=401)
    d, _, _ = synthesize_data(Scenario(g, M_STAR, w_star, LAM, 0.01, NoiseSpec(0.3, seed=3)))
    W = np.sqrt(g.grid.weights())
    for k in (60, 78, 80, 85, 100):
        m = k * g.dt / g.r
        # wavelet lattice nodes inside [-lam, lam]
        off, n = g.wavelet_lattice(m)
        t = off + g.dt * np.arange(n)
        idx = np.nonzero(np.abs(t) <= LAM + 1e-9)[0]
        cols = []
        for i in idx:
            e = np.zeros(n)
            e[i] = 1.0
            cols.append(apply_forward_sampled(m, SampledWavelet(off, g.dt, e), g).samples)
        A = np.array(cols).T
        coef, *_ = np.linalg.lstsq(W[:, None] * A, W * d.samples, rcond=None)
        res = A @ coef - d.samples
        oracle = 0.5 * np.sum(g.grid.weights() * res**2) / np.sum(g.grid.weights() * d.samples**2)
        value, _ = fwi_reduced(m, d, LAM, g)
        assert value == pytest.approx(oracle, abs=1e-12)


def test_symmetry_about_truth(geom, d_clean):
    for j in range(1, 201, 7):
        delta = j * geom.dt / geom.r
        a, _ = fwi_reduced(M_STAR + delta, d_clean, LAM, geom)
        b, _ = fwi_reduced(M_STAR - delta, d_clean, LAM, geom)
        assert abs(a - b) <= 1e-8


def test_monotone_in_lambda(geom, w_star):
    d, _, _ = synthesize_data(Scenario(geom, M_STAR, w_star, LAM, 0.01, NoiseSpec(0.2, seed=5)))
    lams = [0.01, 0.03, 0.05, 0.1, 0.3, 0.5]
    for m in (0.2, 0.38, 0.4, 0.47):
        vals = [fwi_reduced(m, d, lam, geom)[0] for lam in lams]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_reduced_is_a_minimum(geom, d_clean, rng):
    for _ in range(20):
        m = float(rng.uniform(0.2, 0.55))
        mu = float(rng.uniform(0.005, LAM))
        w = AnalyticWavelet(str(rng.choice(["bump", "modulated-bump"])), mu,
                            float(rng.uniform(0, 30)), float(rng.uniform(-3, 3)))
        assert fwi_misfit(m, w, d_clean, LAM, geom) >= fwi_reduced(m, d_clean, LAM, geom)[0] - 1e-12


def test_zero_data_rejected(geom):
    with pytest.raises(ValueError):
        fwi_reduced(0.4, Trace.zeros(geom.grid), LAM, geom)
