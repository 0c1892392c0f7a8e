"""Support-constrained least-squares (FWI) misfit and its reduced landscape."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import Geometry, apply_forward, check_slowness, in_window, require_valid
from .parallel import parallel_map
from .traces import AnalyticWavelet, SampledWavelet, Trace, norm


class SupportError(ValueError):
    pass


@dataclass(frozen=True)
class FwiPoint:
    m: float
    value: float
    best_wavelet_norm: float


def _data_norm_sq(d: Trace) -> float:
    nd2 = norm(d) ** 2
    if nd2 <= 0.0:
        raise ValueError("data trace has zero norm")
    return nd2


def _check_lambda(lam: float, geom: Geometry):
    if not 0 < lam <= geom.lambda_max * (1 + 1e-12):
        raise SupportError(f"support radius {lam} outside (0, lambda_max={geom.lambda_max}]")


def fwi_misfit(m: float, w: AnalyticWavelet, d: Trace, lam: float, geom: Geometry) -> float:
    """Relative mean-square error 0.5 |F[m] w - d|^2 / |d|^2 for w supported in [-lam, lam]."""
    _check_lambda(lam, geom)
    lo, hi = w.support
    if lo < -lam * (1 + 1e-12) or hi > lam * (1 + 1e-12):
        raise SupportError(f"wavelet support [{lo}, {hi}] not inside [-{lam}, {lam}]")
    nd2 = _data_norm_sq(d)
    res = apply_forward(m, w, geom) - d
    return 0.5 * norm(res) ** 2 / nd2


def fwi_reduced(m: float, d: Trace, lam: float, geom: Geometry) -> tuple[float, SampledWavelet]:
    """Minimum of the FWI misfit over wavelets supported in [-lam, lam], and the minimizer.

    The minimizer back-propagates the data inside the arrival window
    [m r - lam, m r + lam] and vanishes elsewhere; the residual is the data
    outside that window.
    """
    _check_lambda(lam, geom)
    check_slowness(m, geom)
    nd2 = _data_norm_sq(d)
    t = geom.grid.times
    inside = in_window(t, m * geom.r - lam, m * geom.r + lam, geom.dt)
    wts = geom.grid.weights()
    outside_energy = float(np.sum(np.where(inside, 0.0, wts * d.samples**2)))
    value = 0.5 * outside_energy / nd2
    offset = geom.grid.t_min - m * geom.r
    w_opt = SampledWavelet(offset, geom.dt,
                           np.where(inside, d.samples / geom.amplitude, 0.0))
    return value, w_opt


def _landscape_point(args) -> FwiPoint:
    m, d, lam, geom = args
    value, w = fwi_reduced(m, d, lam, geom)
    wn = math.sqrt(float(np.sum(geom.grid.weights() * w.samples**2)))
    return FwiPoint(float(m), value, wn)


def fwi_landscape(d: Trace, lam: float, m_grid, geom: Geometry, workers: int = 1) -> list[FwiPoint]:
    require_valid(geom)
    for m in m_grid:
        check_slowness(m, geom)
    return parallel_map(_landscape_point, [(m, d, lam, geom) for m in m_grid], workers)
