"""Single-trace transmission modeling: shift-and-scale operator, its adjoint and normal operator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .traces import (
    AnalyticWavelet,
    SampledWavelet,
    TimeGrid,
    Trace,
    evaluate_wavelet,
    lattice_shift,
)

# window membership slack, as a fraction of dt
_EDGE_TOL = 1e-7


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    r: float
    m_min: float
    m_max: float
    lambda_max: float
    grid: TimeGrid

    def __post_init__(self):
        if not self.r > 0:
            raise GeometryError(f"receiver distance must be positive, got r={self.r}")
        if not self.lambda_max > 0:
            raise GeometryError("lambda_max must be positive")

    @property
    def amplitude(self) -> float:
        """Spreading factor 1/(4 pi r)."""
        return 1.0 / (4.0 * math.pi * self.r)

    @property
    def dt(self) -> float:
        return self.grid.dt

    def window(self, m: float) -> tuple[float, float]:
        """Wavelet times seen by the data window at slowness m."""
        return self.grid.t_min - m * self.r, self.grid.t_max - m * self.r

    def wavelet_lattice(self, m: float) -> tuple[float, int]:
        """(offset, n) of the natural wavelet lattice at slowness m: data nodes shifted by -m r."""
        return self.grid.t_min - m * self.r, self.grid.n

    def admissible_window(self) -> tuple[float, float]:
        return (self.grid.t_min - self.m_max * self.r,
                self.grid.t_max - self.m_min * self.r)


@dataclass(frozen=True)
class GeometryReport:
    positivity_ok: bool
    condition_ok: bool
    # [m_min r - lambda_max, m_max r + lambda_max] must sit inside [t_min, t_max]
    arrival_lo: float
    arrival_hi: float
    t_min: float
    t_max: float

    @property
    def ok(self) -> bool:
        return self.positivity_ok and self.condition_ok

    def lines(self) -> list[str]:
        return [
            f"slowness_positive = {self.positivity_ok}",
            f"arrival_interval = [{self.arrival_lo!r}, {self.arrival_hi!r}]",
            f"data_interval = [{self.t_min!r}, {self.t_max!r}]",
            f"arrival_inside_data = {self.condition_ok}",
            f"status = {'pass' if self.ok else 'fail'}",
        ]


def validate_geometry(g: Geometry) -> GeometryReport:
    lo = g.m_min * g.r - g.lambda_max
    hi = g.m_max * g.r + g.lambda_max
    return GeometryReport(
        positivity_ok=bool(0 < g.m_min <= g.m_max),
        condition_ok=bool(g.grid.t_min <= lo and hi <= g.grid.t_max),
        arrival_lo=lo,
        arrival_hi=hi,
        t_min=g.grid.t_min,
        t_max=g.grid.t_max,
    )


def require_valid(g: Geometry):
    rep = validate_geometry(g)
    if not rep.ok:
        raise GeometryError("invalid geometry:\n  " + "\n  ".join(rep.lines()))


def check_slowness(m: float, g: Geometry):
    # closed interval; see interior_range for the open-interval margin
    tol = 1e-12 * max(1.0, abs(g.m_max))
    if not (g.m_min - tol <= m <= g.m_max + tol):
        raise GeometryError(f"slowness {m} outside [{g.m_min}, {g.m_max}]")


def interior_range(g: Geometry) -> tuple[float, float]:
    """The open slowness interval, realized as the closed one shrunk by dt/r at each end."""
    margin = g.dt / g.r
    return g.m_min + margin, g.m_max - margin


def in_window(t: np.ndarray, lo: float, hi: float, dt: float) -> np.ndarray:
    eps = _EDGE_TOL * dt
    return (t >= lo - eps) & (t <= hi + eps)


def apply_forward(m: float, w: AnalyticWavelet, g: Geometry) -> Trace:
    check_slowness(m, g)
    t = g.grid.times
    return Trace(g.grid, g.amplitude * evaluate_wavelet(w, t - m * g.r))


def apply_forward_sampled(m: float, w: SampledWavelet, g: Geometry) -> Trace:
    """Shift a sampled wavelet to the receiver. Exact when the shift lands on w's lattice,
    linear interpolation otherwise."""
    check_slowness(m, g)
    if not math.isclose(w.dt, g.dt, rel_tol=1e-9):
        raise ValueError(f"wavelet dt {w.dt} differs from data dt {g.dt}")
    off, n = g.wavelet_lattice(m)
    k = lattice_shift(w.offset, off, g.dt)
    out = np.zeros(n)
    if k is not None:
        # data node j reads wavelet sample j + k
        j0 = max(0, -k)
        j1 = min(n, w.n - k)
        if j1 > j0:
            out[j0:j1] = w.samples[j0 + k:j1 + k]
    else:
        tq = g.grid.times - m * g.r
        out = np.interp(tq, w.times, w.samples, left=0.0, right=0.0)
    return Trace(g.grid, g.amplitude * out)


def apply_adjoint(m: float, d: Trace, g: Geometry, like: SampledWavelet | None = None) -> SampledWavelet:
    """Adjoint of the forward shift.

    By default the result lives on the data nodes shifted by ``-m r`` (exact, no
    interpolation). Passing ``like`` resamples onto that wavelet's lattice instead,
    interpolating linearly when the lattices are not aligned.
    """
    check_slowness(m, g)
    if d.grid != g.grid:
        raise ValueError("trace grid does not match geometry grid")
    off, n = g.wavelet_lattice(m)
    if like is None:
        return SampledWavelet(off, g.dt, g.amplitude * d.samples)
    k = lattice_shift(off, like.offset, g.dt)
    out = np.zeros(like.n)
    if k is not None:
        # like sample i sits on data node i + k
        i0 = max(0, -k)
        i1 = min(like.n, n - k)
        if i1 > i0:
            out[i0:i1] = d.samples[i0 + k:i1 + k]
    else:
        tq = like.times + m * g.r
        out = np.interp(tq, g.grid.times, d.samples, left=0.0, right=0.0)
    return like.with_samples(g.amplitude * out)


def window_mask(m: float, w: SampledWavelet, g: Geometry) -> np.ndarray:
    lo, hi = g.window(m)
    return in_window(w.times, lo, hi, g.dt)


def apply_normal(m: float, w: SampledWavelet, g: Geometry) -> SampledWavelet:
    check_slowness(m, g)
    mask = window_mask(m, w, g)
    return w.with_samples(np.where(mask, g.amplitude**2 * w.samples, 0.0))
