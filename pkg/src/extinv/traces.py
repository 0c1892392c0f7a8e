"""Time grids, sampled traces, trapezoid quadrature and compactly supported wavelets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

# (1 - x^2)^6 integrated over [-1, 1]
_BUMP_SQ_INTEGRAL = 2048.0 / 3003.0

WAVELET_FAMILIES = ("bump", "modulated-bump")


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t_min: float
    t_max: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.t_min) and math.isfinite(self.t_max)):
            raise ValueError("grid bounds must be finite")
        if self.t_min >= self.t_max:
            raise ValueError(f"need t_min < t_max, got {self.t_min} >= {self.t_max}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need at least 2 samples, got n={self.n}")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.n - 1)

    @property
    def times(self) -> np.ndarray:
        return self.t_min + self.dt * np.arange(self.n)

    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n, self.dt)


def build_grid(t_min: float, t_max: float, n: int) -> TimeGrid:
    return TimeGrid(float(t_min), float(t_max), int(n))


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


@dataclass(frozen=True, eq=False)
class Trace:
    """Samples of a square-integrable signal on a :class:`TimeGrid`."""

    grid: TimeGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("trace samples must be finite")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def __add__(self, other: Trace) -> Trace:
        _check_same_grid(self, other)
        return Trace(self.grid, self.samples + other.samples)

    def __sub__(self, other: Trace) -> Trace:
        _check_same_grid(self, other)
        return Trace(self.grid, self.samples - other.samples)

    def scaled(self, c: float) -> Trace:
        return Trace(self.grid, c * self.samples)

    @classmethod
    def zeros(cls, grid: TimeGrid) -> Trace:
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def from_function(cls, grid: TimeGrid, f) -> Trace:
        return cls(grid, f(grid.times))


def _check_same_grid(u: Trace, v: Trace):
    if u.grid != v.grid:
        raise GridMismatchError(f"traces live on different grids: {u.grid} vs {v.grid}")


def inner_product(u: Trace, v: Trace) -> float:
    _check_same_grid(u, v)
    return float(np.sum(u.grid.weights() * u.samples * v.samples))


def norm(u: Trace) -> float:
    return math.sqrt(max(inner_product(u, u), 0.0))


@dataclass(frozen=True)
class AnalyticWavelet:
    """Polynomial bump ``amplitude * (1 - ((t - center)/rho)^2)^3`` with ``rho = mu - |center|``.

    The support is exactly ``[center - rho, center + rho]``, which sits inside
    ``[-mu, mu]``. A nonzero ``center`` gives an off-center (asymmetric) wavelet
    touching one edge of the admissible support. ``modulated-bump`` multiplies
    by ``cos(2 pi f (t - center))``.
    """

    family: str = "bump"
    support_radius_mu: float = 0.05
    modulation_freq: float = 0.0
    amplitude: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.family not in WAVELET_FAMILIES:
            raise ValueError(f"unknown wavelet family {self.family!r}")
        if not self.support_radius_mu > 0:
            raise ValueError("support radius must be positive")
        if abs(self.center) >= self.support_radius_mu:
            raise ValueError("|center| must be smaller than the support radius")

    @property
    def profile_radius(self) -> float:
        return self.support_radius_mu - abs(self.center)

    @property
    def support(self) -> tuple[float, float]:
        rho = self.profile_radius
        return self.center - rho, self.center + rho

    def __call__(self, t):
        return evaluate_wavelet(self, t)


def evaluate_wavelet(w: AnalyticWavelet, t):
    t_arr = np.asarray(t, dtype=float)
    x = (t_arr - w.center) / w.profile_radius
    inside = np.abs(x) <= 1.0
    xi = np.where(inside, x, 0.0)
    val = w.amplitude * (1.0 - xi * xi) ** 3
    if w.family == "modulated-bump":
        val = val * np.cos(2.0 * np.pi * w.modulation_freq * (t_arr - w.center))
    out = np.where(inside, val, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def wavelet_norm_sq(w: AnalyticWavelet) -> float:
    """Continuum squared L2 norm of an analytic wavelet."""
    if w.family == "bump" or w.modulation_freq == 0.0:
        return w.amplitude**2 * w.profile_radius * _BUMP_SQ_INTEGRAL
    lo, hi = w.support
    val, _ = integrate.quad(lambda t: evaluate_wavelet(w, t) ** 2, lo, hi,
                            epsabs=0.0, epsrel=1e-13, limit=400)
    return val


@dataclass(frozen=True, eq=False)
class SampledWavelet:
    """Wavelet samples on the lattice ``offset + k*dt``; zero outside that window."""

    offset: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("sampled wavelet needs a 1-D array of at least 2 samples")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("wavelet samples must be finite")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.offset + self.dt * np.arange(self.n)

    @property
    def window(self) -> tuple[float, float]:
        return self.offset, self.offset + (self.n - 1) * self.dt

    def with_samples(self, samples) -> SampledWavelet:
        return SampledWavelet(self.offset, self.dt, samples)

    def scaled(self, c: float) -> SampledWavelet:
        return self.with_samples(c * self.samples)

    @classmethod
    def from_analytic(cls, w: AnalyticWavelet, offset: float, dt: float, n: int) -> SampledWavelet:
        t = offset + dt * np.arange(n)
        return cls(offset, dt, evaluate_wavelet(w, t))


def lattice_shift(offset_a: float, offset_b: float, dt: float, tol: float = 1e-6) -> int | None:
    """Integer k with ``offset_b = offset_a + k*dt`` (to ``tol*dt``), else None."""
    k = (offset_b - offset_a) / dt
    kr = round(k)
    if abs(k - kr) <= tol:
        return int(kr)
    return None


def wavelet_inner_product(u: SampledWavelet, v: SampledWavelet) -> float:
    """Trapezoid rule over the intersection of the two sample windows.

    Both wavelets must share ``dt`` and sit on a common lattice. Integrating
    over the intersection (rather than the union padded with zeros) keeps the
    half-weights at the window ends, which is what makes the discrete adjoint
    of the forward shift exact.
    """
    if not math.isclose(u.dt, v.dt, rel_tol=1e-12):
        raise GridMismatchError("wavelets have different sample intervals")
    k = lattice_shift(u.offset, v.offset, u.dt)
    if k is None:
        raise GridMismatchError("wavelets do not share a sampling lattice")
    # index of v's first sample in u's numbering is k
    lo = max(0, k)
    hi = min(u.n - 1, k + v.n - 1)
    if hi < lo:
        return 0.0
    us = u.samples[lo:hi + 1]
    vs = v.samples[lo - k:hi - k + 1]
    if hi == lo:
        return 0.0
    wts = trapezoid_weights(hi - lo + 1, u.dt)
    return float(np.sum(wts * us * vs))


def wavelet_norm(u: SampledWavelet) -> float:
    return math.sqrt(max(wavelet_inner_product(u, u), 0.0))
