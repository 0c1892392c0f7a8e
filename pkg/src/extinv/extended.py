"""Extended-source (penalty) inversion: inner solves, reduced objective and its gradient.

Every quadrature here runs over the data nodes with the multiplier evaluated
analytically at ``t - m r``, so the slowness can vary continuously without any
resampling of the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .forward import (
    Geometry,
    apply_adjoint,
    apply_forward_sampled,
    apply_normal,
    check_slowness,
)
from .traces import (
    AnalyticWavelet,
    SampledWavelet,
    Trace,
    evaluate_wavelet,
    norm,
    trapezoid_weights,
    wavelet_inner_product,
    wavelet_norm_sq,
)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PenaltySpec:
    """Multiplier a(t) = min(|t|, tau) with weight alpha."""

    tau: float
    alpha: float
    lambda_max: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("cutoff tau must be positive")
        if not self.alpha >= 0:
            raise ValueError("penalty weight alpha must be nonnegative")
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be positive")

    @property
    def coercivity_floor_C(self) -> float:
        return min(self.lambda_max, self.tau)

    def with_alpha(self, alpha: float) -> PenaltySpec:
        return PenaltySpec(self.tau, alpha, self.lambda_max)


def penalty_value(t, p: PenaltySpec):
    return np.minimum(np.abs(t), p.tau)


def penalty_slope_product(t, p: PenaltySpec):
    """a(t) a'(t): t inside the cutoff, 0 beyond it (one-sided value on the kink)."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < p.tau, t, 0.0)


def default_tau(geom: Geometry) -> float:
    t0, t1 = geom.grid.t_min, geom.grid.t_max
    lo, hi = geom.m_min * geom.r, geom.m_max * geom.r
    return max(abs(t0 - lo), abs(t0 - hi), abs(t1 - lo), abs(t1 - hi))


def make_penalty(geom: Geometry, alpha: float, tau: float | None = None) -> PenaltySpec:
    """Penalty with the cutoff at (or beyond) every admissible |t - m r|.

    A cutoff below the default would put the kink of a a' inside the
    integration domain for some admissible slowness; that is refused here.
    """
    tau_min = default_tau(geom)
    if tau is None:
        tau = tau_min
    elif tau < tau_min * (1 - 1e-12):
        raise ValueError(f"tau={tau} below the kink-free minimum {tau_min}")
    return PenaltySpec(tau=tau, alpha=alpha, lambda_max=geom.lambda_max)


@dataclass(frozen=True)
class ReducedEval:
    m: float
    objective: float
    misfit_term: float
    penalty_term: float
    gradient: float | None = None


def _data_norm_sq(d: Trace) -> float:
    nd2 = norm(d) ** 2
    if nd2 <= 0.0:
        raise ValueError("data trace has zero norm")
    return nd2


def _require_alpha_positive(p: PenaltySpec):
    if not p.alpha > 0:
        raise ValueError("alpha must be positive for the inner solve to be well posed")


def solve_source_closed(m: float, d: Trace, p: PenaltySpec, geom: Geometry) -> SampledWavelet:
    _require_alpha_positive(p)
    return _closed_form(m, d, p, geom)


def _closed_form(m, d, p, geom) -> SampledWavelet:
    fd = apply_adjoint(m, d, geom)
    a = penalty_value(fd.times, p)
    diag = geom.amplitude**2 + p.alpha**2 * a**2
    return fd.with_samples(fd.samples / diag)


def window_representative(m: float, d: Trace, p: PenaltySpec, geom: Geometry) -> SampledWavelet:
    """Closed-form inner solution, also at alpha = 0 (then the window-supported one)."""
    return _closed_form(m, d, p, geom)


def normal_residual(m: float, w: SampledWavelet, d: Trace, p: PenaltySpec, geom: Geometry) -> float:
    """|(F^T F + alpha^2 A^T A) w - F^T d| / |F^T d|, with F^T F applied as adjoint(forward(.))."""
    ftd = apply_adjoint(m, d, geom, like=w)
    ftf = apply_adjoint(m, apply_forward_sampled(m, w, geom), geom, like=w)
    a = penalty_value(w.times, p)
    lhs = ftf.samples + p.alpha**2 * a**2 * w.samples
    diff = w.with_samples(lhs - ftd.samples)
    den = wavelet_inner_product(ftd, ftd)
    if den == 0.0:
        return math.sqrt(wavelet_inner_product(diff, diff))
    return math.sqrt(wavelet_inner_product(diff, diff) / den)


def extended_lattice(m: float, geom: Geometry) -> tuple[float, int]:
    """Lattice through the data nodes shifted by -m r, widened to cover every admissible window."""
    off, n = geom.wavelet_lattice(m)
    lo, hi = geom.admissible_window()
    before = max(0, math.ceil((off - lo) / geom.dt - 1e-9))
    after = max(0, math.ceil((hi - (off + (n - 1) * geom.dt)) / geom.dt - 1e-9))
    return off - before * geom.dt, n + before + after


def embed(w: SampledWavelet, offset: float, n: int) -> SampledWavelet:
    """Zero-pad w onto a larger lattice sharing its nodes."""
    k = round((w.offset - offset) / w.dt)
    out = np.zeros(n)
    out[k:k + w.n] = w.samples
    return SampledWavelet(offset, w.dt, out)


def solve_source_iterative(m: float, d: Trace, p: PenaltySpec, geom: Geometry,
                           tol: float = 1e-10, max_iter: int = 1000) -> tuple[SampledWavelet, int]:
    """Conjugate gradients on the normal equation, operator applied matrix-free.

    Works on the widened lattice, where the data-fit part of the normal
    operator is the window indicator and only the penalty acts off-window.
    Returns the solution and the number of iterations taken.
    """
    _require_alpha_positive(p)
    off, n = extended_lattice(m, geom)
    template = SampledWavelet(off, geom.dt, np.zeros(n))
    a2 = penalty_value(template.times, p) ** 2
    wts = trapezoid_weights(n, geom.dt)

    def op(x):
        w = template.with_samples(x)
        return apply_normal(m, w, geom).samples + p.alpha**2 * a2 * x

    def dot(u, v):
        return float(np.sum(wts * u * v))

    b = apply_adjoint(m, d, geom, like=template).samples
    x = np.zeros(n)
    bnorm = math.sqrt(dot(b, b))
    if bnorm == 0.0:
        return template, 1
    res = b.copy()
    pdir = res.copy()
    rr = dot(res, res)
    for it in range(1, max_iter + 1):
        ap = op(pdir)
        step = rr / dot(pdir, ap)
        x += step * pdir
        res -= step * ap
        rr_new = dot(res, res)
        if math.sqrt(rr_new) <= tol * bnorm:
            return template.with_samples(x), it
        pdir = res + (rr_new / rr) * pdir
        rr = rr_new
    raise ConvergenceError(
        f"CG did not reach relative residual {tol} in {max_iter} iterations "
        f"(reached {math.sqrt(rr) / bnorm:.3e})")


def _integrands(m, d, p, geom):
    s = geom.grid.times - m * geom.r
    a = penalty_value(s, p)
    k = 4.0 * math.pi * geom.r * p.alpha
    u = (k * a) ** 2
    return s, a, u


def reduced_objective(m: float, d: Trace, p: PenaltySpec, geom: Geometry) -> ReducedEval:
    check_slowness(m, geom)
    nd2 = _data_norm_sq(d)
    _, a, u = _integrands(m, d, p, geom)
    wd2 = geom.grid.weights() * d.samples**2
    inv = 1.0 / (1.0 + u)
    misfit = 0.5 * float(np.sum(wd2 * u * u * inv * inv)) / nd2
    pen = 0.5 * float(np.sum(wd2 * (4.0 * math.pi * geom.r * a) ** 2 * inv * inv)) / nd2
    obj = 0.5 * float(np.sum(wd2 * u * inv)) / nd2
    return ReducedEval(m=float(m), objective=obj, misfit_term=misfit, penalty_term=pen)


def reduced_gradient(m: float, d: Trace, p: PenaltySpec, geom: Geometry) -> float:
    """Derivative of the reduced objective in m.

    d/dm of a(t - m r)^2 carries the chain-rule factor -r, so the prefactor is
    -r (4 pi r alpha)^2 / |d|^2.
    """
    _require_alpha_positive(p)
    check_slowness(m, geom)
    nd2 = _data_norm_sq(d)
    s, _, u = _integrands(m, d, p, geom)
    k = 4.0 * math.pi * geom.r * p.alpha
    aa = penalty_slope_product(s, p)
    wd2 = geom.grid.weights() * d.samples**2
    return -geom.r * k**2 * float(np.sum(wd2 * aa / (1.0 + u) ** 2)) / nd2


def reduced_eval(m: float, d: Trace, p: PenaltySpec, geom: Geometry) -> ReducedEval:
    ev = reduced_objective(m, d, p, geom)
    return ReducedEval(ev.m, ev.objective, ev.misfit_term, ev.penalty_term,
                       reduced_gradient(m, d, p, geom))


def noise_free_objective(m: float, w_star: AnalyticWavelet, m_star: float,
                         p: PenaltySpec, geom: Geometry) -> ReducedEval:
    """Reduced objective and gradient for data F[m_star] w_star, integrated over the
    wavelet support with adaptive quadrature; no trace is synthesized.

    The gradient entry is filled only when alpha > 0.
    """
    check_slowness(m, geom)
    check_slowness(m_star, geom)
    if w_star.support_radius_mu > geom.lambda_max * (1 + 1e-12):
        raise ValueError("wavelet support radius exceeds lambda_max")
    shift = (m - m_star) * geom.r
    four_pi_r = 4.0 * math.pi * geom.r
    k = four_pi_r * p.alpha
    lo, hi = w_star.support
    wn2 = wavelet_norm_sq(w_star)
    # kinks of the integrand; ones that graze an endpoint only create slivers
    edge = 1e-9 * (hi - lo)
    pts = [x for x in (shift, shift - p.tau, shift + p.tau) if lo + edge < x < hi - edge]

    # largest |t - shift| on the support; every integrand below is bounded by
    # w*^2 times the given scale, which sets the absolute tolerance (needed for
    # integrals that vanish by symmetry)
    a_max = min(max(abs(lo - shift), abs(hi - shift)), p.tau)

    def quad(f, scale):
        val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-14 * wn2 * scale,
                                epsrel=1e-12, limit=500)
        return val

    def parts(t):
        s = t - shift
        a = min(abs(s), p.tau)
        return s, a, 1.0 + (k * a) ** 2, evaluate_wavelet(w_star, t) ** 2

    def e_int(t):
        s, a, q, w2 = parts(t)
        return (k * a) ** 4 / q**2 * w2

    def p_int(t):
        s, a, q, w2 = parts(t)
        return (four_pi_r * a) ** 2 / q**2 * w2

    def j_int(t):
        s, a, q, w2 = parts(t)
        return (k * a) ** 2 / q * w2

    misfit = 0.5 * quad(e_int, 1.0) / wn2
    pen = 0.5 * quad(p_int, (four_pi_r * a_max) ** 2) / wn2
    obj = 0.5 * quad(j_int, 1.0) / wn2
    grad = None
    if p.alpha > 0:
        def g_int(t):
            s, a, q, w2 = parts(t)
            aa = s if abs(s) < p.tau else 0.0
            return k**2 * aa / q**2 * w2
        grad = -geom.r * quad(g_int, k**2 * a_max) / wn2
    return ReducedEval(m=float(m), objective=obj, misfit_term=misfit,
                       penalty_term=pen, gradient=grad)


_STENCILS = {
    2: (np.array([1.0]), 2.0),
    4: (np.array([8.0, -1.0]), 12.0),
}


def centered_difference(f: np.ndarray, dt: float, order: int = 4) -> np.ndarray:
    """Centered first derivative with zero padding beyond the ends (a skew-symmetric matrix)."""
    coef, den = _STENCILS[order]
    pad = len(coef)
    fp = np.concatenate([np.zeros(pad), f, np.zeros(pad)])
    n = f.size
    out = np.zeros(n)
    for j, c in enumerate(coef, start=1):
        out += c * (fp[pad + j:pad + j + n] - fp[pad - j:pad - j + n])
    return out / (den * dt)


def apply_q(w: SampledWavelet, r: float, order: int = 4) -> SampledWavelet:
    """Slowness derivative generator: Q w = -r dw/dt (per unit slowness perturbation)."""
    return w.with_samples(-r * centered_difference(w.samples, w.dt, order))


def commutator_gradient(m: float, d: Trace, p: PenaltySpec, geom: Geometry, order: int = 4) -> float:
    """Gradient from the commutator form (alpha^2/2) <w, [Q, A^T A] w> / |d|^2.

    w is the closed-form inner solution; Q is discretized with centered
    differences of the given order and A^T A is multiplication by a(t)^2.
    """
    _require_alpha_positive(p)
    nd2 = _data_norm_sq(d)
    w = solve_source_closed(m, d, p, geom)
    a2 = penalty_value(w.times, p) ** 2
    q_a2w = apply_q(w.with_samples(a2 * w.samples), geom.r, order).samples
    a2_qw = a2 * apply_q(w, geom.r, order).samples
    comm = w.with_samples(q_a2w - a2_qw)
    return 0.5 * p.alpha**2 * wavelet_inner_product(w, comm) / nd2
