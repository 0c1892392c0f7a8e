"""Data synthesis, stationary-point scans, discrepancy-driven inversion, truncation
certification and the error-bound report."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .extended import (
    PenaltySpec,
    make_penalty,
    noise_free_objective,
    reduced_gradient,
    reduced_objective,
    solve_source_closed,
)
from .forward import (
    Geometry,
    apply_forward,
    apply_forward_sampled,
    check_slowness,
    in_window,
    require_valid,
)
from .parallel import parallel_map
from .traces import AnalyticWavelet, SampledWavelet, Trace, evaluate_wavelet, norm

log = logging.getLogger(__name__)

NOISE_MODES = ("white", "source-filtered", "two-event")
ETA_THRESHOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NoiseSpec:
    eta: float | None = 0.0
    seed: int = 0
    mode: str = "white"
    m_b: float | None = None

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.eta is None and self.mode != "two-event":
            raise ValueError("eta may be omitted only for two-event noise")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.mode == "two-event" and self.m_b is None:
            raise ValueError("two-event noise needs the second slowness m_b")


@dataclass(frozen=True)
class Scenario:
    geom: Geometry
    m_star: float
    w_star: AnalyticWavelet
    lam: float
    epsilon: float
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        require_valid(self.geom)
        check_slowness(self.m_star, self.geom)
        mu = self.w_star.support_radius_mu
        if not mu <= self.lam * (1 + 1e-12) or not self.lam <= self.geom.lambda_max * (1 + 1e-12):
            raise ValueError(f"need mu <= lambda <= lambda_max, got {mu}, {self.lam}, "
                             f"{self.geom.lambda_max}")
        if not 0 <= self.epsilon < 1:
            raise ValueError("target relative error must lie in [0, 1)")

    @property
    def mu(self) -> float:
        return self.w_star.support_radius_mu


@dataclass
class InversionResult:
    m_hat: float
    alpha_final: float
    wavelet: SampledWavelet
    relative_residual: float
    iterations: list = field(default_factory=list)
    certified: bool = False
    converged: bool = True
    sufficient_epsilon: float | None = None
    message: str = ""


@dataclass(frozen=True)
class StationaryPoint:
    m_root: float
    bracket_lo: float
    bracket_hi: float
    grad_residual: float


@dataclass(frozen=True)
class BoundEntry:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    tag: str
    note: str = ""


@dataclass
class BoundReport:
    entries: list[BoundEntry] = field(default_factory=list)

    def __getitem__(self, name: str) -> BoundEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(e.name == name for e in self.entries)

    def add(self, name, lhs, rhs, satisfied, tag, note=""):
        self.entries.append(BoundEntry(name, float(lhs), float(rhs), bool(satisfied), tag, note))


# --- data ------------------------------------------------------------------

def _raw_noise(s: Scenario, d_star: Trace) -> np.ndarray:
    spec = s.noise
    geom = s.geom
    if spec.mode == "two-event":
        return apply_forward(spec.m_b, s.w_star, geom).samples
    rng = np.random.default_rng(spec.seed)
    white = rng.standard_normal(geom.grid.n)
    if spec.mode == "white":
        return white
    # source-filtered: convolve with the sampled source wavelet
    half = math.ceil(s.mu / geom.dt)
    taps = evaluate_wavelet(s.w_star, geom.dt * np.arange(-half, half + 1))
    return np.convolve(white, taps, mode="same")


def synthesize_data(s: Scenario) -> tuple[Trace, Trace, Trace]:
    """Return (d, d_star, n) with d = d_star + n and |n| = eta |d_star|."""
    d_star = apply_forward(s.m_star, s.w_star, s.geom)
    eta = s.noise.eta
    if eta == 0.0:
        n = Trace.zeros(s.geom.grid)
    else:
        raw = Trace(s.geom.grid, _raw_noise(s, d_star))
        if eta is None:
            n = raw
        else:
            n = raw.scaled(eta * norm(d_star) / norm(raw))
    return d_star + n, d_star, n


def relative_noise(n: Trace, d_star: Trace) -> float:
    return norm(n) / norm(d_star)


# --- stationary points -----------------------------------------------------

def bisect_root(f, lo: float, hi: float, f_lo: float, f_hi: float, xtol: float = 1e-8,
                ftol: float = 0.0, max_iter: int = 200) -> tuple[float, float, float, float]:
    """Bisection on a sign-change bracket. Returns (root, f(root), lo, hi)."""
    if f_lo == 0.0:
        return lo, 0.0, lo, lo
    if f_hi == 0.0:
        return hi, 0.0, hi, hi
    if f_lo * f_hi > 0:
        raise ValueError("bracket does not contain a sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol or mid in (lo, hi):
            break
        f_mid = f(mid)
        if f_mid == 0.0 or abs(f_mid) <= ftol:
            return mid, f_mid, lo, hi
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    mid = 0.5 * (lo + hi)
    return mid, f(mid), lo, hi


def scan_stationary_points(d: Trace, p: PenaltySpec, geom: Geometry, m_grid,
                           xtol: float = 1e-8, workers: int = 1) -> list[StationaryPoint]:
    """Sign changes of the reduced gradient on m_grid, each refined by bisection."""
    m_grid = np.asarray(m_grid, dtype=float)
    if m_grid.size < 3:
        raise ValueError("need at least 3 slowness grid points")
    if np.any(np.diff(m_grid) <= 0):
        raise ValueError("slowness grid must be strictly increasing")
    for m in (m_grid[0], m_grid[-1]):
        check_slowness(m, geom)

    def grad(m):
        return reduced_gradient(m, d, p, geom)

    g = np.array(parallel_map(grad, m_grid, workers))
    roots = []
    for i, gi in enumerate(g):
        if gi == 0.0:
            roots.append(StationaryPoint(float(m_grid[i]), float(m_grid[i]), float(m_grid[i]), 0.0))
    for i in range(m_grid.size - 1):
        g0, g1 = g[i], g[i + 1]
        if g0 == 0.0 or g1 == 0.0 or (g0 < 0) == (g1 < 0):
            continue
        root, fr, lo, hi = bisect_root(grad, m_grid[i], m_grid[i + 1], g0, g1, xtol=xtol)
        roots.append(StationaryPoint(float(root), float(lo), float(hi), float(fr)))
    roots.sort(key=lambda sp: sp.m_root)
    return roots


# --- discrepancy inversion -------------------------------------------------

@dataclass
class DiscrepancyOptions:
    m0: float = 0.55
    gtol: float = 1e-10
    dtol: float = 0.05
    alpha_min: float = 1e-8
    alpha_max: float = 1e6
    slack: float = 0.05
    max_outer: int = 60
    trust_radius: float = 0.02
    m_xtol: float = 1e-14


def descend_to_stationary(m: float, d: Trace, p: PenaltySpec, geom: Geometry,
                          trust_radius: float = 0.02, gtol: float = 1e-10,
                          xtol: float = 1e-14) -> tuple[float, float]:
    """Walk downhill from m with doubling steps until the gradient changes sign,
    then bisect. Returns (m, gradient)."""
    lo_b, hi_b = geom.m_min, geom.m_max

    def grad(x):
        return reduced_gradient(x, d, p, geom)

    g0 = grad(m)
    h = trust_radius
    while abs(g0) > gtol:
        direction = -1.0 if g0 > 0 else 1.0
        m1 = min(max(m + direction * h, lo_b), hi_b)
        if m1 == m:
            # pinned at the boundary of the slowness range
            return m, g0
        g1 = grad(m1)
        if g1 == 0.0 or (g1 < 0) != (g0 < 0):
            lo, hi, flo, fhi = (m, m1, g0, g1) if m < m1 else (m1, m, g1, g0)
            root, groot, _, _ = bisect_root(grad, lo, hi, flo, fhi, xtol=xtol, ftol=gtol)
            return root, groot
        m, g0 = m1, g1
        h *= 2.0
    return m, g0


def _log_misfit_gap(m, d, p, geom, alpha, target):
    e = reduced_objective(m, d, p.with_alpha(alpha), geom).misfit_term
    return math.log(max(e, 1e-300)) - math.log(target), e


def _next_alpha(m, d, p, geom, alpha, target, opts: DiscrepancyOptions) -> float:
    """One secant step on log(alpha) for log(misfit) = log(target), using a trial
    point a factor 2 away; the step is capped so the misfit stays below
    target * (1 + slack) whenever alpha grows."""
    f0, e0 = _log_misfit_gap(m, d, p, geom, alpha, target)
    trial = alpha * (2.0 if e0 < target else 0.5)
    f1, _ = _log_misfit_gap(m, d, p, geom, trial, target)
    la, lt = math.log(alpha), math.log(trial)
    if f1 == f0:
        new_log = lt
    else:
        new_log = la - f0 * (lt - la) / (f1 - f0)
    # at most a factor 100 per outer iteration
    new_log = min(max(new_log, la - math.log(100.0)), la + math.log(100.0))
    new_alpha = min(max(math.exp(new_log), opts.alpha_min), opts.alpha_max)
    if new_alpha > alpha:
        cap = target * (1.0 + opts.slack)
        for _ in range(60):
            _, e_new = _log_misfit_gap(m, d, p, geom, new_alpha, target)
            if e_new <= cap:
                break
            new_alpha = math.sqrt(new_alpha * alpha)
    return new_alpha


def invert_discrepancy(d: Trace, s: Scenario, alpha0: float,
                       opts: DiscrepancyOptions | None = None) -> InversionResult:
    """Alternate a downhill stationary-point search in m with a secant update of
    alpha aimed at misfit = epsilon^2 / 2. Never raises on non-convergence; the
    result carries converged = False and a message instead."""
    opts = opts or DiscrepancyOptions()
    if not alpha0 > 0:
        raise ValueError("alpha0 must be positive")
    if not 0 < s.epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    geom = s.geom
    p = make_penalty(geom, alpha0)
    target = 0.5 * s.epsilon**2
    m = opts.m0
    check_slowness(m, geom)
    alpha = alpha0
    trace = []
    converged = False
    message = "maximum outer iterations reached"
    for it in range(opts.max_outer):
        pa = p.with_alpha(alpha)
        m, g = descend_to_stationary(m, d, pa, geom, opts.trust_radius, opts.gtol, opts.m_xtol)
        e = reduced_objective(m, d, pa, geom).misfit_term
        trace.append((it, m, alpha, e, g))
        log.debug("iter %d m=%.12g alpha=%.6g misfit=%.6g grad=%.3g", it, m, alpha, e, g)
        if not all(math.isfinite(v) for v in (m, alpha, e, g)):
            message = "non-finite value encountered"
            break
        if abs(g) <= opts.gtol and abs(e - target) <= opts.dtol * target:
            converged = True
            message = "converged"
            break
        if alpha <= opts.alpha_min and e > target:
            message = "alpha reached its floor with misfit above target"
            break
        alpha = _next_alpha(m, d, p, geom, alpha, target, opts)
    res = truncate_and_certify(m, solve_source_closed(m, d, p.with_alpha(alpha), geom), s, d,
                               alpha=alpha)
    res.iterations = trace
    res.converged = converged
    res.message = message
    res.certified = res.certified and converged
    return res


# --- truncation ------------------------------------------------------------

def sufficient_epsilon(r: float, alpha: float, lam: float, eta: float) -> float:
    x = (8.0 * math.pi * r * alpha * lam) ** 2
    return x / (1.0 + x) + eta


def truncate_and_certify(m_hat: float, w: SampledWavelet, s: Scenario, d: Trace,
                         alpha: float | None = None) -> InversionResult:
    """Zero w outside [-lambda, lambda] and test the relative residual against epsilon."""
    geom = s.geom
    inside = in_window(w.times, -s.lam, s.lam, w.dt)
    w_trunc = w.with_samples(np.where(inside, w.samples, 0.0))
    residual = norm(apply_forward_sampled(m_hat, w_trunc, geom) - d) / norm(d)
    suff = None
    if alpha is not None:
        suff = sufficient_epsilon(geom.r, alpha, s.lam, s.noise.eta or 0.0)
    return InversionResult(
        m_hat=float(m_hat),
        alpha_final=float(alpha) if alpha is not None else float("nan"),
        wavelet=w_trunc,
        relative_residual=residual,
        certified=bool(residual <= s.epsilon),
        sufficient_epsilon=suff,
    )


# --- bounds ----------------------------------------------------------------

def noise_bound_factor(eta: float) -> float:
    q = eta * (1.0 + eta)
    return 1.0 + 2.0 * q / (1.0 - q)


def b_multiplier(t, m: float, alpha: float, r: float):
    """Kernel of the gradient's quadratic form in d, as used in the noise bound."""
    k = 4.0 * math.pi * r * alpha
    s = np.asarray(t, dtype=float) - m * r
    return -(k**2) * s / (1.0 + (k * s) ** 2) ** 2


def b_max_closed(alpha: float, r: float) -> float:
    return 3.0 * math.sqrt(3.0) / 16.0 * 4.0 * math.pi * r * alpha


def b_max_grid(alpha: float, r: float, m: float = 0.0, n: int = 400001) -> float:
    k = 4.0 * math.pi * r * alpha
    t = m * r + np.linspace(-6.0 / k, 6.0 / k, n)
    return float(np.max(np.abs(b_multiplier(t, m, alpha, r))))


def noise_design(eta: float, mu: float, r: float) -> tuple[float, float]:
    """(lambda, alpha) for which the noise condition holds with equality at the
    smallest radius allowed by the eta bound."""
    q = eta * (1.0 + eta)
    if not q < 1.0:
        raise ValueError(f"eta={eta} at or above the admissible threshold")
    delta = 2.0 * q / (1.0 - q)
    lam = (1.0 + delta) * mu
    alpha = 1.0 / (math.sqrt(3.0) * (2.0 + delta) * 4.0 * math.pi * r * mu)
    return lam, alpha


def _le(a, b, rtol=1e-12):
    return a <= b + rtol * abs(b)


def evaluate_bounds(s: Scenario, p: PenaltySpec, m_hat: float, eta: float | None = None) -> BoundReport:
    geom = s.geom
    r, mu, lam, alpha = geom.r, s.mu, s.lam, p.alpha
    if eta is None:
        eta = s.noise.eta or 0.0
    k = 4.0 * math.pi * r * alpha
    err = abs(m_hat - s.m_star)
    q = eta * (1.0 + eta)
    rep = BoundReport()

    if alpha > 0:
        premise = err * r > lam
        g = noise_free_objective(m_hat, s.w_star, s.m_star, p, geom).gradient
        rhs = r * k**2 * (lam - mu) / (1.0 + k**2 * (lam + mu) ** 2) ** 2
        rep.add("eq38_gradient_lower", abs(g), rhs, (not premise) or abs(g) > rhs,
                "gradient floor away from truth", "premise |m-m*| r > lambda " + ("holds" if premise else "fails (vacuous)"))

    x = (8.0 * math.pi * r * mu * alpha) ** 2
    rep.add("eq40_epsilon", s.epsilon, x / (1.0 + x), s.epsilon >= x / (1.0 + x), "noise-free epsilon",
            f"requires lambda >= 2 mu: {lam >= 2 * mu * (1 - 1e-12)}")

    rhs44 = 16.0 / (3.0 * math.sqrt(3.0)) * k * (lam - mu) / (1.0 + (k * (lam + mu)) ** 2) ** 2
    rep.add("eq44_noise_condition", q, rhs44, _le(q, rhs44), "noise admissibility")
    # the same condition as reached in the proof, before rearranging
    lhs_chain = 3.0 * math.sqrt(3.0) / 16.0 * k * q
    rhs_chain = k**2 * (lam - mu) / (1.0 + k**2 * (lam + mu) ** 2) ** 2
    rep.add("eq44_proof_chain", lhs_chain, rhs_chain, _le(lhs_chain, rhs_chain), "noise admissibility, unrearranged")

    rep.add("eq45_slowness_error", err, lam / r, _le(err, lam / r), "slowness error vs lambda")

    if alpha > 0:
        rhs47 = mu / r + eta / alpha * (3.0 * math.sqrt(3.0) * (1.0 + eta) / (64.0 * math.pi * r**2)
                                        * (1.0 + (8.0 * math.pi * r * alpha * geom.lambda_max) ** 2) ** 2)
        rep.add("eq47_slowness_error", err, rhs47, _le(err, rhs47), "slowness error, explicit in alpha")

    rep.add("eq48_threshold", eta, ETA_THRESHOLD, eta < ETA_THRESHOLD, "noise threshold")
    if q < 1.0:
        rhs49 = noise_bound_factor(eta) * mu / r
        rep.add("eq49_slowness_error", err, rhs49, _le(err, rhs49), "slowness error vs noise")
        lhs51 = (1.0 + noise_bound_factor(eta)) * mu
        rep.add("eq51_support_radius", lhs51, lam,
                _le(lhs51, lam) and _le(lam, geom.lambda_max), "truncation radius")
    rep.add("eq52_epsilon", s.epsilon, sufficient_epsilon(r, alpha, lam, eta),
            s.epsilon >= sufficient_epsilon(r, alpha, lam, eta), "certifiable epsilon")
    if alpha > 0:
        grid = b_max_grid(alpha, r, m_hat)
        closed = b_max_closed(alpha, r)
        rep.add("b_max", grid, closed, abs(grid - closed) <= 1e-6 * closed, "gradient kernel peak")
    return rep
