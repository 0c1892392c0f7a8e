"""Experiment driver: ``extinv <subcommand> --config PATH --out DIR [--seed N]``.

Exit status: 0 on success, 1 for configuration or geometry failures, 2 for
numerical failures (non-convergence, non-finite output).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, with_overrides
from .extended import (
    ConvergenceError,
    commutator_gradient,
    reduced_gradient,
    reduced_objective,
)
from .forward import validate_geometry
from .fwi import fwi_landscape
from .parallel import parallel_map
from .solver import (
    DiscrepancyOptions,
    NoiseSpec,
    Scenario,
    noise_bound_factor,
    evaluate_bounds,
    invert_discrepancy,
    scan_stationary_points,
    synthesize_data,
    noise_design,
)

log = logging.getLogger("extinv")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class NumericalFailure(RuntimeError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if not math.isfinite(x):
        raise NumericalFailure(f"non-finite value {x} in output")
    return format(x, ".17g")


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])
    return path


# --- subcommands -----------------------------------------------------------

def cmd_validate(cfg: RunConfig, out: Path) -> int:
    rep = validate_geometry(cfg.geometry())
    (out / "validate.txt").write_text("\n".join(rep.lines()) + "\n")
    return EXIT_OK if rep.ok else EXIT_CONFIG


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    d, d_star, n = synthesize_data(cfg.scenario())
    t = d.grid.times
    write_csv(out / "traces.csv", ["t", "d", "d_star", "n"],
              zip(t, d.samples, d_star.samples, n.samples))
    return EXIT_OK


def cmd_sweep_fwi(cfg: RunConfig, out: Path) -> int:
    d, _, _ = synthesize_data(cfg.scenario())
    pts = fwi_landscape(d, cfg.lam, cfg.slowness_grid(), cfg.geometry(), cfg.workers)
    write_csv(out / "fwi_sweep.csv", ["m", "e_reduced"], ((p.m, p.value) for p in pts))
    return EXIT_OK


def cmd_sweep_ext(cfg: RunConfig, out: Path) -> int:
    geom = cfg.geometry()
    d, _, _ = synthesize_data(cfg.scenario())
    jobs = [(m, a) for a in cfg.alphas() for m in cfg.slowness_grid()]

    def point(job):
        m, a = job
        p = cfg.penalty(a)
        ev = reduced_objective(m, d, p, geom)
        g = reduced_gradient(m, d, p, geom) if a > 0 else 0.0
        return m, a, ev.objective, ev.misfit_term, ev.penalty_term, g

    rows = parallel_map(point, jobs, cfg.workers)
    write_csv(out / "ext_sweep.csv", ["m", "alpha", "jtilde", "misfit", "penalty", "grad"], rows)
    return EXIT_OK


def gradcheck_points(cfg: RunConfig) -> np.ndarray:
    return np.linspace(cfg.m_min, cfg.m_max, cfg.gradcheck_points + 2)[1:-1]


def gradcheck_rows(cfg: RunConfig, d, ms, workers: int = 1):
    geom = cfg.geometry()
    p = cfg.penalty()
    h = cfg.fd_step

    def row(m):
        g = reduced_gradient(m, d, p, geom)
        fd = (reduced_objective(m + h, d, p, geom).objective
              - reduced_objective(m - h, d, p, geom).objective) / (2 * h)
        comm = commutator_gradient(m, d, p, geom)
        scale = max(abs(g), 1e-12)
        return m, g, fd, comm, abs(g - fd) / scale, abs(g - comm) / scale

    return parallel_map(row, ms, workers)


def cmd_gradcheck(cfg: RunConfig, out: Path) -> int:
    d, _, _ = synthesize_data(cfg.scenario())
    rows = gradcheck_rows(cfg, d, gradcheck_points(cfg), cfg.workers)
    write_csv(out / "gradcheck.csv",
              ["m", "analytic", "fd", "commutator", "rel_err_fd", "rel_err_comm"], rows)
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: Path) -> int:
    d, _, _ = synthesize_data(cfg.scenario())
    roots = scan_stationary_points(d, cfg.penalty(), cfg.geometry(), cfg.slowness_grid(),
                                   workers=cfg.workers)
    write_csv(out / "roots.csv", ["m_root", "grad_residual", "bracket_lo", "bracket_hi"],
              ((r.m_root, r.grad_residual, r.bracket_lo, r.bracket_hi) for r in roots))
    return EXIT_OK


def cmd_invert(cfg: RunConfig, out: Path) -> int:
    s = cfg.scenario()
    d, _, _ = synthesize_data(s)
    res = invert_discrepancy(d, s, cfg.alpha, DiscrepancyOptions(m0=cfg.m0))
    write_csv(out / "invert_log.csv", ["iter", "m", "alpha", "misfit", "grad"], res.iterations)
    lines = [
        f"m_hat = {fmt(res.m_hat)}",
        f"alpha_final = {fmt(res.alpha_final)}",
        f"relative_residual = {fmt(res.relative_residual)}",
        f"epsilon = {fmt(cfg.epsilon)}",
        f"sufficient_epsilon = {fmt(res.sufficient_epsilon)}",
        f"converged = {fmt(res.converged)}",
        f"certified = {fmt(res.certified)}",
        f"message = {res.message}",
    ]
    (out / "result.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK if res.converged else EXIT_NUMERIC


def noise_study_rows(cfg: RunConfig, etas, seeds, workers: int = 1):
    geom = cfg.geometry()
    m_grid = cfg.slowness_grid()
    jobs = [(eta, seed) for eta in etas for seed in seeds]

    def run(job):
        eta, seed = job
        lam, alpha = noise_design(eta, cfg.mu, cfg.r)
        s = Scenario(geom, cfg.m_star, cfg.wavelet(), lam, cfg.epsilon,
                     NoiseSpec(eta, seed, cfg.noise_mode if cfg.noise_mode != "two-event" else "white"))
        d, _, _ = synthesize_data(s)
        p = cfg.penalty(alpha)
        roots = scan_stationary_points(d, p, geom, m_grid)
        bound = noise_bound_factor(eta) * cfg.mu / cfg.r
        cond_ok = evaluate_bounds(s, p, cfg.m_star, eta)["eq44_noise_condition"].satisfied
        return [(seed, eta, r.m_root, bound, abs(r.m_root - cfg.m_star) <= bound, cond_ok)
                for r in roots]

    rows = []
    for chunk in parallel_map(run, jobs, workers):
        rows.extend(chunk)
    return rows


def cmd_noise_study(cfg: RunConfig, out: Path) -> int:
    rows = noise_study_rows(cfg, cfg.etas(), cfg.seeds(), cfg.workers)
    write_csv(out / "noise_study.csv", ["seed", "eta", "m_root", "bound_49", "within_bound"],
              (r[:5] for r in rows))
    return EXIT_OK


def two_event_grid(cfg: RunConfig) -> np.ndarray:
    """Slowness grid symmetric about the midpoint of the two events."""
    mid = 0.5 * (cfg.m_star + cfg.m_b)
    grid = cfg.slowness_grid()
    step = grid[1] - grid[0]
    half = min(mid - cfg.m_min, cfg.m_max - mid)
    k = int(math.floor(half / step + 1e-9))
    return mid + step * np.arange(-k, k + 1)


def cmd_two_event(cfg: RunConfig, out: Path) -> int:
    cfg2 = with_overrides(cfg, noise_mode="two-event", eta=0.0)
    s = cfg2.scenario()
    d, _, _ = synthesize_data(s)
    roots = scan_stationary_points(d, cfg2.penalty(cfg.two_event_alpha), cfg2.geometry(),
                                   two_event_grid(cfg2), workers=cfg.workers)
    mid = 0.5 * (cfg.m_star + cfg.m_b)
    ms = [r.m_root for r in roots]
    rows = []
    for r, mirror in zip(roots, reversed(ms)):
        rows.append((r.m_root, r.grad_residual, r.bracket_lo, r.bracket_hi,
                     (r.m_root - mid) + (mirror - mid)))
    write_csv(out / "twoevent_roots.csv",
              ["m_root", "grad_residual", "bracket_lo", "bracket_hi", "mirror_gap"], rows)
    return EXIT_OK


def cmd_bounds(cfg: RunConfig, out: Path) -> int:
    s = cfg.scenario()
    m_hat = cfg.m_star if cfg.m_hat is None else cfg.m_hat
    rep = evaluate_bounds(s, cfg.penalty(), m_hat)
    write_csv(out / "bounds.csv", ["name", "lhs", "rhs", "satisfied"],
              ((e.name, e.lhs, e.rhs, e.satisfied) for e in rep.entries))
    return EXIT_OK


SUBCOMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "sweep-fwi": cmd_sweep_fwi,
    "sweep-ext": cmd_sweep_ext,
    "gradcheck": cmd_gradcheck,
    "scan": cmd_scan,
    "invert": cmd_invert,
    "noise-study": cmd_noise_study,
    "two-event": cmd_two_event,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extinv", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    ap.add_argument("--config", type=Path, default=None,
                    help="flat key = value config file (default: packaged default.cfg)")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override the noise seed")
    ap.add_argument("--workers", type=int, default=None, help="threads for sweeps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run_subcommand(name: str, cfg: RunConfig, out_dir: Path) -> int:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            return SUBCOMMANDS[name](cfg, out_dir)
    except (ConvergenceError, NumericalFailure, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, validate=False)
        cfg = with_overrides(cfg, seed=args.seed, workers=args.workers)
        if args.subcommand != "validate":
            cfg.validate()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_subcommand(args.subcommand, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
