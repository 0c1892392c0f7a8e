"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .extended import make_penalty
from .forward import Geometry, validate_geometry
from .solver import NoiseSpec, Scenario
from .traces import AnalyticWavelet, build_grid


class ConfigError(ValueError):
    pass


# config key -> field name, where they differ
_ALIASES = {"lambda": "lam"}


@dataclass
class RunConfig:
    r: float = 1.0
    m_min: float = 0.125
    m_max: float = 0.6
    m_star: float = 0.4
    mu: float = 0.05
    lam: float = 0.05
    lambda_max: float = 0.5
    t_min: float = -0.5
    t_max: float = 1.5
    n: int = 4001
    alpha: float = 0.05
    epsilon: float = 0.01
    eta: float = 0.0
    noise_mode: str = "white"
    seed: int = 0
    m_b: float = 0.25
    wavelet_family: str = "bump"
    wavelet_freq: float = 0.0
    wavelet_amplitude: float = 1.0
    wavelet_center: float = 0.0
    # sweeps
    m_grid: str = "0.125:0.6:476"
    alpha_list: str = "0.01,0.05,0.5"
    gradcheck_points: int = 25
    fd_step: float = 1e-6
    m0: float = 0.55
    m_hat: float | None = None
    noise_etas: str = "0.1,0.2,0.4"
    noise_seeds: str = "1:20"
    two_event_alpha: float = 2.0
    workers: int = 1

    # --- derived objects ---------------------------------------------------

    def geometry(self) -> Geometry:
        return Geometry(self.r, self.m_min, self.m_max, self.lambda_max,
                        build_grid(self.t_min, self.t_max, self.n))

    def wavelet(self) -> AnalyticWavelet:
        return AnalyticWavelet(self.wavelet_family, self.mu, self.wavelet_freq,
                               self.wavelet_amplitude, self.wavelet_center)

    def noise(self, eta: float | None = None, seed: int | None = None) -> NoiseSpec:
        eta = self.eta if eta is None else eta
        seed = self.seed if seed is None else seed
        if self.noise_mode == "two-event":
            return NoiseSpec(eta if eta > 0 else None, seed, "two-event", self.m_b)
        return NoiseSpec(eta, seed, self.noise_mode)

    def scenario(self, **noise_kw) -> Scenario:
        return Scenario(self.geometry(), self.m_star, self.wavelet(), self.lam,
                        self.epsilon, self.noise(**noise_kw))

    def penalty(self, alpha: float | None = None):
        return make_penalty(self.geometry(), self.alpha if alpha is None else alpha)

    def slowness_grid(self) -> np.ndarray:
        parts = self.m_grid.split(":")
        if len(parts) != 3:
            raise ConfigError(f"m_grid must be start:stop:count, got {self.m_grid!r}")
        lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
        return np.linspace(lo, hi, num)

    def alphas(self) -> list[float]:
        return [float(x) for x in self.alpha_list.split(",") if x.strip()]

    def etas(self) -> list[float]:
        return [float(x) for x in self.noise_etas.split(",") if x.strip()]

    def seeds(self) -> list[int]:
        if ":" in self.noise_seeds:
            lo, hi = self.noise_seeds.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in self.noise_seeds.split(",") if x.strip()]

    def validate(self):
        try:
            self._validate()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def _validate(self):
        rep = validate_geometry(self.geometry())
        if not rep.ok:
            raise ConfigError("geometry fails validation:\n  " + "\n  ".join(rep.lines()))
        if not 0 < self.mu <= self.lam <= self.lambda_max:
            raise ConfigError("need 0 < mu <= lambda <= lambda_max")
        if not 0 <= self.epsilon < 1:
            raise ConfigError("epsilon must lie in [0, 1)")
        self.slowness_grid()
        self.scenario()


def _coerce(value: str, typ):
    if typ in ("float | None",) and value.lower() in ("", "none"):
        return None
    if typ in (float, "float", "float | None"):
        return float(value)
    if typ in (int, "int"):
        return int(value)
    return value


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    types = {f.name: f.type for f in fields(RunConfig)}
    kw = {}
    for key, raw in cp["run"].items():
        name = _ALIASES.get(key, key)
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kw[name] = _coerce(raw.strip(), types[name])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return RunConfig(**kw)


def default_config_text() -> str:
    return resources.files("extinv").joinpath("default.cfg").read_text()


def load_config(path: str | Path | None = None, validate: bool = True) -> RunConfig:
    text = default_config_text() if path is None else Path(path).read_text()
    cfg = parse_config(text)
    if validate:
        cfg.validate()
    return cfg


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return dataclasses.replace(cfg, **{k: v for k, v in kw.items() if v is not None})
