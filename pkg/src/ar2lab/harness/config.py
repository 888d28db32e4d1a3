"""Strict TOML experiment configuration.

Layout::

    [experiment]
    kind = "recovery_sweep"
    m = 500
    n = 500
    ...

    [noise]
    distribution = "uniform_bounded"
    K_Z = 1.0

plus an optional section named after the experiment kind for its own knobs
(``[series]``, ``[coeffs]``, ``[semi_iso]``, ``[bounds]``). Unknown
sections or keys are errors.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..problem_gen import NOISE_KINDS, NoiseSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

KINDS = ("recovery_sweep", "bound_campaign", "series_check", "coeff_verify", "semi_iso_check")


@dataclass(frozen=True)
class SeriesOptions:
    S: tuple[int, ...] = (1, 2)
    nu: int = 0
    gamma_max: int = 40
    sigma: tuple[float, ...] = (10.0, 8.0, 6.0, 4.0)
    target_ratio: float = 0.1


@dataclass(frozen=True)
class CoeffOptions:
    samples: int = 500
    gamma_max: int = 6
    beta_max: int = 4
    ranks: tuple[int, ...] = (1, 2, 3, 4)


@dataclass(frozen=True)
class SemiIsoOptions:
    M: float = 1.0
    a_max: int = 3
    p_moment: int = 1
    D_even: float = 2.0**10
    D_odd: float = 2.0**10
    k: int = 1
    allow_outside_hypothesis: bool = False


@dataclass(frozen=True)
class BoundOptions:
    s: int | None = None  # defaults to r


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "recovery_sweep"
    m: int = 100
    n: int = 100
    r: int = 3
    r_max: int | None = None
    eps0: float = 1.0
    b: int = 2
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    densities: tuple[float, ...] = (0.5,)
    trials: int = 10
    gap_constant: float = 20.0
    seed: int = 0
    out: str | None = None
    report: bool = True
    series: SeriesOptions = field(default_factory=SeriesOptions)
    coeffs: CoeffOptions = field(default_factory=CoeffOptions)
    semi_iso: SemiIsoOptions = field(default_factory=SemiIsoOptions)
    bounds: BoundOptions = field(default_factory=BoundOptions)

    def __post_init__(self):
        validate(self)

    @property
    def effective_r_max(self) -> int:
        return self.r if self.r_max is None else self.r_max

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)

    def scalars(self) -> dict:
        """Config values that go into every trial row."""
        return {
            "kind": self.kind,
            "m": self.m,
            "n": self.n,
            "r": self.r,
            "r_max": self.effective_r_max,
            "eps0": self.eps0,
            "b": self.b,
            "noise": self.noise.distribution,
            "K_Z": self.noise.K_Z,
            "gap_constant": self.gap_constant,
            "master_seed": self.seed,
        }


def validate(cfg: ExperimentConfig) -> None:
    try:
        _validate(cfg)
    except TypeError as exc:
        raise ConfigError(f"wrong value type: {exc}") from exc


def _validate(cfg: ExperimentConfig) -> None:
    def need(cond: bool, name: str, msg: str):
        if not cond:
            raise ConfigError(f"{name}: {msg}")

    need(cfg.kind in KINDS, "experiment.kind", f"must be one of {KINDS}")
    for name in ("m", "n", "r", "b", "trials"):
        need(isinstance(getattr(cfg, name), int) and getattr(cfg, name) >= 1, f"experiment.{name}",
             "must be a positive integer")
    need(cfg.r <= min(cfg.m, cfg.n), "experiment.r", "must not exceed min(m, n)")
    if cfg.r_max is not None:
        need(isinstance(cfg.r_max, int) and 1 <= cfg.r_max <= min(cfg.m, cfg.n), "experiment.r_max",
             "must be an integer in [1, min(m, n)]")
    need(cfg.eps0 > 0, "experiment.eps0", "must be positive")
    need(cfg.gap_constant > 0, "experiment.gap_constant", "must be positive")
    need(len(cfg.densities) >= 1, "experiment.densities", "must be non-empty")
    need(all(0 < p <= 1 for p in cfg.densities), "experiment.densities", "values must lie in (0, 1]")
    need(all(a < b for a, b in zip(cfg.densities, cfg.densities[1:])), "experiment.densities",
         "must be strictly increasing")
    need(isinstance(cfg.seed, int) and cfg.seed >= 0, "experiment.seed", "must be a non-negative integer")
    s = cfg.series
    need(s.nu in (0, 1), "series.nu", "must be 0 or 1")
    need(s.gamma_max >= 1, "series.gamma_max", "must be >= 1")
    need(len(s.sigma) >= 1 and all(x > 0 for x in s.sigma), "series.sigma", "must be positive values")
    need(len(s.S) >= 1 and all(1 <= i <= len(s.sigma) for i in s.S), "series.S",
         "must be a non-empty subset of [len(sigma)]")
    need(s.target_ratio > 0, "series.target_ratio", "must be positive")
    c = cfg.coeffs
    need(c.samples >= 1 and c.gamma_max >= 1 and c.beta_max >= 1, "coeffs",
         "samples, gamma_max and beta_max must be positive")
    need(len(c.ranks) >= 1 and all(k >= 1 for k in c.ranks), "coeffs.ranks", "must be positive")
    q = cfg.semi_iso
    need(q.M >= 1, "semi_iso.M", "must be >= 1")
    need(q.a_max >= 0 and q.p_moment >= 1 and q.k >= 1, "semi_iso", "a_max >= 0, p_moment >= 1, k >= 1")
    need(q.D_even > 0 and q.D_odd > 0, "semi_iso.D_even/D_odd", "must be positive")
    if cfg.bounds.s is not None:
        need(1 <= cfg.bounds.s <= cfg.r, "bounds.s", "must lie in [1, r]")


_TOP = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"noise", "series", "coeffs", "semi_iso", "bounds"}
_SECTIONS = {"series": SeriesOptions, "coeffs": CoeffOptions, "semi_iso": SemiIsoOptions, "bounds": BoundOptions}
_TUPLES = {"densities", "S", "sigma", "ranks"}


def _check_keys(section: str, got: dict, allowed: set) -> None:
    unknown = sorted(set(got) - allowed)
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) {unknown}; allowed {sorted(allowed)}")


def _coerce(d: dict) -> dict:
    return {k: tuple(v) if k in _TUPLES and isinstance(v, list) else v for k, v in d.items()}


def from_dict(data: dict) -> ExperimentConfig:
    _check_keys("<root>", data, {"experiment", "noise", *_SECTIONS})
    if "experiment" not in data:
        raise ConfigError("missing [experiment] section")
    exp = dict(data["experiment"])
    _check_keys("experiment", exp, _TOP)
    kw = _coerce(exp)
    if "noise" in data:
        noise = dict(data["noise"])
        _check_keys("noise", noise, {"distribution", "K_Z"})
        if noise.get("distribution", "zero") not in NOISE_KINDS:
            raise ConfigError(f"noise.distribution: must be one of {NOISE_KINDS}")
        kw["noise"] = NoiseSpec(K_Z=float(noise.get("K_Z", 0.0)), distribution=noise.get("distribution", "zero"))
    for name, cls in _SECTIONS.items():
        if name in data:
            sec = dict(data[name])
            _check_keys(name, sec, {f.name for f in dataclasses.fields(cls)})
            try:
                kw[name] = cls(**_coerce(sec))
            except TypeError as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: no such config file") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
