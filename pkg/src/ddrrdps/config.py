"""Run configuration: flat ``section.key = value`` text files.

Defaults are the reference operating values.  Unknown keys are errors so that typos do not
silently fall back to defaults.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .keyrate import PROTOCOLS
from .model import (
    DEFAULT_DECOY_SETTINGS,
    DEFAULT_N_MAX,
    TABLE_ONE_BETA,
    TABLE_ONE_DARK_PER_PULSE,
    TABLE_ONE_E_D,
    TABLE_ONE_ETA_D,
    TABLE_ONE_F,
    ChannelParams,
    DetectorParams,
)
from .optimizer import OptimizationSpec
from .photonstats import DEFAULT_SLACK

OUTPUT_FORMATS = ("csv",)


@dataclass(frozen=True)
class RunConfig:
    protocol: str = "dd-rrdps"
    L: int = 128
    e_d: float = TABLE_ONE_E_D
    f: float = TABLE_ONE_F
    beta: float = TABLE_ONE_BETA
    eta_d: float = TABLE_ONE_ETA_D
    dark_per_pulse: float = TABLE_ONE_DARK_PER_PULSE
    decoy_settings: tuple[float, ...] = DEFAULT_DECOY_SETTINGS
    d_min: float = 0.0
    d_max: float = 320.0
    d_step: float = 5.0
    distance: float = 50.0
    mu_min: float = 1e-4
    mu_max: float = 50.0
    v_th_min: int = 1
    v_th_max: int = 100
    rel_tol: float = 1e-9
    max_iter: int = 100
    warm_start: bool = True
    slack: float = DEFAULT_SLACK
    n_max: int = DEFAULT_N_MAX
    mc_mu: float = 1.0
    mc_trials: int = 1_000_000
    seed: int = 20160101
    output: str = ""
    output_format: str = "csv"

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        if self.L < 2:
            raise ConfigError(f"L must be >= 2, got {self.L}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"unknown output format {self.output_format!r}; choose from {', '.join(OUTPUT_FORMATS)}")
        if any(ch in self.output for ch in "#\n"):
            raise ConfigError("output path may not contain '#' or newlines")
        object.__setattr__(self, "decoy_settings", tuple(float(x) for x in self.decoy_settings))

    # -- derived objects ----------------------------------------------------

    @property
    def p_d(self) -> float:
        """Dark-count probability per detection window (train for RRDPS, pulse for BB84)."""
        if self.protocol == "bb84-decoy":
            return self.dark_per_pulse
        return self.dark_per_pulse * self.L

    def detector(self) -> DetectorParams:
        return DetectorParams(self.eta_d, self.p_d, self.decoy_settings)

    def channel(self, distance: float | None = None) -> ChannelParams:
        return ChannelParams(self.beta, self.distance if distance is None else distance)

    def optimization_spec(self) -> OptimizationSpec:
        return OptimizationSpec(
            protocol=self.protocol, L=self.L, beta=self.beta, detector=self.detector(),
            e_d=self.e_d, f=self.f, mu_range=(self.mu_min, self.mu_max),
            v_th_range=(self.v_th_min, self.v_th_max), rel_tol=self.rel_tol,
            max_iter=self.max_iter, n_max=self.n_max, slack=self.slack)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- text form ----------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for key, attr in _KEYS.items():
            lines.append(f"{key} = {_render(getattr(self, attr))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            if key not in _KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            attr = _KEYS[key]
            try:
                changes[attr] = _parse(types[attr], value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        return dataclasses.replace(base, **changes)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


_KEYS = {
    "protocol.tag": "protocol",
    "protocol.L": "L",
    "protocol.e_d": "e_d",
    "protocol.f": "f",
    "channel.beta": "beta",
    "detector.eta_d": "eta_d",
    "detector.dark_per_pulse": "dark_per_pulse",
    "detector.decoy_settings": "decoy_settings",
    "scan.d_min": "d_min",
    "scan.d_max": "d_max",
    "scan.d_step": "d_step",
    "point.distance": "distance",
    "optimizer.mu_min": "mu_min",
    "optimizer.mu_max": "mu_max",
    "optimizer.v_th_min": "v_th_min",
    "optimizer.v_th_max": "v_th_max",
    "optimizer.rel_tol": "rel_tol",
    "optimizer.max_iter": "max_iter",
    "optimizer.warm_start": "warm_start",
    "lp.slack": "slack",
    "lp.n_max": "n_max",
    "mc.mu": "mc_mu",
    "mc.trials": "mc_trials",
    "mc.seed": "seed",
    "output.path": "output",
    "output.format": "output_format",
}


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def _parse(type_name: str, value: str):
    if type_name == "bool":
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    if type_name.startswith("tuple"):
        return tuple(float(v) for v in value.split(",") if v.strip())
    return value
