"""Flat ``key=value`` experiment configs.

Example::

    command=verify
    seed=2024
    n=1000000
    replicates=16
    spec=mm1;exp:1;exp:1;0.9
    spec=gg1;erlang:2,1;exp:1;0.9

A ``spec`` value is ``label;arrival;service[;load]``. With a load, the
arrival law is rescaled so that E[S]/E[X] equals it; ``poisson`` is
accepted as an arrival law (Exp(1) before rescaling). Blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .distributions import Exponential, parse_distribution
from .errors import ConfigurationError
from .simulate import QueueSpec

COMMANDS = ("verify", "rate", "ladder", "couple", "stein-check")
DEFAULT_GRID = (0.8, 0.9, 0.95, 0.98, 0.99)


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class SpecEntry:
    label: str
    arrival: str
    service: str
    load: float | None = None

    def build(self) -> QueueSpec:
        service = parse_distribution(self.service)
        if self.arrival.strip().lower() == "poisson":
            arrival = Exponential(1.0)
            if self.load is None:
                raise ConfigurationError(f"spec {self.label!r}: 'poisson' arrivals need a load")
        else:
            arrival = parse_distribution(self.arrival)
        if self.load is None:
            return QueueSpec(arrival, service, self.label)
        return QueueSpec.with_load(arrival, service, self.load, self.label)

    def emit(self) -> str:
        parts = [self.label, self.arrival, self.service]
        if self.load is not None:
            parts.append(_fmt(self.load))
        return ";".join(parts)

    @classmethod
    def parse(cls, text: str) -> "SpecEntry":
        parts = [p.strip() for p in text.split(";")]
        if len(parts) not in (3, 4) or not all(parts):
            raise ConfigurationError(f"spec must be 'label;arrival;service[;load]', got {text!r}")
        load = None
        if len(parts) == 4:
            try:
                load = float(parts[3])
            except ValueError:
                raise ConfigurationError(f"bad load token {parts[3]!r} in spec {text!r}") from None
            if not 0.0 < load < 1.0:
                raise ConfigurationError(f"load {parts[3]!r} in spec {text!r} is outside (0, 1)")
        entry = cls(parts[0], parts[1], parts[2], load)
        entry.build()  # validate early
        return entry


@dataclass(frozen=True)
class ExperimentConfig:
    specs: tuple[SpecEntry, ...] = ()
    command: str | None = None
    seed: int = 0
    n: int = 1_000_000
    replicates: int = 16
    rho_grid: tuple[float, ...] = DEFAULT_GRID
    out: str = "results"
    walks: int = 20_000
    horizon: int = 0  # 0 picks a horizon from the walk's drift and variance
    cf_t: tuple[float, ...] = (0.5, 1.0)
    stein_n: int = 100_000
    export_samples: bool = False

    def queues(self) -> list[QueueSpec]:
        return [s.build() for s in self.specs]

    def emit(self) -> str:
        lines = []
        if self.command is not None:
            lines.append(f"command={self.command}")
        lines += [
            f"seed={self.seed}",
            f"n={self.n}",
            f"replicates={self.replicates}",
            "rho_grid=" + ",".join(_fmt(r) for r in self.rho_grid),
            f"out={self.out}",
            f"walks={self.walks}",
            f"horizon={self.horizon}",
            "cf_t=" + ",".join(_fmt(t) for t in self.cf_t),
            f"stein_n={self.stein_n}",
            f"export_samples={int(self.export_samples)}",
        ]
        lines += [f"spec={s.emit()}" for s in self.specs]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values: dict = {}
        specs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
            try:
                if key == "spec":
                    specs.append(SpecEntry.parse(value))
                elif key in ("seed", "n", "replicates", "walks", "horizon", "stein_n"):
                    values[key] = int(value)
                elif key in ("rho_grid", "cf_t"):
                    values[key] = tuple(float(v) for v in value.split(","))
                elif key == "export_samples":
                    values[key] = value.lower() in ("1", "true", "yes")
                elif key == "out":
                    values[key] = value
                elif key == "command":
                    if value not in COMMANDS:
                        raise ConfigurationError(f"unknown command {value!r}")
                    values[key] = value
                else:
                    raise ConfigurationError(f"unknown key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigurationError):
                    raise ConfigurationError(f"line {lineno}: {exc}") from None
                raise ConfigurationError(f"line {lineno}: bad value {value!r} for {key!r}") from None
        cfg = cls(specs=tuple(specs), **values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.parse(text)

    def validate(self) -> None:
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        for name in ("n", "replicates", "walks", "stein_n"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.horizon < 0:
            raise ConfigurationError(f"horizon must be >= 0, got {self.horizon}")
        if any(not 0.0 < r < 1.0 for r in self.rho_grid):
            raise ConfigurationError(f"rho_grid loads must lie in (0, 1): {self.rho_grid}")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        cfg = replace(self, **kw)
        cfg.validate()
        return cfg
