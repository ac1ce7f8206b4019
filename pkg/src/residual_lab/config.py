"""Declarative sweep configuration: file grammar, defaults, validation.

Config files are plain ``key = value`` text, one pair per line, ``#`` starts
a comment.  List values are comma-separated; numeric grids also accept the
range form ``lo:hi:step`` (inclusive of both endpoints, step > 0).  CLI flags
override file values.  Every run writes its resolved configuration next to
its outputs so results are self-describing and re-runnable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

EXPERIMENTS = ("exp1", "exp2", "exp3-healthy", "exp3-anomalous", "exp1-histeq")
EVAL_MASK_POLICIES = ("full", "object")

DEFAULT_INTENSITY_STEP = 0.05
DEFAULT_SIGMA_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0)
DEFAULT_RADIUS = 20.0
DEFAULT_REFERENCE_INTENSITY = 0.44
THREADS_ENV_VAR = "RESIDUAL_LAB_THREADS"


class ConfigError(ValueError):
    """Malformed config file or inconsistent field values."""


def default_intensity_grid() -> list[float]:
    n = round(1.0 / DEFAULT_INTENSITY_STEP)
    return [round(i * DEFAULT_INTENSITY_STEP, 10) for i in range(n + 1)]


@dataclass
class SweepConfig:
    experiment: str
    test_manifest: Path
    out_dir: Path
    train_manifest: Path | None = None
    intensity_grid: list[float] = field(default_factory=default_intensity_grid)
    sigma_grid: list[float] = field(default_factory=lambda: list(DEFAULT_SIGMA_GRID))
    kinds: list[str] = field(default_factory=lambda: ["intensity", "sink", "source", "shuffle"])
    radius: float = DEFAULT_RADIUS
    subspace_k: list[int] = field(default_factory=list)
    models_sigma: list[float] = field(default_factory=list)
    external_dirs: list[Path] = field(default_factory=list)
    include_identity: bool = False
    reference_intensity: float = DEFAULT_REFERENCE_INTENSITY
    master_seed: int = 0
    eval_mask: str = "full"
    histeq_bins: int = 256
    exp1_csv: Path | None = None
    threads: int | None = None

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.eval_mask not in EVAL_MASK_POLICIES:
            raise ConfigError(f"eval_mask must be one of {EVAL_MASK_POLICIES}")
        _check_grid("intensity_grid", self.intensity_grid, lo=0.0, hi=1.0)
        _check_grid("sigma_grid", self.sigma_grid, lo=0.0, hi=float("inf"))
        if self.radius <= 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")
        if not 0.0 <= self.reference_intensity <= 1.0:
            raise ConfigError("reference_intensity must be in [0, 1]")
        for kind in self.kinds:
            if kind not in ("intensity", "sink", "source", "shuffle"):
                raise ConfigError(f"unknown anomaly kind {kind!r}")
        if self.experiment.startswith("exp3"):
            has_model = (
                self.subspace_k or self.models_sigma or self.external_dirs or self.include_identity
            )
            if not has_model:
                raise ConfigError("exp3 needs at least one model (k, sigma, external, identity)")
            if self.subspace_k and self.train_manifest is None:
                raise ConfigError("subspace models require a train_manifest")
            if any(k < 0 for k in self.subspace_k):
                raise ConfigError("subspace k values must be >= 0")

    def resolved_threads(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        env = os.environ.get(THREADS_ENV_VAR)
        if env:
            return max(1, int(env))
        return os.cpu_count() or 1

    def to_text(self) -> str:
        """Canonical resolved snapshot in the config-file grammar."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or (isinstance(value, list) and not value):
                continue
            if isinstance(value, list):
                text = ",".join(_scalar_text(v) for v in value)
            else:
                text = _scalar_text(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"


def _scalar_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".10g")
    if isinstance(value, Path):
        return str(value)
    return str(value)


def _check_grid(name: str, grid: list[float], lo: float, hi: float) -> None:
    if not grid:
        raise ConfigError(f"{name} must be nonempty")
    if sorted(grid) != list(grid) or len(set(grid)) != len(grid):
        raise ConfigError(f"{name} must be strictly ascending")
    if grid[0] < lo or grid[-1] > hi:
        raise ConfigError(f"{name} values must lie within [{lo}, {hi}]")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in mapping:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        mapping[key] = value.strip()
    return mapping


def parse_float_list(text: str) -> list[float]:
    """Parse ``a,b,c`` or the inclusive range form ``lo:hi:step``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range form must be lo:hi:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ConfigError(f"bad range {text!r}")
        n = int(round((hi - lo) / step))
        values = [round(lo + i * step, 10) for i in range(n + 1)]
        return [v for v in values if v <= hi + 1e-12]
    return [round(float(p), 10) for p in text.split(",") if p.strip()]


def parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


_LIST_FLOAT_KEYS = {"intensity_grid", "sigma_grid", "models_sigma"}
_FLOAT_KEYS = {"radius", "reference_intensity"}
_INT_KEYS = {"master_seed", "histeq_bins", "threads"}
_PATH_KEYS = {"test_manifest", "train_manifest", "out_dir", "exp1_csv"}
_BOOL_KEYS = {"include_identity"}


def build_sweep_config(mapping: dict[str, str]) -> SweepConfig:
    """Build and validate a SweepConfig from string key/value pairs."""
    known = {f.name for f in fields(SweepConfig)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for required in ("experiment", "test_manifest", "out_dir"):
        if required not in mapping:
            raise ConfigError(f"missing required config key {required!r}")
    kwargs: dict = {}
    for key, value in mapping.items():
        if key in _LIST_FLOAT_KEYS:
            kwargs[key] = parse_float_list(value)
        elif key == "subspace_k":
            kwargs[key] = parse_int_list(value)
        elif key == "kinds":
            kwargs[key] = [p.strip() for p in value.split(",") if p.strip()]
        elif key == "external_dirs":
            kwargs[key] = [Path(p.strip()).absolute() for p in value.split(",") if p.strip()]
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key in _PATH_KEYS:
            kwargs[key] = Path(value).absolute()
        elif key in _BOOL_KEYS:
            if value.lower() not in ("true", "false"):
                raise ConfigError(f"{key} must be true or false, got {value!r}")
            kwargs[key] = value.lower() == "true"
        else:
            kwargs[key] = value
    config = SweepConfig(**kwargs)
    config.validate()
    return config


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> SweepConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such config file: {path}")
    mapping = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
    if overrides:
        mapping.update({k: v for k, v in overrides.items() if v is not None})
    return build_sweep_config(mapping)
