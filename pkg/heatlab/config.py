"""Experiment configuration: flat ``key = value`` files plus flag overrides.

A config file looks like::

    # blow-up ladder for p = 6
    command = blowup
    domain = interval:1.0
    p = 6
    caps = 10, 100, 1000, 10000

Keys are the field names of :class:`ExperimentConfig`.  Values are parsed
according to each field's default: numbers, booleans (``true``/``false``),
comma-separated tuples, or strings.  ``none`` clears an optional value.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from .errors import ConfigError
from .kernel_core import Ball, Box, Interval

logger = logging.getLogger(__name__)

CURRENT_CONFIG_VERSION = 1
OUT_ENV = "HEATLAB_OUT"
COMMANDS = ("kernel", "bounds-sweep", "prop-ball", "blowup", "osgood", "verify-all")

# Fields whose value is an optional float; their default is None so the type
# cannot be inferred from it.
_OPTIONAL_FLOATS = {"probe_time", "dt_max", "x0"}


@dataclass
class ExperimentConfig:
    """Resolved settings for one CLI run."""

    config_version: int = CURRENT_CONFIG_VERSION
    command: str = "kernel"
    domain: str = "interval:1.0"
    out_dir: str = "heatlab-out"
    seed: int = 0
    quick: bool = False

    # kernel
    y: float = 0.2
    t: float = 0.02
    points: int = 21
    plot: bool = False
    crossover: float = 1.0
    tol: float = 1e-12
    k_max_cap: int = 512

    # bounds-sweep
    kind: str = "short-time-nd"
    sweep_points: int = 9
    sweep_times: int = 25

    # prop-ball
    alpha: float = 0.5
    R: float = 0.5
    n: int = 1
    phis: Tuple[float, ...] = (4.0, 8.0, 16.0, 32.0, 64.0)
    time_levels: int = 8
    iterations: int = 48
    panels: int = 2048

    # blowup
    source: str = "fujita-power"
    p: float = 6.0
    q: float = 1.0
    caps: Tuple[float, ...] = (10.0, 100.0, 1000.0, 10000.0)
    J: int = 1024
    grading: float = 3.0
    dt_init: float = 1e-6
    dt_max: Optional[float] = None
    probe_time: Optional[float] = None
    u_max: float = 1e12
    workers: int = 1
    stride: int = 0

    # osgood
    osgood_terms: int = 50
    x0: Optional[float] = None
    horizon: float = 10.0

    def resolved(self) -> Dict[str, Any]:
        """Plain-dict view used in reports and for hashing."""

        data = dataclasses.asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data


def _field_types() -> Dict[str, Any]:
    return {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_value(key: str, raw: Union[str, Any]) -> Any:
    """Convert ``raw`` to the type of field ``key``."""

    fields = _field_types()
    if key not in fields:
        raise ConfigError(f"Unknown config key '{key}'. Available options: {', '.join(sorted(fields))}.")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    default = fields[key].default
    try:
        if key in _OPTIONAL_FLOATS:
            return None if text.lower() in ("", "none") else float(text)
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"Invalid value for '{key}': {raw!r} ({exc}).") from exc
    return text


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a flat ``key = value`` file into typed values."""

    values: Dict[str, Any] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    for number, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {line.strip()!r}.")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        values[key.replace("-", "_")] = parse_value(key.replace("-", "_"), raw)
    return values


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config_file(cfg: ExperimentConfig, path: Union[str, Path]) -> Path:
    """Write every field so that :func:`load_config` reproduces ``cfg``."""

    path = Path(path)
    lines = [f"# heatlab experiment config (version {cfg.config_version})"]
    for key, value in cfg.resolved().items():
        lines.append(f"{key} = {_format_value(value)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def migrate_config(values: Dict[str, Any]) -> Dict[str, Any]:
    """Upgrade older config dictionaries to :data:`CURRENT_CONFIG_VERSION`."""

    version = int(values.get("config_version", CURRENT_CONFIG_VERSION))
    if version > CURRENT_CONFIG_VERSION:
        raise ConfigError("Config version is newer than supported.")
    values["config_version"] = CURRENT_CONFIG_VERSION
    return values


def parse_domain(spec: str, n: int = 1) -> Union[Interval, Box, Ball]:
    """``interval:A``, ``box:H1,H2,...`` or ``ball:RADIUS`` (dimension ``n``)."""

    kind, _, params = spec.partition(":")
    try:
        numbers = [float(part) for part in params.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"Invalid domain '{spec}': {exc}.") from exc
    kind = kind.strip().lower()
    try:
        if kind == "interval" and len(numbers) == 1:
            return Interval(numbers[0])
        if kind == "box" and numbers:
            return Box(tuple(numbers))
        if kind == "ball" and len(numbers) == 1:
            return Ball(numbers[0], n)
    except ValueError as exc:
        raise ConfigError(f"Invalid domain '{spec}': {exc}") from exc
    raise ConfigError(f"Invalid domain '{spec}'. Use interval:A, box:H1,H2,... or ball:RADIUS.")


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Reject configurations no command could run."""

    problems: List[str] = []
    if cfg.command not in COMMANDS:
        problems.append(f"unknown command '{cfg.command}' (available: {', '.join(COMMANDS)})")
    if cfg.n < 1:
        problems.append("n must be at least 1")
    if cfg.points < 2 or cfg.sweep_points < 1 or cfg.sweep_times < 1:
        problems.append("grid sizes must be positive (kernel points >= 2)")
    if not cfg.t > 0:
        problems.append("t must be positive")
    if not 0 < cfg.alpha:
        problems.append("alpha must be positive")
    if not cfg.R > 0:
        problems.append("R must be positive")
    if cfg.caps and any(b <= a for a, b in zip(cfg.caps, cfg.caps[1:])):
        problems.append("caps must be strictly increasing")
    if cfg.J < 128:
        problems.append("J must be at least 128")
    if cfg.workers < 1:
        problems.append("workers must be at least 1")
    if cfg.osgood_terms < 1:
        problems.append("osgood_terms must be at least 1")
    if problems:
        raise ConfigError("Invalid configuration: " + "; ".join(problems) + ".")
    parse_domain(cfg.domain, cfg.n)
    return cfg


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """File values, then flag overrides, then ``HEATLAB_OUT``."""

    values: Dict[str, Any] = {}
    if path is not None:
        values.update(read_config_file(path))
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = parse_value(key, raw)
    values = migrate_config(values)
    env = os.environ if environ is None else environ
    if env.get(OUT_ENV):
        values["out_dir"] = env[OUT_ENV]
    cfg = ExperimentConfig(**values)
    logger.debug("Resolved config: %s", cfg.resolved())
    return validate_config(cfg)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical resolved config, output directory excluded."""

    data = cfg.resolved()
    data.pop("out_dir", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


__all__ = [
    "CURRENT_CONFIG_VERSION",
    "OUT_ENV",
    "COMMANDS",
    "ExperimentConfig",
    "parse_value",
    "read_config_file",
    "write_config_file",
    "migrate_config",
    "parse_domain",
    "validate_config",
    "load_config",
    "config_hash",
]
