"""Flat key-value configuration files (TOML subset).

Only top-level scalar keys are used: floats, integers, booleans and
strings. Detector thresholds specific to one table class are stored under
quoted keys ``"T:<class>"``. Command-line flags override file values.
"""
from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .qstep import EstimatorConfig
from .recompress import DetectorConfig

PER_TABLE_PREFIX = "T:"
_BARE_KEY = re.compile(r"^[A-Za-z0-9_-]+$")


def read_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
    if nested:
        raise ConfigError(f"{path}: only flat scalar keys are allowed, got {nested}")
    return data


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ConfigError(f"cannot store non-finite value {v}")
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise ConfigError(f"unsupported config value {v!r}")


def _format_key(k: str) -> str:
    return k if _BARE_KEY.match(k) else _format_value(k)


def write_config(path: str | Path, values: Mapping[str, Any]) -> None:
    lines = [f"{_format_key(k)} = {_format_value(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def merge(file_values: Mapping[str, Any] | None, overrides: Mapping[str, Any]) -> dict[str, Any]:
    """File values updated by every override that is not ``None``."""
    out = dict(file_values or {})
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def estimator_config(values: Mapping[str, Any]) -> EstimatorConfig:
    d = EstimatorConfig()
    try:
        return EstimatorConfig(
            t_c=float(values.get("t_c", d.t_c)),
            t_xi=float(values.get("t_xi", d.t_xi)),
            q_max=int(values.get("q_max", d.q_max)),
            exclude_zeros=bool(values.get("exclude_zeros", d.exclude_zeros)),
            level_shift=bool(values.get("level_shift", d.level_shift)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad estimator setting: {exc}") from None


def estimator_values(cfg: EstimatorConfig) -> dict[str, Any]:
    return {"t_c": cfg.t_c, "t_xi": cfg.t_xi, "q_max": cfg.q_max,
            "exclude_zeros": cfg.exclude_zeros, "level_shift": cfg.level_shift}


def detector_config(values: Mapping[str, Any]) -> DetectorConfig:
    if "T" not in values:
        raise ConfigError("detector config needs a threshold T")
    try:
        per = {k[len(PER_TABLE_PREFIX):]: float(v) for k, v in values.items()
               if k.startswith(PER_TABLE_PREFIX)}
        return DetectorConfig(T=float(values["T"]), per_table=per)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad detector setting: {exc}") from None


def detector_values(cfg: DetectorConfig) -> dict[str, Any]:
    out: dict[str, Any] = {"T": cfg.T}
    out.update({PER_TABLE_PREFIX + k: v for k, v in cfg.per_table.items()})
    return out
