"""Pipeline configuration: paper-cited defaults, flat config files, overrides.

Config files are one `key = value` pair per line (a flat TOML-ish syntax):
ints, floats and true/false parse as such, comma-separated numbers become
tuples, everything else stays a string. `#` starts a comment. CLI flags
always win over file values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import InspectError
from .localize import DEFAULT_SCALES


class ConfigError(InspectError):
    """Malformed config file or invalid setting."""


@dataclass(frozen=True)
class PipelineConfig:
    window: int = 32
    stride: int = 8
    tow_count: int = 8
    tow_width: int = 21
    latent_dim: int = 16
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    scales: tuple[float, ...] = DEFAULT_SCALES
    floor_frac: float = 0.3

    def __post_init__(self):
        if self.window < 2 or self.window % 2:
            raise ConfigError(f"window must be even and >= 2, got {self.window}")
        if self.stride < 1 or self.tow_count < 1 or self.tow_width < 1:
            raise ConfigError("stride, tow_count and tow_width must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.latent_dim < 1:
            raise ConfigError("epochs, batch_size and latent_dim must be positive")
        if self.learning_rate < 0 or self.floor_frac < 0:
            raise ConfigError("learning_rate and floor_frac must be >= 0")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return tuple(_parse_value(part) for part in raw.split(","))
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    for caster in (int, float):
        try:
            return caster(raw)
        except ValueError:
            pass
    return raw


def parse_config_file(path) -> dict:
    """Read a flat key = value file into a dict of parsed values."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        values[key.strip()] = _parse_value(raw)
    return values


def build_config(file_path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then config-file values, then explicit overrides (flags win)."""
    known = {f.name for f in fields(PipelineConfig)}
    merged: dict = {}
    if file_path is not None:
        file_values = parse_config_file(file_path)
        unknown = set(file_values) - known
        if unknown:
            raise ConfigError(f"{file_path}: unknown config keys {sorted(unknown)}")
        merged.update(file_values)
    for key, value in (overrides or {}).items():
        if value is not None:
            if key not in known:
                raise ConfigError(f"unknown config override {key!r}")
            merged[key] = value
    if "scales" in merged and not isinstance(merged["scales"], tuple):
        merged["scales"] = (merged["scales"],)
    try:
        return PipelineConfig(**merged)
    except TypeError as e:
        raise ConfigError(str(e)) from None
