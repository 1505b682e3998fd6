"""Runtime configuration for the CLI and HTTP service.

Config files are flat ``key = value`` lines; ``#`` starts a comment. Keys
mirror the field names below, e.g.::

    port = 8776
    profiles_dir = /var/lib/keyface/profiles
    min_keystroke_samples = 10
    min_face_images = 20
    band_k = 1.0
    integrator = product
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .fusion import INTEGRATORS

__all__ = ["ServiceConfig", "ConfigError", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Config file cannot be parsed or holds an invalid value."""


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8776
    profiles_dir: Path = Path("profiles")
    passphrase_env: str = "KEYFACE_PASSPHRASE"
    min_keystroke_samples: int = 10
    min_face_images: int = 20
    band_k: float = 1.0
    integrator: str = "product"
    iterations: int = 20
    covariance_floor: float = 1e-6
    seed: int = 0
    allow_append: bool = False
    max_submission_ms: int = 60_000

    def __post_init__(self) -> None:
        if self.integrator not in INTEGRATORS:
            raise ConfigError(
                f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}"
            )
        if self.band_k <= 0:
            raise ConfigError("band_k must be positive")
        self.profiles_dir = Path(self.profiles_dir)


_BOOL_VALUES = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config(text: str, base: ServiceConfig | None = None) -> ServiceConfig:
    """Apply ``key = value`` lines on top of the defaults (or ``base``)."""
    values = dataclasses.asdict(base) if base is not None else {}
    fields = {f.name: f for f in dataclasses.fields(ServiceConfig)}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value, fields[key].type, lineno)
    return ServiceConfig(**values)


def _coerce(key: str, value: str, type_name: str, lineno: int):
    try:
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
        if type_name == "bool":
            return _BOOL_VALUES[value.lower()]
        if type_name == "Path":
            return Path(value)
        return value
    except (ValueError, KeyError):
        raise ConfigError(f"line {lineno}: bad value {value!r} for {key!r}") from None


def load_config(path: Path | str) -> ServiceConfig:
    """Read a config file from disk."""
    return parse_config(Path(path).read_text(encoding="utf-8"))
