"""Process configuration: flat `key = value` file, overridable through
MEDICO_<KEY> environment variables."""

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

_ENV_PREFIX = "MEDICO_"


@dataclass
class Config:
    data_dir: Path = field(default_factory=lambda: Path("./medico-data"))
    port: int = 8642
    host: str = "127.0.0.1"
    expansion_depth: int = 2
    decay: float = 0.5
    fusion_window_seconds: float = 5.0
    demo_seed: int | None = 2010
    session_ttl_seconds: float = 3600.0
    user: str = "clinician"

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if not 1 <= self.port <= 65535:
            raise ValidationError(f"port {self.port} outside 1..65535")
        if not 0 <= self.expansion_depth <= 4:
            raise ValidationError("expansion_depth must be within 0..4")
        if not 0.0 < self.decay <= 1.0:
            raise ValidationError("decay must be in (0, 1]")
        if self.fusion_window_seconds <= 0:
            raise ValidationError("fusion_window_seconds must be positive")
        if self.session_ttl_seconds <= 0:
            raise ValidationError("session_ttl_seconds must be positive")


_CASTS = {
    "data_dir": Path,
    "port": int,
    "host": str,
    "expansion_depth": int,
    "decay": float,
    "fusion_window_seconds": float,
    "demo_seed": lambda v: None if v.lower() in ("", "none", "off") else int(v),
    "session_ttl_seconds": float,
    "user": str,
}


def parse_config(text: str, environ=None) -> Config:
    """`key = value` lines, # comments; environment variables win."""
    values = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep or key not in _CASTS:
            raise ValidationError(f"config line {lineno}: cannot parse {line!r}")
        values[key] = value.strip()
    environ = os.environ if environ is None else environ
    for key in _CASTS:
        env_value = environ.get(_ENV_PREFIX + key.upper())
        if env_value is not None:
            values[key] = env_value
    kwargs = {}
    for key, value in values.items():
        try:
            kwargs[key] = _CASTS[key](value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"config value {key}={value!r}: {exc}") from exc
    return Config(**kwargs)


def load_config(path=None, environ=None) -> Config:
    if path is None:
        return parse_config("", environ)
    return parse_config(Path(path).read_text(encoding="utf-8"), environ)
