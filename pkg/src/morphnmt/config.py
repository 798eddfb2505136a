"""Flat ``key = value`` configuration files.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Values may be bare or double-quoted.  Keys use the long flag names with
dashes or underscores (``batch-size`` and ``batch_size`` are the same key).
"""
from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")
