"""Plain-text key=value config files with environment-variable overrides."""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path

ENV_PREFIX = "ICUSEQ_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_kv_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse(value: str, typ):
    if typ is bool:
        low = value.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return typ(value)


def config_from_mapping(cls, mapping: dict[str, str], env_prefix: str = ENV_PREFIX):
    """Build a dataclass from string keys, applying env-var overrides.

    Environment variables named ``<prefix><FIELD_NAME>`` (upper case) take
    precedence over the file. Unknown keys are rejected to catch typos.
    """
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(mapping) - set(fields)
    if unknown:
        raise ValueError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, field in fields.items():
        env_val = os.environ.get(env_prefix + name.upper())
        raw = env_val if env_val is not None else mapping.get(name)
        if raw is None:
            continue
        typ = field.type if isinstance(field.type, type) else _TYPE_NAMES[field.type]
        kwargs[name] = _parse(raw, typ)
    return cls(**kwargs)


# dataclass fields carry string annotations under `from __future__ import annotations`
_TYPE_NAMES = {"int": int, "float": float, "str": str, "bool": bool}
