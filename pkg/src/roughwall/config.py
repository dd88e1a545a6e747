"""Flat key-value configuration files.

Format: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines are ignored.  Values are kept as strings here; typed access goes
through the small ``get_*`` helpers so every consumer reports the same
errors.
"""

from pathlib import Path

from .errors import ConfigurationError


def parse_kv(text, source="<string>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = line.split("=", 1)
        elif ":" in line:
            key, value = line.split(":", 1)
        else:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def load_kv(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_kv(path.read_text(), source=str(path))


def dump_kv(values):
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(_fmt(v) for v in value)
        else:
            value = _fmt(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def get_float(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigurationError(f"missing required key {key!r}")
        return float(default)
    try:
        return float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigurationError(f"key {key!r}: expected a number, got {cfg[key]!r}") from None


def get_int(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigurationError(f"missing required key {key!r}")
        return int(default)
    try:
        return int(str(cfg[key]))
    except ValueError:
        raise ConfigurationError(f"key {key!r}: expected an integer, got {cfg[key]!r}") from None


def get_float_list(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigurationError(f"missing required key {key!r}")
        return [float(v) for v in default]
    raw = cfg[key]
    if isinstance(raw, (list, tuple)):
        return [float(v) for v in raw]
    try:
        return [float(v) for v in str(raw).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"key {key!r}: expected a list of numbers, got {raw!r}") from None


def parse_seeds(text):
    """Parse ``"a..b"`` (inclusive), ``"1,2,5"`` or a mix of both."""
    seeds = []
    for part in str(text).replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            try:
                lo, hi = int(lo), int(hi)
            except ValueError:
                raise ConfigurationError(f"bad seed range {part!r}") from None
            if hi < lo:
                raise ConfigurationError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            try:
                seeds.append(int(part))
            except ValueError:
                raise ConfigurationError(f"bad seed {part!r}") from None
    if not seeds:
        raise ConfigurationError("empty seed list")
    return seeds
