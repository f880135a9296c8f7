"""Key-value text files shared by map metadata, filter and experiment configs.

One ``key: value`` (or ``key = value``) pair per line; ``#`` starts a comment.
"""
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in (":", "="):
            if sep in line:
                key, value = line.split(sep, 1)
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key: value', got {raw!r}")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def read_kv(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_kv(text)


def format_kv(items):
    return "".join(f"{k}: {v}\n" for k, v in items.items())


def write_kv(path, items):
    Path(path).write_text(format_kv(items))


def as_bool(value):
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def fmt_float(x):
    """Shortest round-tripping text for a float (numpy scalars included)."""
    return repr(float(x))
