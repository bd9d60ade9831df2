"""``key = value`` run configuration files.

Blank lines and ``#`` comments are ignored. Keys are the long CLI flag names
without leading dashes (``-`` and ``_`` are interchangeable). Unknown keys
and unparsable values are rejected before anything runs.
"""

from .errors import ConfigError


def read_config(path, schema):
    """Parse ``path`` against ``schema`` (``{key: parser}``); returns ``{key: value}``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    out = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (t.strip() for t in text.split("=", 1))
        key = key.replace("-", "_")
        if key not in schema:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = schema[key](value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out
