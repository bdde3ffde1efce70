"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Keys use the long flag names
with dashes or underscores (``dt-max`` and ``dt_max`` are the same key).
"""

from __future__ import annotations


def read_flat_config(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out
