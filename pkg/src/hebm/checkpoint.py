"""Plain-text checkpoint format.

Layout::

    HEBM v1
    <key> <value ...>          # zero or more metadata lines, sorted by key
    param <name> <count>
    <count whitespace-separated floats, 17 significant digits>
    param <name> <count>
    ...

Floats are written with %.17g, which round-trips float64 exactly, so
write-then-read is bit-identical and two identical models serialize to
identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError

HEADER = "HEBM v1"
_FLOATS_PER_LINE = 8


def format_float(v: float) -> str:
    return f"{float(v):.17g}"


def write_checkpoint(path, params: dict[str, np.ndarray],
                     meta: dict[str, str] | None = None) -> None:
    lines = [HEADER]
    for key in sorted(meta or {}):
        lines.append(f"{key} {(meta or {})[key]}")
    for name in params:
        flat = np.asarray(params[name], dtype=np.float64).ravel()
        lines.append(f"param {name} {flat.size}")
        for i in range(0, flat.size, _FLOATS_PER_LINE):
            lines.append(" ".join(format_float(v) for v in flat[i:i + _FLOATS_PER_LINE]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Returns (flat parameter arrays by name, metadata dict).

    Parameter arrays come back 1-d; the caller reshapes them from its own
    metadata (e.g. the `mlp` architecture line).
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ParseError(f"{path}: line 1: expected header {HEADER!r}")

    params: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    i = 1
    n = len(lines)
    while i < n:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("param "):
            fields = line.split()
            if len(fields) != 3:
                raise ParseError(f"{path}: line {i + 1}: malformed param line {line!r}")
            name = fields[1]
            try:
                count = int(fields[2])
            except ValueError:
                raise ParseError(f"{path}: line {i + 1}: bad count in {line!r}") from None
            values: list[float] = []
            i += 1
            while len(values) < count:
                if i >= n:
                    raise ParseError(f"{path}: line {n}: param {name} truncated "
                                     f"({len(values)}/{count} values)")
                for tok in lines[i].split():
                    try:
                        values.append(float(tok))
                    except ValueError:
                        raise ParseError(f"{path}: line {i + 1}: bad float {tok!r}") from None
                i += 1
            if len(values) != count:
                raise ParseError(f"{path}: line {i}: param {name} has {len(values)} values, "
                                 f"expected {count}")
            params[name] = np.array(values, dtype=np.float64)
        else:
            key, _, rest = line.partition(" ")
            meta[key] = rest
            i += 1
    return params, meta
