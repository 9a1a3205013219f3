"""Deterministic JSON/CSV encoding helpers.

Reports and serialized objects must be byte-identical across runs with the
same inputs, so every floating-point value is written with a fixed
17-significant-digit decimal encoding (the shortest width guaranteed to
round-trip any IEEE-754 double exactly). Dict keys are emitted in sorted
order. Reading uses the standard ``json`` parser, whose float decoding is
exact for round-trippable decimal strings.

Non-finite floats cannot be JSON numbers; infinities are emitted as the JSON
strings ``"inf"`` / ``"-inf"`` (the sentinel convention used by the report
formats in this package), and NaN raises.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import StructuralError

__all__ = ["format_float", "dumps", "dump_path", "loads"]


def format_float(x: float) -> str:
    """Return a decimal string for ``x`` that parses back to the same double."""
    x = float(x)
    if math.isnan(x):
        raise StructuralError("NaN cannot be serialized")
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    # normalize negative zero so identical values encode identically
    if s == "-0":
        s = "0"
    return s


def _encode(obj: Any, out: list[str]) -> None:
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        first = True
        for key in sorted(obj):
            if not isinstance(key, str):
                raise StructuralError(f"JSON object keys must be strings, got {key!r}")
            if not first:
                out.append(", ")
            out.append(json.dumps(key))
            out.append(": ")
            _encode(obj[key], out)
            first = False
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(", ")
            _encode(item, out)
        out.append("]")
    else:
        # numpy scalars expose .item(); anything else is a caller bug
        item = getattr(obj, "item", None)
        if item is not None:
            _encode(item(), out)
        else:
            raise StructuralError(f"cannot serialize object of type {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Serialize ``obj`` deterministically (sorted keys, 17-digit floats)."""
    out: list[str] = []
    _encode(obj, out)
    return "".join(out)


def dump_path(obj: Any, path) -> None:
    """Write ``dumps(obj)`` to ``path`` followed by a single newline."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def loads(text: str) -> Any:
    """Parse JSON text (standard parser; exact for round-trippable doubles)."""
    return json.loads(text)
