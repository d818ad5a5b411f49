"""Canonical JSON serialization: fixed key order, 17-significant-digit floats.

Every structured file this package writes goes through ``dumps_canonical`` so
that re-serializing the same data is byte-identical across runs.
"""

import math


def format_float(x: float) -> str:
    """Format a float with 17 significant digits (exact float64 round-trip)."""
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite float not representable in JSON: {x!r}")
    if x == 0.0:
        return "0.0"
    s = format(x, ".17g")
    # bare integers like "3" must stay floats on re-read
    if "e" not in s and "E" not in s and "." not in s:
        s += ".0"
    return s


def _write(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(_escape(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _write(v, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be str, got {type(k).__name__}")
            if i:
                out.append(", ")
            out.append(_escape(k))
            out.append(": ")
            _write(v, out)
        out.append("}")
    else:
        raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t",
            "\b": "\\b", "\f": "\\f"}


def _escape(s: str) -> str:
    parts = ['"']
    for ch in s:
        if ch in _ESCAPES:
            parts.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            parts.append(f"\\u{ord(ch):04x}")
        else:
            parts.append(ch)
    parts.append('"')
    return "".join(parts)


def dumps_canonical(obj) -> str:
    """Serialize to JSON preserving dict insertion order, floats at 17 digits."""
    out: list = []
    _write(obj, out)
    return "".join(out)
