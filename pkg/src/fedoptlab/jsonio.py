"""Deterministic JSON output with floats written to 17 significant digits.

The standard json encoder writes the shortest round-tripping decimal for a
float, which varies in width.  Artifact files instead pin every float to
the %.17g form so that (a) parsing returns the exact same double and
(b) repeated runs produce byte-identical files.
"""

from __future__ import annotations

import json
import math


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def dumps(obj, indent: int = 2) -> str:
    out = []
    _write(obj, out, indent, 0)
    out.append("\n")
    return "".join(out)


def dump(obj, path, indent: int = 2) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj, indent=indent))


def load(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write(obj, out, indent, level):
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"cannot serialize non-finite float {obj!r}")
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {k!r}")
            out.append(pad_in)
            out.append(json.dumps(k))
            out.append(": ")
            _write(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad_in)
            _write(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    else:
        try:
            # numpy scalars and arrays reduce to python types
            import numpy as np

            if isinstance(obj, np.ndarray):
                _write(obj.tolist(), out, indent, level)
                return
            if isinstance(obj, np.integer):
                out.append(str(int(obj)))
                return
            if isinstance(obj, np.floating):
                _write(float(obj), out, indent, level)
                return
        except ImportError:  # pragma: no cover
            pass
        raise TypeError(f"cannot serialize object of type {type(obj)!r}")
