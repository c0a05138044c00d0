"""Deterministic JSON rendering for report files.

Dicts keep insertion order, floats are written with 17 significant digits so
re-running a command with the same config yields byte-identical output.
Non-finite floats serialize as null.
"""

from __future__ import annotations

import json
import math


def _render(value, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g") if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        rows = [f"{inner}{json.dumps(str(k))}: {_render(v, indent + 1)}"
                for k, v in value.items()]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        rows = [f"{inner}{_render(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    if hasattr(value, "item"):  # numpy scalar
        return _render(value.item(), indent)
    raise TypeError(f"cannot serialize {type(value)!r}")


def dump_json(obj) -> str:
    return _render(obj, 0) + "\n"


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_json(obj))
