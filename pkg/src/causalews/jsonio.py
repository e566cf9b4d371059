"""Canonical JSON: sorted keys, 9-significant-digit floats, no whitespace
variance, so artifacts compare byte-for-byte across interfaces and runs."""

from __future__ import annotations

import json
import math
from typing import Any


def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"canonical JSON forbids non-finite floats, got {x!r}")
    if x == int(x) and abs(x) < 1e15:
        return f"{int(x)}.0"
    return f"{x:.9g}"


def dumps_canonical(obj: Any) -> str:
    """Deterministic JSON text for dicts/lists/str/int/float/bool/None."""
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, bool):  # pragma: no cover - caught above
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps_canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"canonical JSON keys must be strings, got {key!r}")
            items.append(json.dumps(key, ensure_ascii=False) + ":" + dumps_canonical(obj[key]))
        return "{" + ",".join(items) + "}"
    # numpy scalars and arrays reduce to python types
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        return dumps_canonical(obj.item())
    if hasattr(obj, "tolist"):
        return dumps_canonical(obj.tolist())
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def dump_canonical(obj: Any, path) -> None:
    from pathlib import Path

    Path(path).write_text(dumps_canonical(obj) + "\n")
