"""Canonical report emission: JSON and CSV with a fixed float format.

Every float is rendered with 17 significant digits (lossless round-trip),
keys keep insertion order, and files are written atomically (temp file in
the target directory, then rename), so identical computations produce
byte-identical artifacts.
"""

from __future__ import annotations

import math
import os
import tempfile

from .errors import InputError

FORMAT_VERSION = "kdelab-report/1"


def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise InputError(f"cannot serialize non-finite float {x!r}")
    return format(float(x), ".17g")


def _write_json(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(
            '"'
            + obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            + '"'
        )
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _write_json(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, val) in enumerate(obj.items()):
            if i:
                out.append(",")
            _write_json(str(key), out)
            out.append(":")
            _write_json(val, out)
        out.append("}")
    else:
        raise InputError(f"cannot serialize {type(obj).__name__} to report JSON")


def canonical_json(obj) -> str:
    out: list = []
    _write_json(obj, out)
    return "".join(out) + "\n"


def csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, int):
        return str(value)
    text = str(value)
    if any(ch in text for ch in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".kdelab-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
