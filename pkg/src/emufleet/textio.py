"""Line-oriented ``key=value`` text used by checkpoints, plus output helpers."""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import ParseError
from .netcore import Activation


def fmt_real(v) -> str:
    return format(float(v), ".17g")


def read_key_values(text: str, expected_format: str) -> dict[str, tuple[str, int]]:
    """Split ``key=value`` lines into {key: (value, line number)}; checks the format line."""
    entries = {}
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("empty checkpoint", 1)
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"expected key=value, got {raw!r}", lineno)
        key = key.strip()
        if key in entries:
            raise ParseError(f"duplicate key {key!r}", lineno)
        entries[key] = (value.strip(), lineno)
    fmt, lineno = entries.get("format", (None, 1))
    if fmt != expected_format:
        raise ParseError(f"unsupported checkpoint version {fmt!r}, expected {expected_format!r}", lineno)
    return entries


def parse_reals(entries, key, arity) -> np.ndarray:
    if key not in entries:
        raise ParseError(f"missing entry {key!r}")
    value, lineno = entries[key]
    parts = value.split()
    if len(parts) != arity:
        raise ParseError(f"{key} needs {arity} values, got {len(parts)}", lineno)
    try:
        out = np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(f"{key}: non-numeric value in {value!r}", lineno) from None
    if not np.all(np.isfinite(out)):
        raise ParseError(f"{key}: non-finite value", lineno)
    return out


def parse_activation(entries, key) -> Activation:
    if key not in entries:
        raise ParseError(f"missing entry {key!r}")
    value, lineno = entries[key]
    try:
        return Activation(value)
    except ValueError:
        raise ParseError(f"unknown activation {value!r}", lineno) from None


def write_text(sink, text: str) -> None:
    """Write to a path (atomically) or to a text file object."""
    if isinstance(sink, (str, os.PathLike)):
        atomic_write(sink, text)
    else:
        sink.write(text)


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
