"""Canonical serialization and determinism helpers.

Every artifact the toolkit writes (datasets, transcripts, stats) goes
through :func:`canonical_json` so repeated writes of equal values are
byte-identical: keys sorted, no whitespace, floats fixed at 6 decimal
digits. Seeds for data-parallel work are derived from content, never from
scheduling order.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
from pathlib import Path

FLOAT_DECIMALS = 6

_WS_RUN = re.compile(r"\s+")


def quantize(value: float) -> float:
    """Round a float to the canonical 6-decimal grid used on the wire."""
    return round(float(value), FLOAT_DECIMALS)


def canonical_json(value) -> str:
    """Serialize to canonical JSON: sorted keys, compact, fixed-point floats.

    Floats must be finite; they are emitted with exactly 6 decimal digits,
    so values should be quantized (see :func:`quantize`) before they reach
    the serializer if lossless round-trips are required.
    """
    parts: list[str] = []
    _emit(value, parts)
    return "".join(parts)


def _emit(value, out: list[str]) -> None:
    if value is None or value is True or value is False:
        out.append(json.dumps(value))
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite float not serializable: {value!r}")
        out.append(f"{value:.{FLOAT_DECIMALS}f}")
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise TypeError(f"canonical JSON keys must be str, got {type(key).__name__}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _emit(value[key], out)
        out.append("}")
    else:
        raise TypeError(f"not canonically serializable: {type(value).__name__}")


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from heterogeneous parts (ints, strings).

    Used to give each sample its own RNG stream as a pure function of
    content, so data-parallel schedules cannot change any output.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little") & (2**63 - 1)


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return _WS_RUN.sub(" ", text).strip()


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename into place.

    A failed write never leaves a partial file at `path`.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
