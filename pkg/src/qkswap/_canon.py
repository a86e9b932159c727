"""Canonical encodings and digests shared by configs, caches and reports."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

import numpy as np


def normalize(obj: Any) -> Any:
    """Recursively normalize a config-like object for canonical encoding.

    Numbers become floats (so ``1`` and ``1.0`` encode identically), tuples
    become lists and mapping keys become strings.
    """
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, float, np.integer, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            raise ValueError(f"non-finite number {obj!r} in canonical encoding")
        return value
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_bytes(obj: Any) -> bytes:
    return json.dumps(normalize(obj), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def digest(obj: Any) -> bytes:
    return hashlib.sha256(canonical_bytes(obj)).digest()


def hexdigest(obj: Any) -> str:
    return digest(obj).hex()


def array_digest(*arrays: np.ndarray) -> str:
    """SHA-256 over dtype, shape and little-endian bytes of each array."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.asarray(a)
        if a.dtype.kind in "fc":
            a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        h.update(str(a.dtype.str).encode())
        h.update(str(a.shape).encode())
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def q9(x: float) -> float:
    """Quantize to 9 significant digits (the precision of every text output)."""
    x = float(x)
    if not math.isfinite(x):
        return x
    return float(format(x, ".9g"))


def fmt9(x: float) -> str:
    return format(float(x), ".9g")
