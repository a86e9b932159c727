"""On-disk Gram matrix cache.

File layout (all integers little-endian)::

    b"QKGM" | version u32 | N u64 | spec_digest 32B | rowset_digest 32B | N*N float64 row-major

Files are keyed by ``(spec_digest, rowset_digest)`` and written via a temp
file and an atomic rename, so concurrent readers never see partial data.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._canon import array_digest
from .errors import ConfigError

log = logging.getLogger(__name__)

MAGIC = b"QKGM"
VERSION = 1
_HEADER = struct.Struct("<4sIQ32s32s")


class CacheFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CacheEntry:
    path: Path
    n: int
    spec_digest: str
    rowset_digest: str


def rowset_digest(x: np.ndarray, row_ids) -> str:
    h = hashlib.sha256()
    h.update("\n".join(map(str, row_ids)).encode("utf-8"))
    h.update(array_digest(np.asarray(x, dtype=np.float64)).encode())
    return h.hexdigest()


def encode_gram(values: np.ndarray, spec_digest: str, rows_digest: str) -> bytes:
    values = np.asarray(values, dtype="<f8")
    n = values.shape[0]
    if values.shape != (n, n):
        raise ValueError("Gram matrix must be square")
    header = _HEADER.pack(MAGIC, VERSION, n, bytes.fromhex(spec_digest), bytes.fromhex(rows_digest))
    return header + np.ascontiguousarray(values).tobytes()


def decode_gram(blob: bytes) -> tuple[np.ndarray, str, str]:
    if len(blob) < _HEADER.size:
        raise CacheFormatError("truncated header")
    magic, version, n, spec, rows = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CacheFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CacheFormatError(f"unsupported format version {version}")
    expected = _HEADER.size + 8 * n * n
    if len(blob) != expected:
        raise CacheFormatError(f"size {len(blob)} does not match N={n} ({expected} bytes)")
    values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(n, n)
    return values.astype(np.float64), spec.hex(), rows.hex()


def write_gram_file(path, values, spec_digest: str, rows_digest: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(encode_gram(values, spec_digest, rows_digest))
    os.replace(tmp, path)


def read_gram_file(path) -> tuple[np.ndarray, str, str]:
    return decode_gram(Path(path).read_bytes())


class GramCache:
    def __init__(self, directory):
        self.directory = Path(directory)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create cache directory {self.directory}: {exc}") from exc
        if not os.access(self.directory, os.W_OK):
            raise ConfigError(f"cache directory {self.directory} is not writable")

    def path_for(self, spec_digest: str, rows_digest: str) -> Path:
        return self.directory / f"{spec_digest}-{rows_digest}.qkgm"

    def get(self, spec_digest: str, x, row_ids) -> np.ndarray | None:
        rows = rowset_digest(x, row_ids)
        path = self.path_for(spec_digest, rows)
        if not path.exists():
            return None
        try:
            values, spec, stored_rows = read_gram_file(path)
        except (OSError, CacheFormatError) as exc:
            log.warning("discarding corrupt cache file %s: %s", path.name, exc)
            return None
        if spec != spec_digest or stored_rows != rows or values.shape[0] != len(row_ids):
            log.warning("discarding cache file %s: digest mismatch", path.name)
            return None
        return values

    def put(self, spec_digest: str, x, row_ids, values: np.ndarray) -> Path:
        path = self.path_for(spec_digest, rowset_digest(x, row_ids))
        write_gram_file(path, values, spec_digest, rowset_digest(x, row_ids))
        return path

    def entries(self) -> list[CacheEntry]:
        out = []
        for path in sorted(self.directory.glob("*.qkgm")):
            try:
                values, spec, rows = read_gram_file(path)
            except (OSError, CacheFormatError):
                out.append(CacheEntry(path, -1, "", ""))
                continue
            out.append(CacheEntry(path, values.shape[0], spec, rows))
        return out

    def verify(self) -> list[tuple[Path, str]]:
        """Problems found, as (path, reason); empty when every file is sound."""
        problems = []
        for path in sorted(self.directory.glob("*.qkgm")):
            try:
                values, spec, rows = read_gram_file(path)
            except (OSError, CacheFormatError) as exc:
                problems.append((path, str(exc)))
                continue
            if path.name != f"{spec}-{rows}.qkgm":
                problems.append((path, "file name does not match header digests"))
            elif not np.all(np.isfinite(values)) or not np.array_equal(values, values.T):
                problems.append((path, "matrix is not finite and symmetric"))
        return problems

    def clear(self) -> int:
        removed = 0
        for path in self.directory.glob("*.qkgm"):
            path.unlink()
            removed += 1
        return removed
