"""Classical and quantum kernels, tiled Gram assembly and PSD validation."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._canon import hexdigest
from .errors import InvariantViolation
from .quantum import FeatureMapSpec, encode_states, fidelities

log = logging.getLogger(__name__)

KINDS = ("linear", "rbf", "polynomial", "quantum")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    rbf_gamma: float | None = None
    poly_degree: int | None = None
    poly_coef0: float | None = None
    feature_map: FeatureMapSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        wanted = {
            "linear": set(),
            "rbf": {"rbf_gamma"},
            "polynomial": {"poly_degree", "poly_coef0"},
            "quantum": {"feature_map"},
        }[self.kind]
        present = {name for name in ("rbf_gamma", "poly_degree", "poly_coef0", "feature_map")
                   if getattr(self, name) is not None}
        if present != wanted:
            raise ValueError(f"{self.kind} kernel takes exactly {sorted(wanted)}, got {sorted(present)}")
        if self.kind == "rbf" and not self.rbf_gamma > 0:
            raise ValueError("rbf_gamma must be positive")
        if self.kind == "polynomial" and (int(self.poly_degree) != self.poly_degree
                                          or self.poly_degree < 1):
            raise ValueError("poly_degree must be an integer >= 1")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def rbf(cls, gamma: float):
        return cls("rbf", rbf_gamma=float(gamma))

    @classmethod
    def polynomial(cls, degree: int, coef0: float = 1.0):
        return cls("polynomial", poly_degree=int(degree), poly_coef0=float(coef0))

    @classmethod
    def quantum(cls, feature_map: FeatureMapSpec):
        return cls("quantum", feature_map=feature_map)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "rbf":
            d["rbf_gamma"] = self.rbf_gamma
        elif self.kind == "polynomial":
            d["poly_degree"] = self.poly_degree
            d["poly_coef0"] = self.poly_coef0
        elif self.kind == "quantum":
            d["feature_map"] = self.feature_map.to_dict()
        return d

    def digest(self) -> str:
        return hexdigest({"kernel": self.to_dict()})

    @property
    def unit_diagonal(self) -> bool:
        return self.kind in ("rbf", "quantum")


@dataclass
class GramMatrix:
    values: np.ndarray
    row_ids: list[str]
    spec_digest: str
    diagonal_shift: float = 0.0
    min_eigenvalue: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected a 2-D feature matrix")
    return x


def _embed(x: np.ndarray, spec: KernelSpec):
    """Per-row representation the tile kernel consumes (statevectors for quantum)."""
    if spec.kind == "quantum":
        return encode_states(x, spec.feature_map)
    return x


def _tile(a, b, spec: KernelSpec) -> np.ndarray:
    """Kernel block between embedded rows; each entry is reduced independently."""
    if spec.kind == "quantum":
        return fidelities(a, b)
    out = np.empty((a.shape[0], b.shape[0]))
    # overflow surfaces as inf and is reported by _check_finite with the offending pair
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(a.shape[0]):
            if spec.kind == "rbf":
                diff = a[i] - b
                out[i] = np.exp(-spec.rbf_gamma * (diff * diff).sum(axis=1))
            else:
                dot = (a[i] * b).sum(axis=1)
                out[i] = dot if spec.kind == "linear" else (dot + spec.poly_coef0) ** spec.poly_degree
    return out


def _check_dims(a: np.ndarray, b: np.ndarray, spec: KernelSpec) -> None:
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    if spec.kind == "quantum" and a.shape[1] != spec.feature_map.n_qubits:
        raise ValueError(f"quantum kernel on {spec.feature_map.n_qubits} qubits got "
                         f"{a.shape[1]}-dimensional features")


def eval_kernel(z1, z2, spec: KernelSpec) -> float:
    a, b = _rows(z1), _rows(z2)
    if a.shape[0] != 1 or b.shape[0] != 1:
        raise ValueError("eval_kernel takes two single vectors")
    _check_dims(a, b, spec)
    return float(_tile(_embed(a, spec), _embed(b, spec), spec)[0, 0])


def _check_finite(block: np.ndarray, row0: int, col0: int) -> None:
    bad = np.argwhere(~np.isfinite(block))
    if bad.size:
        i, j = bad[0]
        raise InvariantViolation(f"non-finite kernel value {block[i, j]} at pair "
                                 f"({row0 + i}, {col0 + j})")


def _default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def compute_gram(x, spec: KernelSpec, tile: int = 64, jobs: int | None = None) -> np.ndarray:
    """Upper-triangular tiles computed (optionally in parallel) and mirrored."""
    x = _rows(x)
    n = x.shape[0]
    if n < 2:
        raise ValueError("Gram matrix needs at least 2 rows")
    if tile < 1:
        raise ValueError("tile size must be >= 1")
    _check_dims(x, x, spec)
    emb = _embed(x, spec)
    starts = range(0, n, tile)
    blocks = [(r, c) for r in starts for c in starts if c >= r]
    out = np.empty((n, n))

    def work(rc):
        r, c = rc
        block = _tile(emb[r:r + tile], emb[c:c + tile], spec)
        _check_finite(block, r, c)
        out[r:r + tile, c:c + tile] = block

    jobs = jobs or _default_jobs()
    if jobs == 1 or len(blocks) == 1:
        for rc in blocks:
            work(rc)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, blocks))
    upper = np.triu_indices(n, 1)
    out[upper[1], upper[0]] = out[upper]
    return out


def build_gram(x, spec: KernelSpec, tile: int = 64, cache=None, row_ids=None,
               jobs: int | None = None) -> GramMatrix:
    """Full symmetric Gram matrix, served from ``cache`` when possible."""
    x = _rows(x)
    row_ids = list(row_ids) if row_ids is not None else [str(i) for i in range(x.shape[0])]
    if len(row_ids) != x.shape[0]:
        raise ValueError("one row id per row required")
    spec_digest = spec.digest()
    if cache is not None:
        hit = cache.get(spec_digest, x, row_ids)
        if hit is not None:
            return GramMatrix(hit, row_ids, spec_digest, meta={"cache": "hit"})
    values = compute_gram(x, spec, tile=tile, jobs=jobs)
    if cache is not None:
        cache.put(spec_digest, x, row_ids, values)
    return GramMatrix(values, row_ids, spec_digest, meta={"cache": "miss" if cache else "off"})


def cross_gram(x_eval, x_train, spec: KernelSpec, jobs: int | None = None) -> np.ndarray:
    """Rectangular kernel block, entry (i, j) = k(x_eval[i], x_train[j])."""
    a, b = _rows(x_eval), _rows(x_train)
    _check_dims(a, b, spec)
    ea, eb = _embed(a, spec), _embed(b, spec)
    out = _tile(ea, eb, spec)
    _check_finite(out, 0, 0)
    return out


def psd_floor(g: GramMatrix, tol: float = 1e-8) -> GramMatrix:
    """Validate positive semi-definiteness; repair tiny negative spectra by a diagonal shift."""
    values = g.values
    if not np.array_equal(values, values.T):
        raise InvariantViolation("Gram matrix is not exactly symmetric")
    lam_min = float(np.linalg.eigvalsh(values)[0])
    if lam_min < -tol:
        raise InvariantViolation(f"Gram matrix has eigenvalue {lam_min:.3e} below -{tol:g}; "
                                 "the kernel implementation is broken")
    shift = 0.0
    if lam_min < 0:
        shift = -lam_min + 1e-12
        values = values + shift * np.eye(values.shape[0])
        log.info("Gram matrix %s: added %.3e to the diagonal (lambda_min=%.3e)",
                 g.spec_digest[:12], shift, lam_min)
    return GramMatrix(values, g.row_ids, g.spec_digest, diagonal_shift=shift,
                      min_eigenvalue=lam_min, meta=dict(g.meta))
