"""Exact statevector simulation of Pauli-expansion feature maps.

Each repetition of the map applies a Hadamard on every qubit followed by
``exp(-i * phi_S(z) * P_S)`` for every Pauli term ``P_S`` on index set ``S``,
with data angles

    phi_{i}(z)   = z_i
    phi_S(z)     = prod_{k in S} (pi - z_k)      for |S| > 1

so a single ``Z`` term contributes the relative phase ``e^{2 i z_i}`` between
``|0>`` and ``|1>``. Qubit 0 is the least-significant bit of a basis index.
Character ``k`` of a Pauli label acts on the ``k``-th qubit of its index set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._canon import hexdigest

FAMILIES = ("Z", "ZZ", "Pauli")
TOPOLOGIES = ("linear", "full")
MAX_QUBITS = 20

_SQRT_HALF = 1.0 / np.sqrt(2.0)
_H = np.array([[_SQRT_HALF, _SQRT_HALF], [_SQRT_HALF, -_SQRT_HALF]], dtype=np.complex128)
_SDG = np.array([[1, 0], [0, -1j]], dtype=np.complex128)
_S = np.array([[1, 0], [0, 1j]], dtype=np.complex128)


@dataclass(frozen=True)
class FeatureMapSpec:
    family: str = "ZZ"
    n_qubits: int = 2
    reps: int = 2
    entanglement: str = "linear"
    pauli_strings: tuple[str, ...] = ("Z", "ZZ")

    def __post_init__(self):
        object.__setattr__(self, "pauli_strings", tuple(self.pauli_strings))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown feature-map family {self.family!r}; expected one of {FAMILIES}")
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if self.entanglement not in TOPOLOGIES:
            raise ValueError(f"unknown entanglement {self.entanglement!r}; expected one of {TOPOLOGIES}")
        if self.family == "Pauli":
            if not self.pauli_strings:
                raise ValueError("Pauli family needs at least one Pauli string")
            for label in self.pauli_strings:
                if not label or set(label) - set("XYZ"):
                    raise ValueError(f"unsupported Pauli label {label!r}")
                if len(label) > self.n_qubits:
                    raise ValueError(f"Pauli label {label!r} longer than {self.n_qubits} qubits")

    @property
    def paulis(self) -> tuple[str, ...]:
        if self.family == "Z":
            return ("Z",)
        if self.family == "ZZ":
            return ("Z", "ZZ") if self.n_qubits > 1 else ("Z",)
        return self.pauli_strings

    @property
    def is_diagonal(self) -> bool:
        return all(set(p) == {"Z"} for p in self.paulis)

    def terms(self) -> list[tuple[str, tuple[int, ...]]]:
        """(label, qubits) pairs in application order within one repetition."""
        out = []
        for label in self.paulis:
            out.extend((label, qubits) for qubits in index_sets(len(label), self.n_qubits,
                                                                 self.entanglement))
        return out

    def to_dict(self) -> dict:
        d = {"family": self.family, "n_qubits": self.n_qubits, "reps": self.reps,
             "entanglement": self.entanglement}
        if self.family == "Pauli":
            d["pauli_strings"] = list(self.pauli_strings)
        return d

    def digest(self) -> str:
        return hexdigest({"feature_map": self.to_dict()})


def index_sets(size: int, n: int, entanglement: str) -> list[tuple[int, ...]]:
    if size == 1:
        return [(i,) for i in range(n)]
    if entanglement == "linear":
        return [tuple(range(i, i + size)) for i in range(n - size + 1)]
    return list(itertools.combinations(range(n), size))


@lru_cache(maxsize=256)
def _parity_signs(qubits: tuple[int, ...], n: int) -> np.ndarray:
    """prod_k (1 - 2 * bit_k(b)) over basis indices b, i.e. the Z-string eigenvalues."""
    b = np.arange(2 ** n)
    signs = np.ones(2 ** n)
    for q in qubits:
        signs = signs * (1 - 2 * ((b >> q) & 1))
    signs.setflags(write=False)
    return signs


def term_angles(z: np.ndarray, qubits: tuple[int, ...]) -> np.ndarray:
    """Data angle of one term for every row of ``z``."""
    if len(qubits) == 1:
        return z[:, qubits[0]]
    angle = np.pi - z[:, qubits[0]]
    for q in qubits[1:]:
        angle = angle * (np.pi - z[:, q])
    return angle


def _apply_1q(psi: np.ndarray, gate: np.ndarray, q: int, n: int) -> np.ndarray:
    batch = psi.shape[0]
    v = psi.reshape(batch, 2 ** (n - q - 1), 2, 2 ** q)
    a, b = v[:, :, 0, :], v[:, :, 1, :]
    out = np.empty_like(v)
    out[:, :, 0, :] = gate[0, 0] * a + gate[0, 1] * b
    out[:, :, 1, :] = gate[1, 0] * a + gate[1, 1] * b
    return out.reshape(batch, 2 ** n)


def _hadamard_layer(psi: np.ndarray, n: int) -> np.ndarray:
    for q in range(n):
        psi = _apply_1q(psi, _H, q, n)
    return psi


def _check_inputs(z, spec: FeatureMapSpec) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != spec.n_qubits:
        raise ValueError(f"feature vectors of length {z.shape[-1]} do not match "
                         f"{spec.n_qubits} qubits")
    if not np.all(np.isfinite(z)):
        raise ValueError("feature vectors must be finite")
    return z


def encode_states(z, spec: FeatureMapSpec, method: str = "auto") -> np.ndarray:
    """Statevectors for every row of ``z``; shape [rows, 2**n_qubits].

    ``method`` is ``"diagonal"`` (one combined phase per repetition, Z-only
    maps), ``"generic"`` (term-by-term with basis changes) or ``"auto"``.
    Rows never interact, so a row's amplitudes do not depend on the batch.
    """
    z = _check_inputs(z, spec)
    n = spec.n_qubits
    if method == "auto":
        method = "diagonal" if spec.is_diagonal else "generic"
    if method == "diagonal" and not spec.is_diagonal:
        raise ValueError("diagonal path requires Z-only Pauli strings")
    if method not in ("diagonal", "generic"):
        raise ValueError(f"unknown method {method!r}")

    terms = spec.terms()
    psi = np.zeros((z.shape[0], 2 ** n), dtype=np.complex128)
    psi[:, 0] = 1.0
    for _ in range(spec.reps):
        psi = _hadamard_layer(psi, n)
        if method == "diagonal":
            theta = np.zeros((z.shape[0], 2 ** n))
            for _, qubits in terms:
                theta += term_angles(z, qubits)[:, None] * _parity_signs(qubits, n)[None, :]
            psi = psi * np.exp(-1j * theta)
        else:
            for label, qubits in terms:
                psi = _apply_pauli_rotation(psi, label, qubits, term_angles(z, qubits), n)
    return psi


def _apply_pauli_rotation(psi, label, qubits, angles, n):
    """psi <- exp(-i * angle * P) psi, with P = B^dagger Z...Z B."""
    for ch, q in zip(label, qubits):
        if ch == "X":
            psi = _apply_1q(psi, _H, q, n)
        elif ch == "Y":
            psi = _apply_1q(psi, _SDG, q, n)
            psi = _apply_1q(psi, _H, q, n)
    psi = psi * np.exp(-1j * angles[:, None] * _parity_signs(qubits, n)[None, :])
    for ch, q in zip(label, qubits):
        if ch == "X":
            psi = _apply_1q(psi, _H, q, n)
        elif ch == "Y":
            psi = _apply_1q(psi, _H, q, n)
            psi = _apply_1q(psi, _S, q, n)
    return psi


def encode_state(z, spec: FeatureMapSpec, method: str = "auto") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("encode_state takes a single feature vector")
    return encode_states(z, spec, method)[0]


def fidelities(states_a: np.ndarray, states_b: np.ndarray) -> np.ndarray:
    """|<a_i|b_j>|^2 for all pairs, clamped to [0, 1].

    Entries are reduced one row at a time so each value is independent of how
    the inputs were batched.
    """
    out = np.empty((states_a.shape[0], states_b.shape[0]))
    ar, ai = np.ascontiguousarray(states_a.real), np.ascontiguousarray(states_a.imag)
    br, bi = np.ascontiguousarray(states_b.real), np.ascontiguousarray(states_b.imag)
    for i in range(states_a.shape[0]):
        # separate real products keep k(a, b) == k(b, a) bit for bit
        re = (ar[i] * br + ai[i] * bi).sum(axis=1)
        im = (ar[i] * bi - ai[i] * br).sum(axis=1)
        out[i] = re * re + im * im
    return np.clip(out, 0.0, 1.0)


def paired_fidelities(states_a: np.ndarray, states_b: np.ndarray) -> np.ndarray:
    """|<a_i|b_i>|^2 for row-aligned pairs, with the same arithmetic as :func:`fidelities`."""
    if states_a.shape != states_b.shape:
        raise ValueError("paired fidelities need equally shaped state batches")
    ar, ai = states_a.real, states_a.imag
    br, bi = states_b.real, states_b.imag
    re = (ar * br + ai * bi).sum(axis=1)
    im = (ar * bi - ai * br).sum(axis=1)
    return np.clip(re * re + im * im, 0.0, 1.0)


def fidelity_kernel(z1, z2, spec: FeatureMapSpec) -> float:
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != (spec.n_qubits,) or z2.shape != (spec.n_qubits,):
        raise ValueError(f"both vectors must have length {spec.n_qubits}")
    return float(fidelities(encode_states(z1, spec), encode_states(z2, spec))[0, 0])
