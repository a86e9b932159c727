"""Soft-margin SVM trained from a precomputed Gram matrix.

The dual

    max_a  sum(a) - 1/2 a^T (y y^T * K) a   s.t.  0 <= a_i <= C,  y^T a = 0

is solved by sequential pairwise updates. The first index of each pair is the
maximal KKT violator, the second maximizes the guaranteed objective decrease
of the minimization form (second-order working-set selection); ties go to the
lowest index, which makes training fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

_TAU = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    C: float = 1.0
    kkt_tol: float = 1e-3
    max_passes: int = 100
    seed: int = 0  # recorded for provenance; working-set selection is deterministic

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.kkt_tol > 0:
            raise ValueError(f"kkt_tol must be positive, got {self.kkt_tol}")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")


@dataclass(frozen=True)
class TrainedSvm:
    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    support_indices: np.ndarray
    w_norm_sq: float
    C: float
    converged: bool
    iterations: int
    kkt_gap: float

    @property
    def dual_coef(self) -> np.ndarray:
        return self.alphas * self.labels

    @property
    def dual_objective(self) -> float:
        return float(self.alphas.sum() - 0.5 * self.w_norm_sq)

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "bias": self.bias,
            "labels": self.labels.tolist(),
            "support_indices": self.support_indices.tolist(),
            "w_norm_sq": self.w_norm_sq,
            "C": self.C,
            "converged": self.converged,
            "iterations": self.iterations,
            "kkt_gap": self.kkt_gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedSvm":
        return cls(np.asarray(d["alphas"], dtype=np.float64), float(d["bias"]),
                   np.asarray(d["labels"], dtype=np.int64),
                   np.asarray(d["support_indices"], dtype=np.int64),
                   float(d["w_norm_sq"]), float(d["C"]), bool(d["converged"]),
                   int(d["iterations"]), float(d["kkt_gap"]))


def dual_objective(alphas, labels, gram) -> float:
    """sum(a) - 1/2 a^T Q a, the quantity the solver maximizes."""
    ya = np.asarray(alphas) * np.asarray(labels)
    return float(np.sum(alphas) - 0.5 * ya @ np.asarray(gram) @ ya)


def _gram_values(gram) -> np.ndarray:
    return np.asarray(getattr(gram, "values", gram), dtype=np.float64)


def train(gram, labels, cfg: SolverConfig | None = None, debug: bool = False) -> TrainedSvm:
    cfg = cfg or SolverConfig()
    K = _gram_values(gram)
    y = np.asarray(labels, dtype=np.float64)
    n = y.size
    if K.shape != (n, n):
        raise DataError(f"Gram matrix shape {K.shape} does not match {n} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be +1/-1")
    if np.all(y == y[0]):
        raise DataError("training split contains a single class")
    if not np.all(np.isfinite(K)):
        raise DataError("Gram matrix has non-finite entries")

    # Solve with the first label oriented to +1: negating every label then yields
    # the identical optimization path, so scores flip sign exactly.
    sign = 1.0 if y[0] > 0 else -1.0
    y_out = y
    y = sign * y
    C = float(cfg.C)
    Q = y[:, None] * y[None, :] * K
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a^T Q a - sum(a)
    pos, neg = y > 0, y < 0
    converged = False
    gap = np.inf
    objective = 0.0
    max_iter = cfg.max_passes * n
    it = 0
    for it in range(max_iter + 1):
        viol = -y * grad
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        viol_up = np.where(up, viol, -np.inf)
        i = int(np.argmax(viol_up))
        m_up = viol_up[i]
        m_low = np.min(np.where(low, viol, np.inf))
        gap = float(m_up - m_low)
        if gap <= cfg.kkt_tol:
            converged = True
            break
        if it == max_iter:
            break
        cand = low & (viol < m_up)
        b = m_up - viol
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, _TAU)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else _TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)
        if debug:
            new_objective = -0.5 * float(alpha @ (grad - 1.0))
            assert new_objective >= objective - 1e-12 * max(1.0, abs(objective)), \
                f"dual objective decreased at iteration {it}"
            objective = new_objective

    bias = -sign * _rho(alpha, y, grad, C)
    w_norm_sq = float(alpha @ Q @ alpha)
    support = np.flatnonzero(alpha > 0)
    return TrainedSvm(alpha, bias, y_out.astype(np.int64), support, w_norm_sq, C,
                      converged, it, gap)


def _rho(alpha, y, grad, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= C
    # bounded variables delimit the feasible offset interval [lb, ub]
    ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def decision_scores(model: TrainedSvm, cross) -> np.ndarray:
    """f(x) = sum_j a_j y_j K(x, x_j) + b for each evaluation row of ``cross``."""
    cross = np.asarray(cross, dtype=np.float64)
    if cross.ndim != 2 or cross.shape[1] != model.alphas.size:
        raise DataError(f"cross-kernel shape {cross.shape} does not align with "
                        f"{model.alphas.size} training rows")
    return (cross * model.dual_coef[None, :]).sum(axis=1) + model.bias


class DegenerateMarginError(ValueError):
    pass


def margin(model: TrainedSvm, where: str = "") -> float:
    """Geometric margin 2 / ||w|| in the kernel-induced space."""
    if model.w_norm_sq <= 1e-15:
        suffix = f" in {where}" if where else ""
        raise DegenerateMarginError(f"degenerate separator{suffix}: ||w||^2 = {model.w_norm_sq:.3e}")
    return 2.0 / np.sqrt(model.w_norm_sq)
