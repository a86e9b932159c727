"""Composite separability/security scores and fold-level significance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SEP_WEIGHTS = (0.4, 0.3, 0.3)  # margin, accuracy, 1 - FPR
SEC_WEIGHTS = (0.4, 0.4, 0.2)  # accuracy, margin, z-scored accuracy spread
EFFECT_BANDS = ((0.8, "large"), (0.5, "medium"), (0.2, "small"))


def _unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def sep_score(margin_mean: float, acc_mean: float, fpr_mean: float) -> float:
    _unit("accuracy", acc_mean)
    _unit("fpr", fpr_mean)
    if margin_mean < 0:
        raise ValueError(f"margin must be non-negative, got {margin_mean}")
    w_margin, w_acc, w_fpr = SEP_WEIGHTS
    return w_margin * margin_mean + w_acc * acc_mean + w_fpr * (1.0 - fpr_mean)


def sec_score(acc_mean: float, margin_mean: float, sigma_acc_z: float) -> float:
    w_acc, w_margin, w_sigma = SEC_WEIGHTS
    return w_acc * acc_mean + w_margin * margin_mean - w_sigma * sigma_acc_z


def zscore(values) -> np.ndarray:
    """Population z-scores; zeros when fewer than two values or no spread."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return np.zeros_like(v)
    sd = v.std()
    if sd == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def robustness_index(margin_mean: float, margin_sigma: float, lam: float = 1.0) -> float:
    """Proportional robustness indicator gamma - lambda * sigma_gamma (unitless)."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return margin_mean - lam * margin_sigma


# --------------------------------------------------------------------------
# Student t distribution through the regularized incomplete beta function

def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: float) -> float:
    if math.isinf(t):
        return 0.0
    if t == 0:
        return 1.0
    return min(1.0, max(0.0, betainc(dof / 2.0, 0.5, dof / (dof + t * t))))


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    delta: float  # mean(a) - mean(b)
    t_statistic: float
    p_value: float
    dof: float
    cohens_d: float
    effect_label: str


def effect_label(d: float) -> str:
    for bound, label in EFFECT_BANDS:
        if abs(d) >= bound:
            return label
    return "negligible"


def compare_models(a, b) -> ComparisonReport:
    """Welch two-sample t-test and pooled-SD Cohen's d for fold-level metrics."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least two folds per model")
    na, nb = a.size, b.size
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    delta = float(ma - mb)
    se2 = va / na + vb / nb
    pooled = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    if delta == 0:
        return ComparisonReport(0.0, 0.0, 1.0, float(na + nb - 2), 0.0, "negligible")
    if se2 == 0:
        inf = math.copysign(math.inf, delta)
        return ComparisonReport(delta, inf, 0.0, float(na + nb - 2), inf, "large")
    t = delta / math.sqrt(se2)
    # Welch-Satterthwaite, scaled by the larger term so tiny variances cannot underflow
    u, v = va / na, vb / nb
    top = max(u, v)
    u, v = u / top, v / top
    dof = (u + v) ** 2 / (u * u / (na - 1) + v * v / (nb - 1))
    d = delta / pooled
    return ComparisonReport(delta, float(t), t_two_sided_p(t, dof), float(dof), float(d),
                            effect_label(d))
