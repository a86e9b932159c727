"""Per-fold metrics, aggregates, diagnostics and comparisons of a run record.

The run record is the JSON document written as ``run.json``. Per-fold values
(scores, metrics, margins) are quantized to 9 significant digits when they are
produced. Everything in the ``summary``, ``diagnostics`` and ``comparisons``
sections is computed from those stored values at full precision, so
:func:`recompute` can rebuild and check it bitwise from the raw artifacts.
"""

from __future__ import annotations

import math

import numpy as np

from ._canon import q9
from .diagnostics import compare_models, robustness_index, sec_score, sep_score, zscore
from .errors import InvariantViolation
from .metrics import confusion, eer

METRICS = ("accuracy", "precision", "recall", "f1", "fpr", "eer")


def fold_metrics(scores, labels) -> tuple[dict, dict]:
    """(metrics, confusion counts) at threshold 0, values quantized to 9 digits."""
    c = confusion(scores, labels, 0.0)
    metrics = {k: q9(v) for k, v in c.as_dict().items()}
    metrics["eer"] = q9(eer(scores, labels))
    return metrics, {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn}


def mean_std(values) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation."""
    values = [float(v) for v in values]
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def _aggregate(folds: list[dict]) -> dict:
    out = {}
    for metric in METRICS:
        m, s = mean_std(f["metrics"][metric] for f in folds)
        out[metric] = {"mean": m, "std": s}
    m, s = mean_std(f["margin"] for f in folds)
    out["margin"] = {"mean": m, "std": s}
    scores = np.concatenate([np.asarray(f["scores"], dtype=np.float64) for f in folds])
    labels = np.concatenate([np.asarray(f["labels"]) for f in folds])
    out["eer_pooled"] = eer(scores, labels)
    return out


def summarize(run: dict) -> dict:
    """Fill ``summary``, ``diagnostics`` and ``comparisons`` in place; returns ``run``."""
    models = run["models"]
    names = sorted(models)
    for name in names:
        models[name]["summary"] = _aggregate(models[name]["folds"])

    lam = float(run["config"]["diagnostics"]["robustness_lambda"])
    sigmas = [models[n]["summary"]["accuracy"]["std"] for n in names]
    sigma_z = zscore(sigmas)
    diag = {}
    for name, z in zip(names, sigma_z):
        s = models[name]["summary"]
        margin, acc, fpr = s["margin"]["mean"], s["accuracy"]["mean"], s["fpr"]["mean"]
        diag[name] = {
            "margin": margin,
            "sep_score": sep_score(margin, acc, fpr),
            "sigma_acc": s["accuracy"]["std"],
            "sigma_acc_z": float(z),
            "sec_score": sec_score(acc, margin, float(z)),
            "robustness": robustness_index(margin, s["margin"]["std"], lam),
        }
    run["diagnostics"] = {"robustness_lambda": lam, "models": diag}

    comparisons = []
    classical = [n for n in names if not models[n]["quantum"]]
    quantum = [n for n in names if models[n]["quantum"]]
    for base in classical:
        for challenger in quantum:
            a_eer = [f["metrics"]["eer"] for f in models[base]["folds"]]
            b_eer = [f["metrics"]["eer"] for f in models[challenger]["folds"]]
            report = compare_models(a_eer, b_eer)
            delta_fpr = (mean_std(f["metrics"]["fpr"] for f in models[base]["folds"])[0]
                         - mean_std(f["metrics"]["fpr"] for f in models[challenger]["folds"])[0])
            comparisons.append({
                "baseline": base,
                "challenger": challenger,
                "delta_eer": report.delta,
                "delta_fpr": delta_fpr,
                "t": report.t_statistic,
                "dof": report.dof,
                "p": report.p_value,
                "cohens_d": report.cohens_d,
                "effect": report.effect_label,
            })
    run["comparisons"] = comparisons
    return run


def recompute(run: dict) -> dict:
    """Rebuild every derived number from stored scores; fail on any mismatch."""
    for name, model in run["models"].items():
        for fold in model["folds"]:
            metrics, counts = fold_metrics(fold["scores"], fold["labels"])
            if metrics != fold["metrics"] or counts != fold["confusion"]:
                raise InvariantViolation(f"stored metrics of {name} fold {fold['fold']} do not "
                                         "match their scores")
    stored = {k: run.get(k) for k in ("diagnostics", "comparisons")}
    stored_summaries = {n: m.get("summary") for n, m in run["models"].items()}
    summarize(run)
    if stored_summaries != {n: m["summary"] for n, m in run["models"].items()} or any(
            stored[k] != run[k] for k in stored):
        raise InvariantViolation("stored aggregates do not match recomputation")
    return run
