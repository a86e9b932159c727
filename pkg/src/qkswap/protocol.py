"""The matched kernel-swap protocol.

Every model sees the same stratified folds. Per fold, min-max scaling and PCA
are fitted on the training rows only; the training Gram matrix and the
evaluation cross-kernel are then built per kernel, hyperparameters are chosen
by an inner stratified split of the training rows, and the refitted model is
scored on the held-out rows. Preprocessing digests are compared across models
so that the kernel is provably the only thing that changes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from ._canon import array_digest, hexdigest, q9
from .cache import GramCache
from .config import FeatureConfig, ModelConfig, RunConfig
from .errors import ConfigError, DataError, InvariantViolation
from .features import FeatureSet, apply_minmax, apply_pca, fit_minmax, fit_pca
from .kernels import build_gram, cross_gram, psd_floor
from .metrics import confusion, eer
from .summary import fold_metrics, summarize
from .svm import DegenerateMarginError, decision_scores, margin, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.assignments == fold
        return np.flatnonzero(~test), np.flatnonzero(test)

    def digest(self) -> str:
        return hexdigest({"k": self.k, "seed": self.seed,
                          "assignments": [int(a) for a in self.assignments]})


def stratified_kfold(labels, k: int, seed: int) -> FoldPlan:
    """Seeded per-class shuffle, then round-robin over folds.

    The round-robin offset carries over between classes, so overall fold sizes
    are balanced as well as per-class counts.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    assignments = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise DataError(f"class {cls} has {idx.size} samples, fewer than {k} folds")
        perm = rng.permutation(idx)
        assignments[perm] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    if np.unique(labels).size < 2:
        raise DataError("stratified folds need both classes")
    return FoldPlan(k, assignments, seed)


@dataclass(frozen=True)
class Prepared:
    z_train: np.ndarray
    z_test: np.ndarray
    digests: dict


def preprocess(values: np.ndarray, train_idx, test_idx, fcfg: FeatureConfig) -> Prepared:
    """Fold-specific min-max + PCA fitted on ``train_idx`` rows only."""
    if np.intersect1d(train_idx, test_idx).size:
        raise InvariantViolation("training and evaluation rows overlap")
    train_rows = values[train_idx]
    scaler = fit_minmax(train_rows)
    scaled_train = apply_minmax(train_rows, scaler)
    pca = fit_pca(scaled_train, fcfg.d, fcfg.pca_seed)
    z_train = apply_pca(scaled_train, pca)
    z_test = apply_pca(apply_minmax(values[test_idx], scaler), pca)
    digests = {"scaler": scaler.digest(), "pca": pca.digest(),
               "features": array_digest(z_train, z_test)}
    return Prepared(z_train, z_test, digests)


def _select(grams: dict, y: np.ndarray, model: ModelConfig, config: RunConfig, seed: int):
    """Grid point with the lowest inner-CV EER (ties: higher accuracy, then grid order)."""
    inner = stratified_kfold(y, int(config.folds["inner_k"]), seed)
    best = None
    for order, (spec, C) in enumerate(model.candidates()):
        K = grams[spec.digest()].values
        eers, accs = [], []
        for fold in range(inner.k):
            tr, va = inner.split(fold)
            fit = train(K[np.ix_(tr, tr)], y[tr], config.solver_config(C))
            spoof_score = -decision_scores(fit, K[np.ix_(va, tr)])
            spoof = (y[va] < 0).astype(int)
            eers.append(eer(spoof_score, spoof))
            accs.append(confusion(spoof_score, spoof).accuracy)
        key = (float(np.mean(eers)), -float(np.mean(accs)), order)
        if best is None or key < best[0]:
            best = (key, spec, C)
    (inner_eer, neg_acc, _), spec, C = best
    return spec, C, {"inner_eer": q9(inner_eer), "inner_accuracy": q9(-neg_acc)}


def evaluate_fold(fs: FeatureSet, plan: FoldPlan, fold: int, model: ModelConfig,
                  config: RunConfig, cache: GramCache | None, jobs: int) -> tuple[dict, dict]:
    """One (model, fold) unit; returns the fold record and the serialized SVM."""
    train_idx, test_idx = plan.split(fold)
    prep = preprocess(fs.values, train_idx, test_idx, model.features)
    y_train = fs.labels[train_idx]
    train_ids = [fs.ids[i] for i in train_idx]
    grams = {}
    for spec in model.kernel_specs():
        g = build_gram(prep.z_train, spec, tile=int(config.gram["tile"]), cache=cache,
                       row_ids=train_ids, jobs=jobs)
        grams[spec.digest()] = psd_floor(g, float(config.gram["psd_tol"]))
    spec, C, inner = _select(grams, y_train, model, config,
                             seed=int(config.folds["seed"]) + 1 + fold)
    gram = grams[spec.digest()]
    fit = train(gram, y_train, config.solver_config(C))
    where = f"model {model.name!r}, fold {fold}"
    if not fit.converged:
        log.warning("%s: solver stopped after %d iterations (KKT gap %.3e)",
                    where, fit.iterations, fit.kkt_gap)
    try:
        gamma = margin(fit, where)
    except DegenerateMarginError as exc:
        raise DataError(str(exc)) from exc
    cross = cross_gram(prep.z_test, prep.z_train, spec)
    scores = [q9(-s) for s in decision_scores(fit, cross)]
    labels = [int(v < 0) for v in fs.labels[test_idx]]
    metrics, counts = fold_metrics(scores, labels)
    record = {
        "fold": fold,
        "n_train": int(train_idx.size),
        "n_test": int(test_idx.size),
        "selected": {"kernel": spec.to_dict(), "C": C, **inner},
        "metrics": metrics,
        "confusion": counts,
        "margin": q9(gamma),
        "solver": {"converged": fit.converged, "iterations": fit.iterations,
                   "kkt_gap": q9(fit.kkt_gap), "n_support": int(fit.support_indices.size)},
        "gram": {"diagonal_shift": q9(gram.diagonal_shift),
                 "min_eigenvalue": q9(gram.min_eigenvalue)},
        "digests": {"fold_plan": plan.digest(), **prep.digests,
                    "kernel": spec.digest()},
        "ids": [fs.ids[i] for i in test_idx],
        "labels": labels,
        "scores": scores,
    }
    svm_record = {"model": model.name, "fold": fold, "kernel": spec.to_dict(),
                  "kernel_digest": spec.digest(), "features_digest": prep.digests["features"],
                  "train_ids": train_ids,
                  **{k: _q9_tree(v) for k, v in fit.to_dict().items()}}
    return record, svm_record


def _q9_tree(v):
    if isinstance(v, float):
        return q9(v)
    if isinstance(v, list):
        return [_q9_tree(x) for x in v]
    return v


SWAP_KEYS = ("fold_plan", "scaler", "pca", "features")


def check_kernel_swap(models: dict) -> None:
    """Everything upstream of the Gram matrix must be byte-identical across models."""
    names = sorted(models)
    ref = names[0]
    for name in names[1:]:
        for f_ref, f in zip(models[ref]["folds"], models[name]["folds"]):
            for key in SWAP_KEYS:
                if f_ref["digests"][key] != f["digests"][key]:
                    raise InvariantViolation(
                        f"kernel-swap contract violated: {key} digest of model {name!r} "
                        f"differs from {ref!r} in fold {f['fold']}")


@dataclass
class RunSummary:
    """The run record plus the per-fold SVMs (kept out of ``run.json``)."""

    record: dict
    svms: list[dict]

    @property
    def models(self) -> dict:
        return self.record["models"]

    def mean(self, model: str, metric: str) -> float:
        return self.models[model]["summary"][metric]["mean"]


def run_protocol(fs: FeatureSet, config: RunConfig, cache: GramCache | None = None,
                 jobs: int | None = None) -> RunSummary:
    if not config.models:
        raise ConfigError("no models configured")
    if not any(m.is_quantum for m in config.models) or all(m.is_quantum for m in config.models):
        raise ConfigError("the kernel swap needs at least one classical and one quantum model")
    fs = fs.canonical()
    plan = stratified_kfold(fs.labels, int(config.folds["k"]), int(config.folds["seed"]))
    units = [(m, fold) for m in config.models for fold in range(plan.k)]
    jobs = jobs or config.jobs or None
    parallel_units = jobs is not None and jobs > 1
    gram_jobs = 1 if parallel_units else (jobs or 1)

    def work(unit):
        model, fold = unit
        return evaluate_fold(fs, plan, fold, model, config, cache, gram_jobs)

    if parallel_units:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, units))
    else:
        results = [work(u) for u in units]

    models: dict = {}
    svms = []
    for (model, _), (record, svm_record) in zip(units, results):
        entry = models.setdefault(model.name, {"kind": model.kind, "quantum": model.is_quantum,
                                               "folds": []})
        entry["folds"].append(record)
        svms.append(svm_record)
    check_kernel_swap(models)

    run = {
        "format": "qkswap-run/1",
        "version": __version__,
        "dataset": {"name": config.dataset["name"], "n": len(fs),
                    "features_digest": fs.digest(),
                    "n_bonafide": int(np.sum(fs.labels > 0)),
                    "n_spoof": int(np.sum(fs.labels < 0))},
        "config": config.canonical(),
        "config_digest": config.digest(),
        "folds": {"k": plan.k, "seed": plan.seed, "digest": plan.digest(),
                  "assignments": {fs.ids[i]: int(a) for i, a in enumerate(plan.assignments)}},
        "models": models,
    }
    summarize(run)
    return RunSummary(run, svms)
