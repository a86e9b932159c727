from __future__ import annotations

import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkswap.config import config_from_dict
from qkswap.errors import ConfigError, DataError, InvariantViolation
from qkswap.features import FeatureSet
from qkswap.protocol import preprocess, run_protocol, stratified_kfold
from qkswap.summary import mean_std, recompute
from qkswap.synth import gaussian_blobs

QUICK = {"dataset": {"name": "toy"},
         "models": {"svm_rbf": {"kernel": "rbf", "gamma": [0.5, 2.0], "C": [1.0, 10.0]},
                    "qsvm": {"kernel": "quantum", "C": [1.0, 10.0]}}}


@pytest.fixture(scope="module")
def toy_run():
    return run_protocol(gaussian_blobs(30, 3.0, 1), config_from_dict(QUICK))


def test_balanced_folds():
    labels = np.r_[np.ones(100), -np.ones(100)]
    plan = stratified_kfold(labels, 5, 0)
    for f in range(5):
        _, test = plan.split(f)
        assert np.sum(labels[test] > 0) == 20 and np.sum(labels[test] < 0) == 20
    assert np.array_equal(plan.assignments, stratified_kfold(labels, 5, 0).assignments)
    assert plan.digest() != stratified_kfold(labels, 5, 1).digest()


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(2, 40), st.integers(2, 6), st.integers(0, 99))
def test_per_class_fold_sizes_differ_by_at_most_one(n_pos, n_neg, k, seed):
    labels = np.r_[np.ones(n_pos), -np.ones(n_neg)]
    if min(n_pos, n_neg) < k:
        with pytest.raises(DataError):
            stratified_kfold(labels, k, seed)
        return
    plan = stratified_kfold(labels, k, seed)
    for cls in (1, -1):
        counts = np.bincount(plan.assignments[labels == cls], minlength=k)
        assert counts.max() - counts.min() <= 1
    sizes = np.bincount(plan.assignments, minlength=k)
    assert sizes.max() - sizes.min() <= 1


def test_single_class_rejected():
    with pytest.raises(DataError):
        stratified_kfold(np.ones(10), 2, 0)


def test_preprocess_guards_and_leakage():
    x = np.random.default_rng(0).uniform(size=(20, 5))
    fcfg = config_from_dict({}).features
    with pytest.raises(InvariantViolation):
        preprocess(x, np.arange(12), np.arange(10, 20), fcfg)
    train, test = np.arange(12), np.arange(12, 20)
    a = preprocess(x, train, test, fcfg)
    shuffled = x.copy()
    shuffled[test] = x[test[::-1]]
    b = preprocess(shuffled, train, test, fcfg)
    assert a.digests["scaler"] == b.digests["scaler"] and a.digests["pca"] == b.digests["pca"]
    assert np.all((a.z_train >= -2) & (a.z_train <= 2))


def test_kernel_swap_digests_match(toy_run):
    folds = [m["folds"] for m in toy_run.models.values()]
    for key in ("fold_plan", "scaler", "pca", "features"):
        for fa, fb in zip(*folds):
            assert fa["digests"][key] == fb["digests"][key]
    kernels = {f["digests"]["kernel"] for m in folds for f in m}
    assert len(kernels) >= 2


def test_run_record_contents(toy_run):
    rec = toy_run.record
    assert rec["dataset"]["n"] == 60 and rec["folds"]["k"] == 5
    for model in rec["models"].values():
        assert len(model["folds"]) == 5
        for f in model["folds"]:
            assert f["margin"] > 0 and f["n_train"] + f["n_test"] == 60
            assert len(f["scores"]) == len(f["labels"]) == f["n_test"]
        for metric in ("accuracy", "eer"):
            values = np.array([f["metrics"][metric] for f in model["folds"]])
            assert model["summary"][metric]["mean"] == pytest.approx(values.mean(), abs=1e-12)
            assert model["summary"][metric]["std"] == pytest.approx(values.std(ddof=1), abs=1e-12)
            assert (model["summary"][metric]["mean"],
                    model["summary"][metric]["std"]) == mean_std(values)
    assert {"qsvm", "svm_rbf"} == set(rec["diagnostics"]["models"])
    assert rec["comparisons"][0]["baseline"] == "svm_rbf"
    assert len(toy_run.svms) == 10


def test_recompute_accepts_and_detects_tampering(toy_run):
    rec = copy.deepcopy(toy_run.record)
    recompute(rec)
    assert rec == toy_run.record
    bad = copy.deepcopy(toy_run.record)
    bad["models"]["qsvm"]["folds"][2]["scores"][0] += 5.0
    with pytest.raises(InvariantViolation):
        recompute(bad)
    bad = copy.deepcopy(toy_run.record)
    bad["comparisons"][0]["p"] = 0.5
    with pytest.raises(InvariantViolation):
        recompute(bad)


def test_input_order_does_not_matter(toy_run):
    fs = gaussian_blobs(30, 3.0, 1)
    order = np.random.default_rng(0).permutation(len(fs))
    shuffled = FeatureSet([fs.ids[i] for i in order], fs.labels[order], fs.values[order], fs.meta)
    again = run_protocol(shuffled, config_from_dict(QUICK), jobs=3)
    assert again.record == toy_run.record


def test_needs_both_kernel_families():
    cfg = config_from_dict({"models": {"a": {"kernel": "linear"}}})
    with pytest.raises(ConfigError):
        run_protocol(gaussian_blobs(10, 3.0, 0), cfg)


def test_perturbed_pca_seed_breaks_contract():
    given = copy.deepcopy(QUICK)
    given["models"]["qsvm"]["features"] = {"pca_seed": 4}
    with pytest.raises(InvariantViolation, match="kernel-swap"):
        run_protocol(gaussian_blobs(30, 3.0, 1), config_from_dict(given))


def test_cache_is_transparent(tmp_path, toy_run):
    from qkswap.cache import GramCache
    cache = GramCache(tmp_path)
    cold = run_protocol(gaussian_blobs(30, 3.0, 1), config_from_dict(QUICK), cache=cache)
    warm = run_protocol(gaussian_blobs(30, 3.0, 1), config_from_dict(QUICK), cache=cache)
    assert cold.record == warm.record == toy_run.record
    assert len(cache.entries()) == 5 * 3
