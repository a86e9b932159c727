"""Run configuration: TOML with dotted key paths, defaults, canonical digest.

A minimal config::

    dataset.name = "synthetic"
    dataset.features = "synth"          # prebuilt feature artifact, or:
    # dataset.manifest = "data/manifest.csv"
    # dataset.audio_root = "data"

    features.d = 2
    folds.k = 5
    folds.seed = 0

    models.svm_rbf.kernel = "rbf"
    models.svm_rbf.gamma = [0.01, 0.1, 1, 10]
    models.qsvm_zz2.kernel = "quantum"
    models.qsvm_zz2.family = "ZZ"
    models.qsvm_zz2.n_qubits = 2

Relative paths are resolved against the config file's directory. Location
and parallelism keys (``output_dir``, ``cache_dir``, ``jobs``) are excluded
from the canonical digest since they never change results.
"""

from __future__ import annotations

import copy
import itertools
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ._canon import hexdigest, normalize
from .errors import ConfigError
from .features import ExtractionParams
from .kernels import KernelSpec
from .quantum import FeatureMapSpec
from .svm import SolverConfig

CACHE_ENV = "QKSWAP_CACHE_DIR"
LOCATION_KEYS = ("output_dir", "cache_dir", "jobs")

_EXTRACTION_KEYS = tuple(ExtractionParams.__dataclass_fields__)
FEATURE_DEFAULTS = {"d": 2, "pca_seed": None,
                    **{k: getattr(ExtractionParams(), k) for k in _EXTRACTION_KEYS}}

DEFAULTS = {
    "dataset": {"name": "dataset", "manifest": None, "audio_root": None, "features": None},
    "features": FEATURE_DEFAULTS,
    "folds": {"k": 5, "seed": 0, "inner_k": 3},
    "solver": {"kkt_tol": 1e-3, "max_passes": 100},
    "gram": {"tile": 64, "psd_tol": 1e-8},
    "diagnostics": {"robustness_lambda": 1.0},
    "models": {},
    "output_dir": "runs/latest",
    "cache_dir": None,
    "jobs": 0,
}

MODEL_DEFAULTS = {
    "common": {"C": [0.1, 1.0, 10.0, 100.0]},
    "linear": {},
    "rbf": {"gamma": [0.01, 0.1, 1.0, 10.0]},
    "polynomial": {"degree": [2, 3], "coef0": 1.0},
    "quantum": {"family": "ZZ", "n_qubits": 2, "reps": 2, "entanglement": "linear",
                "pauli_strings": ["Z", "ZZ"]},
}


@dataclass(frozen=True)
class FeatureConfig:
    extraction: ExtractionParams
    d: int
    pca_seed: int | None

    def to_dict(self) -> dict:
        return {**self.extraction.to_dict(), "d": self.d, "pca_seed": self.pca_seed}


@dataclass(frozen=True)
class ModelConfig:
    name: str
    kind: str
    C: tuple[float, ...]
    features: FeatureConfig
    gamma: tuple[float, ...] = ()
    degree: tuple[int, ...] = ()
    coef0: float = 1.0
    feature_map: FeatureMapSpec | None = None

    @property
    def is_quantum(self) -> bool:
        return self.kind == "quantum"

    def kernel_specs(self) -> list[KernelSpec]:
        if self.kind == "linear":
            return [KernelSpec.linear()]
        if self.kind == "rbf":
            return [KernelSpec.rbf(g) for g in self.gamma]
        if self.kind == "polynomial":
            return [KernelSpec.polynomial(deg, self.coef0) for deg in self.degree]
        return [KernelSpec.quantum(self.feature_map)]

    def candidates(self) -> list[tuple[KernelSpec, float]]:
        """Hyperparameter grid in a fixed order (kernel parameters, then C)."""
        return list(itertools.product(self.kernel_specs(), self.C))


@dataclass
class RunConfig:
    raw: dict
    dataset: dict
    features: FeatureConfig
    folds: dict
    solver: dict
    gram: dict
    diagnostics: dict
    models: list[ModelConfig]
    output_dir: Path
    cache_dir: Path
    jobs: int
    base_dir: Path = field(default_factory=Path.cwd)

    def canonical(self) -> dict:
        return {k: v for k, v in normalize(self.raw).items() if k not in LOCATION_KEYS}

    def digest(self) -> str:
        return hexdigest(self.canonical())

    def solver_config(self, C: float) -> SolverConfig:
        return SolverConfig(C=C, kkt_tol=self.solver["kkt_tol"],
                            max_passes=int(self.solver["max_passes"]),
                            seed=int(self.folds["seed"]))

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def select_models(self, names) -> "RunConfig":
        wanted = [n.strip() for n in names if n.strip()]
        known = {m.name for m in self.models}
        missing = [n for n in wanted if n not in known]
        if missing:
            raise ConfigError(f"unknown model(s) {missing}; configured: {sorted(known)}")
        new = copy.copy(self)
        new.models = [m for m in self.models if m.name in wanted]
        new.raw = copy.deepcopy(self.raw)
        new.raw["models"] = {k: v for k, v in self.raw["models"].items() if k in wanted}
        return new


def _merge(defaults: dict, given: dict, where: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(defaults.get(k), dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where}.{k} must be a table")
            # an empty default table accepts free-form entries (models, overrides)
            out[k] = copy.deepcopy(v) if not defaults[k] else _merge(defaults[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def _feature_config(d: dict, where: str) -> FeatureConfig:
    try:
        extraction = ExtractionParams(**{k: d[k] for k in _EXTRACTION_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if not isinstance(d["d"], int) or d["d"] < 1:
        raise ConfigError(f"{where}.d must be a positive integer")
    seed = d["pca_seed"]
    if seed is not None and not isinstance(seed, int):
        raise ConfigError(f"{where}.pca_seed must be an integer")
    return FeatureConfig(extraction, d["d"], seed)


def _integer(value, where: str, lo: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        raise ConfigError(f"{where} must be an integer >= {lo}, got {value!r}")
    return value


def _positive(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"{where} must be a positive number, got {value!r}")
    return value


def _as_list(value, where: str) -> list:
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigError(f"{where} must not be empty")
    return items


def _model_config(name: str, given: dict, features: dict) -> tuple[ModelConfig, dict]:
    where = f"models.{name}"
    if "kernel" not in given:
        raise ConfigError(f"{where}.kernel is required")
    kind = given["kernel"]
    if kind not in ("linear", "rbf", "polynomial", "quantum"):
        raise ConfigError(f"{where}.kernel: unknown kernel {kind!r}")
    defaults = {"kernel": kind, **MODEL_DEFAULTS["common"], **MODEL_DEFAULTS[kind],
                "features": {}}
    raw = _merge(defaults, given, where)
    overrides = raw["features"]
    unknown = set(overrides) - set(FEATURE_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}.features: {sorted(unknown)}")
    feats = _feature_config({**features, **overrides}, f"{where}.features")
    Cs = tuple(_positive(c, f"{where}.C") for c in _as_list(raw["C"], f"{where}.C"))
    Cs = tuple(float(c) for c in Cs)
    kw: dict = {}
    try:
        if kind == "rbf":
            kw["gamma"] = tuple(float(g) for g in _as_list(raw["gamma"], f"{where}.gamma"))
        elif kind == "polynomial":
            kw["degree"] = tuple(int(g) for g in _as_list(raw["degree"], f"{where}.degree"))
            kw["coef0"] = float(raw["coef0"])
        elif kind == "quantum":
            kw["feature_map"] = FeatureMapSpec(raw["family"], int(raw["n_qubits"]), int(raw["reps"]),
                                               raw["entanglement"], tuple(raw["pauli_strings"]))
            if feats.d != kw["feature_map"].n_qubits:
                raise ConfigError(f"{where}: PCA dimension {feats.d} must equal "
                                  f"n_qubits {kw['feature_map'].n_qubits}")
        model = ModelConfig(name, kind, Cs, feats, **kw)
        model.kernel_specs()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if kind != "quantum":
        for key in ("family", "n_qubits", "reps", "entanglement", "pauli_strings"):
            raw.pop(key, None)
    return model, raw


def config_from_dict(given: dict, base_dir: Path | str | None = None) -> RunConfig:
    raw = _merge(DEFAULTS, given, "config")
    features = _feature_config(raw["features"], "features")
    models = []
    for name in sorted(raw["models"]):
        if not isinstance(raw["models"][name], dict):
            raise ConfigError(f"models.{name} must be a table")
        model, raw["models"][name] = _model_config(name, raw["models"][name], raw["features"])
        models.append(model)
    folds = raw["folds"]
    for key, lo in (("k", 2), ("inner_k", 2), ("seed", 0)):
        folds[key] = _integer(folds[key], f"folds.{key}", lo)
    raw["solver"]["max_passes"] = _integer(raw["solver"]["max_passes"], "solver.max_passes", 1)
    raw["gram"]["tile"] = _integer(raw["gram"]["tile"], "gram.tile", 1)
    for section, key in (("solver", "kkt_tol"), ("gram", "psd_tol"),
                         ("diagnostics", "robustness_lambda")):
        _positive(raw[section][key], f"{section}.{key}")
    raw["jobs"] = _integer(raw["jobs"], "jobs (0 means all available cores)", 0)
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    output_dir = Path(raw["output_dir"])
    output_dir = output_dir if output_dir.is_absolute() else base / output_dir
    cache = os.environ.get(CACHE_ENV) or raw["cache_dir"]
    if cache is None:
        cache_dir = output_dir / "gram_cache"
    else:
        cache_dir = Path(cache) if Path(cache).is_absolute() else base / cache
    jobs = raw["jobs"]
    return RunConfig(raw=raw, dataset=raw["dataset"], features=features, folds=folds,
                     solver=raw["solver"], gram=raw["gram"], diagnostics=raw["diagnostics"],
                     models=models, output_dir=output_dir, cache_dir=cache_dir, jobs=jobs,
                     base_dir=base)


def set_dotted(given: dict, key: str, value) -> None:
    """Assign ``value`` at a dotted key path such as ``folds.seed``."""
    *parents, leaf = key.split(".")
    node = given
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {key}: {part} is not a table")
    node[leaf] = value


def load_config(path: str | os.PathLike, overrides: dict | None = None) -> RunConfig:
    """Parse a TOML config; ``overrides`` maps dotted keys to replacement values."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            given = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        set_dotted(given, key, value)
    return config_from_dict(given, path.parent)
