"""Synthetic two-class data injected directly at the reduced-feature stage."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ._canon import fmt9
from .errors import ConfigError
from .features import FeatureSet, _write_text


def gaussian_blobs(n_per_class: int, separation: float, seed: int, dim: int = 2,
                   sigma: float = 1.0) -> FeatureSet:
    """Two isotropic Gaussians whose means lie ``separation * sigma`` apart.

    The mean offset runs along the all-ones diagonal, so every coordinate
    carries part of the signal.
    """
    if n_per_class < 2:
        raise ConfigError("n_per_class must be at least 2")
    if not separation >= 0:
        raise ConfigError("separation must be non-negative")
    if dim < 1:
        raise ConfigError("dim must be positive")
    rng = np.random.default_rng(seed)
    u = np.ones(dim) / np.sqrt(dim)
    half = 0.5 * separation * sigma * u
    bona = rng.normal(0.0, sigma, (n_per_class, dim)) - half
    spoof = rng.normal(0.0, sigma, (n_per_class, dim)) + half
    ids = ([f"synth/bonafide_{i:04d}" for i in range(n_per_class)]
           + [f"synth/spoof_{i:04d}" for i in range(n_per_class)])
    labels = np.concatenate([np.ones(n_per_class, int), -np.ones(n_per_class, int)])
    meta = {"source": "synthetic", "n_per_class": n_per_class, "separation": float(separation),
            "seed": seed, "dim": dim}
    return FeatureSet(ids, labels, np.vstack([bona, spoof]), meta)


def write_synthetic(directory: str | os.PathLike, n_per_class: int, separation: float,
                    seed: int, dim: int = 2) -> FeatureSet:
    """Feature artifact plus a matching ``manifest.csv`` listing the synthetic ids."""
    fs = gaussian_blobs(n_per_class, separation, seed, dim)
    directory = Path(directory)
    fs.save(directory)
    lines = ["# synthetic ids; features live in values.npy",
             f"# separation={fmt9(separation)} seed={seed} dim={dim}"]
    lines += [f"{i},{'bonafide' if y > 0 else 'spoof'}" for i, y in zip(fs.ids, fs.labels)]
    _write_text(directory / "manifest.csv", "\n".join(lines) + "\n")
    return fs
