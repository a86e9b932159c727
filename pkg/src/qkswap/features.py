"""Audio front end: WAV loading, log-mel spectrograms, min-max scaling, PCA.

Everything here is a pure function of its inputs. Scaler and PCA models are
fitted on training rows only; the protocol module is responsible for calling
them per fold.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ._canon import array_digest, hexdigest
from .errors import DataError

LABELS = {"bonafide": 1, "spoof": -1}


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DataError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("waveform contains non-finite samples")


@dataclass(frozen=True)
class ExtractionParams:
    sample_rate: int = 16000
    win_length: int = 512
    hop_length: int = 256
    n_mels: int = 64
    eps: float = 1e-10
    duration: float = 4.0
    fmin: float = 0.0
    fmax: float | None = None
    n_frames: int | None = None

    def __post_init__(self):
        if self.win_length < 2 or self.hop_length < 1 or self.n_mels < 1:
            raise ValueError("win_length >= 2, hop_length >= 1 and n_mels >= 1 required")
        if self.eps <= 0 or self.duration <= 0:
            raise ValueError("eps and duration must be positive")
        if self.n_samples < self.win_length:
            raise ValueError("duration is shorter than one analysis window")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def n_frames_target(self) -> int:
        if self.n_frames is not None:
            return self.n_frames
        return 1 + (self.n_samples - self.win_length) // self.hop_length

    @property
    def top_frequency(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def params_hash(self) -> str:
        return hexdigest({"mel_params": self.to_dict()})


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # [n_mels, n_frames], natural-log energies
    params_hash: str

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ScalerParams:
    min: np.ndarray
    max: np.ndarray

    def digest(self) -> str:
        return array_digest(self.min, self.max)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # [d, D], orthonormal rows
    explained_variance: np.ndarray

    @property
    def d(self) -> int:
        return self.components.shape[0]

    def digest(self) -> str:
        return array_digest(self.mean, self.components, self.explained_variance)


@dataclass
class FeatureSet:
    """Labelled feature rows; labels are +1 for bona fide and -1 for spoof."""

    ids: list[str]
    labels: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if not self.ids or self.values.ndim != 2 or self.values.shape[0] != len(self.ids):
            raise DataError("feature matrix must be 2-D with one row per id")
        if self.labels.shape != (len(self.ids),):
            raise DataError("one label per row required")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise DataError("labels must be +1 (bonafide) or -1 (spoof)")
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature matrix contains non-finite values")

    def __len__(self) -> int:
        return len(self.ids)

    def canonical(self) -> "FeatureSet":
        """Rows sorted by id so that input order never affects results."""
        order = sorted(range(len(self.ids)), key=lambda i: self.ids[i])
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate sample ids in feature set")
        return FeatureSet([self.ids[i] for i in order], self.labels[order],
                          self.values[order], dict(self.meta))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.ids).encode("utf-8"))
        h.update(array_digest(self.labels, self.values).encode())
        return h.hexdigest()

    def save(self, directory: str | os.PathLike) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tmp = directory / "values.npy.tmp"
        with open(tmp, "wb") as fh:
            np.save(fh, np.ascontiguousarray(self.values, dtype="<f8"))
        os.replace(tmp, directory / "values.npy")
        index = {"ids": self.ids, "labels": [int(v) for v in self.labels],
                 "meta": self.meta, "digest": self.digest()}
        _write_text(directory / "index.json",
                    json.dumps(index, indent=1, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "FeatureSet":
        directory = Path(directory)
        try:
            index = json.loads((directory / "index.json").read_text(encoding="utf-8"))
            values = np.load(directory / "values.npy", allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read feature artifact {directory}: {exc}") from exc
        fs = cls(list(index["ids"]), np.array(index["labels"]), values, index.get("meta", {}))
        if index.get("digest") not in (None, fs.digest()):
            raise DataError(f"feature artifact {directory} fails its digest check")
        return fs


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# waveform I/O

def resample_linear(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    if rate_in == rate_out:
        return samples
    n_out = int(round(samples.size * rate_out / rate_in))
    if n_out < 1:
        raise DataError("resampling produced zero-length audio")
    t_out = np.arange(n_out) / rate_out
    t_in = np.arange(samples.size) / rate_in
    return np.interp(t_out, t_in, samples)


def load_audio(path: str | os.PathLike, sample_rate: int = 16000) -> Waveform:
    """Read a PCM WAV file as mono float samples in [-1, 1] at ``sample_rate``."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise DataError(f"missing audio file: {path}") from exc
    except (OSError, ValueError) as exc:
        raise DataError(f"unreadable audio file {path}: {exc}") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample encoding {data.dtype} "
                        "(16-bit PCM or 32-bit float required)")
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.size == 0:
        raise DataError(f"{path}: zero-length audio")
    return Waveform(resample_linear(data, rate, sample_rate), sample_rate)


# --------------------------------------------------------------------------
# spectrogram

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(params: ExtractionParams) -> np.ndarray:
    """Triangular HTK-mel filters, shape [n_mels, win_length // 2 + 1], peak 1."""
    n_bins = params.win_length // 2 + 1
    bin_hz = np.arange(n_bins) * params.sample_rate / params.win_length
    edges = mel_to_hz(np.linspace(hz_to_mel(params.fmin), hz_to_mel(params.top_frequency),
                                  params.n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz[None, :] - lower) / (center - lower)
    falling = (upper - bin_hz[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def fix_length(samples: np.ndarray, n: int) -> np.ndarray:
    """Center-crop or tail-pad with silence to exactly ``n`` samples."""
    if samples.size > n:
        start = (samples.size - n) // 2
        return samples[start:start + n]
    if samples.size < n:
        return np.concatenate([samples, np.zeros(n - samples.size)])
    return samples


def power_spectrogram(samples: np.ndarray, win_length: int, hop_length: int) -> np.ndarray:
    """|STFT|^2 with a periodic Hann window, shape [n_bins, n_frames]."""
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_length) / win_length)
    frames = np.lib.stride_tricks.sliding_window_view(samples, win_length)[::hop_length]
    spectrum = np.fft.rfft(frames * window, n=win_length, axis=1)
    return (spectrum.real ** 2 + spectrum.imag ** 2).T


def mel_spectrogram(w: Waveform, params: ExtractionParams | None = None) -> MelSpectrogram:
    params = params or ExtractionParams()
    if w.sample_rate != params.sample_rate:
        raise DataError(f"waveform at {w.sample_rate} Hz, extraction expects "
                        f"{params.sample_rate} Hz")
    if w.samples.size < params.win_length:
        raise DataError(f"waveform has {w.samples.size} samples, shorter than one "
                        f"{params.win_length}-sample window")
    samples = fix_length(np.asarray(w.samples, dtype=np.float64), params.n_samples)
    energy = mel_filterbank(params) @ power_spectrogram(samples, params.win_length,
                                                        params.hop_length)
    values = np.log(energy + params.eps)
    target = params.n_frames_target
    if values.shape[1] > target:
        values = values[:, :target]
    elif values.shape[1] < target:
        pad = np.full((values.shape[0], target - values.shape[1]), np.log(params.eps))
        values = np.concatenate([values, pad], axis=1)
    # rounding in the filterbank product can land a hair below the floor
    values = np.maximum(values, np.log(params.eps))
    return MelSpectrogram(values, params.params_hash)


def flatten(spec: MelSpectrogram) -> np.ndarray:
    return np.ascontiguousarray(spec.values).reshape(-1)


# --------------------------------------------------------------------------
# scaling and PCA

def fit_minmax(train: np.ndarray) -> ScalerParams:
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise DataError("min-max scaler needs a non-empty 2-D training matrix")
    if train.shape[0] < 2:
        raise DataError("min-max scaler needs at least 2 training rows")
    return ScalerParams(train.min(axis=0), train.max(axis=0))


def apply_minmax(x: np.ndarray, p: ScalerParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.min.size:
        raise DataError(f"scaler fitted on {p.min.size} columns, got shape {x.shape}")
    span = p.max - p.min
    live = span > 0
    out = np.zeros_like(x)
    out[:, live] = (x[:, live] - p.min[live]) / span[live]
    return np.clip(out, 0.0, 1.0)


def _orient(components: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), pivot])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def _randomized_svd(xc: np.ndarray, k: int, seed: int, oversample: int = 10,
                    n_iter: int = 4):
    rng = np.random.default_rng(seed)
    width = min(k + oversample, min(xc.shape))
    q, _ = np.linalg.qr(xc @ rng.standard_normal((xc.shape[1], width)))
    for _ in range(n_iter):
        q, _ = np.linalg.qr(xc.T @ q)
        q, _ = np.linalg.qr(xc @ q)
    _, s, vt = np.linalg.svd(q.T @ xc, full_matrices=False)
    return s, vt


def fit_pca(train: np.ndarray, d: int, seed: int | None = None) -> PcaModel:
    """Top-``d`` principal directions of the training rows.

    With ``seed=None`` an exact thin SVD is used; an integer seed switches to a
    seeded randomized SVD, which is cheaper when there are many columns.
    """
    train = np.asarray(train, dtype=np.float64)
    n, width = train.shape
    if d < 1 or d > min(n - 1, width):
        raise DataError(f"PCA dimension {d} needs 1 <= d <= min(rows - 1, columns) "
                        f"= {min(n - 1, width)}")
    mean = train.mean(axis=0)
    xc = train - mean
    if seed is None:
        _, s, vt = np.linalg.svd(xc, full_matrices=False)
    else:
        s, vt = _randomized_svd(xc, d, seed)
    tol = max(n, width) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank < d:
        raise DataError(f"training matrix has rank {rank} < requested PCA dimension {d}")
    return PcaModel(mean, _orient(vt[:d]), s[:d] ** 2 / (n - 1))


def apply_pca(x: np.ndarray, m: PcaModel) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.mean.size:
        raise DataError(f"PCA fitted on {m.mean.size} columns, got shape {x.shape}")
    return (x - m.mean) @ m.components.T


# --------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: int
    line: int


def read_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    """Parse ``relative/path.wav,label`` lines, sorted by path."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.rsplit(",", 1)
        if len(parts) != 2 or not parts[0].strip():
            raise DataError(f"{path}:{lineno}: expected 'relative/path.wav,label', got {raw!r}")
        rel, label = parts[0].strip(), parts[1].strip()
        if label not in LABELS:
            raise DataError(f"{path}:{lineno}: unknown label {label!r} "
                            "(expected bonafide or spoof)")
        records.append(ManifestRecord(rel, LABELS[label], lineno))
    if not records:
        raise DataError(f"manifest {path} has no records")
    records.sort(key=lambda r: r.path)
    for a, b in zip(records, records[1:]):
        if a.path == b.path:
            raise DataError(f"{path}:{b.line}: duplicate entry {b.path!r}")
    return records


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dataset_digest(records: list[ManifestRecord], audio_root: Path,
                   params: ExtractionParams) -> str:
    """Digest over manifest entries, audio bytes and extraction parameters."""
    entries = []
    for r in records:
        audio = audio_root / r.path
        if not audio.is_file():
            raise DataError(f"manifest line {r.line}: missing audio file {audio}")
        entries.append([r.path, r.label, _file_sha256(audio)])
    return hexdigest({"entries": entries, "params": params.to_dict()})


def extract_features(records: list[ManifestRecord], audio_root: str | os.PathLike,
                     params: ExtractionParams | None = None, jobs: int = 1) -> FeatureSet:
    """Flattened (mel-major) log-mel rows for every manifest record."""
    params = params or ExtractionParams()
    root = Path(audio_root)

    def one(record: ManifestRecord) -> np.ndarray:
        w = load_audio(root / record.path, params.sample_rate)
        return flatten(mel_spectrogram(w, params))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        rows = list(pool.map(one, records))
    meta = {"params": params.to_dict(), "params_hash": params.params_hash,
            "source": "audio"}
    return FeatureSet([r.path for r in records], [r.label for r in records],
                      np.vstack(rows), meta)
