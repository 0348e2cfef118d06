"""Audio feature families and the 193-dimensional per-recording vector.

Layout of the vector: ``[mfcc 40 | chroma 12 | mel 128 | contrast 7 | tonnetz 6]``.
Every family is a (rows x frames) matrix; the per-recording vector is the
row-wise mean over frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import dct

from .errors import InvalidParams
from .signal_io import AudioRecord, Label

N_FFT = 2048
HOP = 512
N_MELS = 128
N_MFCC = 40
LOG_EPS = 1e-10
CONTRAST_QUANTILE = 0.02
CHROMA_FMIN = 20.0
A4 = 440.0

BLOCKS = (("mfcc", 40), ("chroma", 12), ("mel", 128), ("contrast", 7), ("tonnetz", 6))
N_FEATURES = sum(n for _, n in BLOCKS)


def block_slices() -> dict[str, slice]:
    out, start = {}, 0
    for name, n in BLOCKS:
        out[name] = slice(start, start + n)
        start += n
    return out


# ---------------------------------------------------------------------------
# spectral front end

def hann(n: int) -> np.ndarray:
    """Periodic Hann window (the usual choice for STFT analysis)."""
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


def _frames(samples: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.size < n_fft:
        x = np.concatenate([x, np.zeros(n_fft - x.size)])
    n_frames = 1 + (x.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft(samples, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Magnitude STFT without centre padding, shape (n_fft//2 + 1, frames).

    Signals shorter than ``n_fft`` are zero-padded to a single frame.
    """
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise InvalidParams("n_fft must be a power of two")
    if hop < 1:
        raise InvalidParams("hop must be >= 1")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise InvalidParams("need a non-empty 1-d signal")
    frames = _frames(x, n_fft, hop) * hann(n_fft)
    return np.abs(np.fft.rfft(frames, axis=1)).T


def fft_frequencies(fs: float, n_fft: int = N_FFT) -> np.ndarray:
    return np.arange(n_fft // 2 + 1) * fs / n_fft


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def _mel_filterbank_cached(n_mels, n_fft, fs, fmin, fmax):
    if n_mels < 1 or n_fft < 2:
        raise InvalidParams("n_mels and n_fft must be positive")
    if not (0 <= fmin < fmax <= fs / 2):
        raise InvalidParams("require 0 <= fmin < fmax <= fs/2")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = fft_frequencies(fs, n_fft)
    left, centre, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - left) / (centre - left)
    falling = (right - freqs[None, :]) / (right - centre)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    if np.any(weights.max(axis=1) <= 0):
        raise InvalidParams("some mel filters cover no FFT bin; use fewer mels or a larger n_fft")
    weights.setflags(write=False)
    return weights


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, fs: float = 2000.0,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters (peak 1) centred on points equally spaced in mel.

    The returned matrix is shared and read-only.
    """
    fmax = fs / 2 if fmax is None else fmax
    return _mel_filterbank_cached(int(n_mels), int(n_fft), float(fs), float(fmin), float(fmax))


def power_spectrogram(samples, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    return stft(samples, n_fft, hop) ** 2


def mel_from_power(power: np.ndarray, fs: float, n_mels: int = N_MELS) -> np.ndarray:
    n_fft = 2 * (power.shape[0] - 1)
    return mel_filterbank(n_mels, n_fft, fs) @ power


def mel_spectrogram(samples, fs: float = 2000.0, n_mels: int = N_MELS,
                    n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    return mel_from_power(power_spectrogram(samples, n_fft, hop), fs, n_mels)


def mfcc_from_mel(mel: np.ndarray, n_mfcc: int = N_MFCC) -> np.ndarray:
    return dct(np.log(mel + LOG_EPS), type=2, norm="ortho", axis=0)[:n_mfcc]


def mfcc(samples, fs: float = 2000.0, n_mfcc: int = N_MFCC, **kw) -> np.ndarray:
    return mfcc_from_mel(mel_spectrogram(samples, fs, **kw), n_mfcc)


# ---------------------------------------------------------------------------
# chroma / tonnetz

@lru_cache(maxsize=16)
def _pitch_classes(fs, n_fft):
    freqs = fft_frequencies(fs, n_fft)
    classes = np.full(freqs.size, -1)
    ok = freqs >= CHROMA_FMIN
    classes[ok] = np.round(12.0 * np.log2(freqs[ok] / A4)).astype(int) % 12
    classes.setflags(write=False)
    return classes


def chroma_from_power(power: np.ndarray, fs: float) -> np.ndarray:
    n_fft = 2 * (power.shape[0] - 1)
    classes = _pitch_classes(float(fs), n_fft)
    out = np.zeros((12, power.shape[1]))
    ok = classes >= 0
    np.add.at(out, classes[ok], power[ok])
    peak = out.max(axis=0)
    nz = peak > 0
    out[:, nz] /= peak[nz]
    return out


def chroma(samples, fs: float = 2000.0, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """12 pitch classes (class 0 = A), each frame scaled so its max is 1."""
    return chroma_from_power(power_spectrogram(samples, n_fft, hop), fs)


def _tonnetz_matrix() -> np.ndarray:
    p = np.arange(12)
    r1, r2, r3 = 1.0, 1.0, 0.5
    return np.stack([
        r1 * np.sin(7 * np.pi * p / 6), r1 * np.cos(7 * np.pi * p / 6),
        r2 * np.sin(3 * np.pi * p / 2), r2 * np.cos(3 * np.pi * p / 2),
        r3 * np.sin(2 * np.pi * p / 3), r3 * np.cos(2 * np.pi * p / 3),
    ])


TONNETZ = _tonnetz_matrix()


def tonnetz_from_chroma(chroma_frames: np.ndarray) -> np.ndarray:
    c = np.asarray(chroma_frames, dtype=np.float64)
    total = np.abs(c).sum(axis=0)
    norm = np.zeros_like(c)
    nz = total > 0
    norm[:, nz] = c[:, nz] / total[nz]
    return TONNETZ @ norm


def tonnetz(samples, fs: float = 2000.0, **kw) -> np.ndarray:
    return tonnetz_from_chroma(chroma(samples, fs, **kw))


# ---------------------------------------------------------------------------
# spectral contrast

def contrast_bands(fs: float, n_bands: int = 7, anchor: float = 20.0) -> list[tuple[float, float]]:
    nyq = fs / 2
    bands = [(0.0, min(anchor, nyq))]
    for b in range(n_bands - 1):
        bands.append((min(anchor * 2 ** b, nyq), min(anchor * 2 ** (b + 1), nyq)))
    return bands


def contrast_from_magnitude(mag: np.ndarray, fs: float) -> np.ndarray:
    """Peak/valley log contrast per band; ``mag`` is (bins, frames)."""
    n_fft = 2 * (mag.shape[0] - 1)
    freqs = fft_frequencies(fs, n_fft)
    bands = contrast_bands(fs)
    out = np.zeros((len(bands), mag.shape[1]))
    for i, (lo, hi) in enumerate(bands):
        last = i == len(bands) - 1
        sel = (freqs >= lo) & ((freqs <= hi) if last else (freqs < hi))
        if not sel.any():
            continue
        band = np.sort(mag[sel], axis=0)
        q = max(1, int(CONTRAST_QUANTILE * band.shape[0]))
        valley = band[:q].mean(axis=0)
        peak = band[-q:].mean(axis=0)
        out[i] = np.log(peak + LOG_EPS) - np.log(valley + LOG_EPS)
    return out


def spectral_contrast(samples, fs: float = 2000.0, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    return contrast_from_magnitude(stft(samples, n_fft, hop), fs)


# ---------------------------------------------------------------------------
# per-recording vector

@dataclass
class FeatureMatrix:
    """All five families for one signal, frames along axis 1."""

    mfcc: np.ndarray
    chroma: np.ndarray
    mel: np.ndarray
    contrast: np.ndarray
    tonnetz: np.ndarray

    def mean_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).mean(axis=1) for name, _ in BLOCKS])


def feature_matrices(samples, fs: float = 2000.0) -> FeatureMatrix:
    mag = stft(samples)
    power = mag ** 2
    mel = mel_from_power(power, fs)
    chrom = chroma_from_power(power, fs)
    return FeatureMatrix(
        mfcc=mfcc_from_mel(mel),
        chroma=chrom,
        mel=mel,
        contrast=contrast_from_magnitude(mag, fs),
        tonnetz=tonnetz_from_chroma(chrom),
    )


def extract_feature_vector(record: AudioRecord) -> np.ndarray:
    vec = feature_matrices(record.samples, record.sample_rate).mean_vector()
    assert vec.size == N_FEATURES
    return vec


# ---------------------------------------------------------------------------
# feature CSV

def feature_header(extra: Sequence[str] = ()) -> list[str]:
    return ["id", "label", *[f"f{i:03d}" for i in range(N_FEATURES)], *extra]


def write_feature_csv(path, ids: Sequence[str], labels: Sequence[int], X: np.ndarray,
                      synthetic: Sequence[bool] | None = None) -> None:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES or len(ids) != len(X) or len(labels) != len(X):
        raise InvalidParams("feature matrix, ids and labels disagree in shape")
    extra = ("synthetic",) if synthetic is not None else ()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(feature_header(extra)) + "\n")
        for i, row in enumerate(X):
            cells = [str(ids[i]), str(int(labels[i]))] + [format(v, ".17g") for v in row]
            if synthetic is not None:
                cells.append("1" if synthetic[i] else "0")
            fh.write(",".join(cells) + "\n")


@dataclass
class FeatureTable:
    ids: list[str]
    labels: np.ndarray
    X: np.ndarray
    synthetic: np.ndarray | None = None


def read_feature_csv(path) -> FeatureTable:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        has_syn = header[-1] == "synthetic"
        if header[:2] != ["id", "label"] or len(header) != 2 + N_FEATURES + has_syn:
            raise InvalidParams(f"{path}: unexpected feature CSV header")
        ids, labels, rows, syn = [], [], [], []
        for line in fh:
            if not line.strip():
                continue
            cells = line.rstrip("\n").split(",")
            ids.append(cells[0])
            labels.append(int(cells[1]))
            rows.append([float(c) for c in cells[2:2 + N_FEATURES]])
            if has_syn:
                syn.append(cells[-1] == "1")
    return FeatureTable(ids, np.array(labels, dtype=np.int64),
                        np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES),
                        np.array(syn, dtype=bool) if has_syn else None)


def extract_all(records: Iterable[AudioRecord]) -> FeatureTable:
    ids, labels, rows = [], [], []
    for rec in records:
        ids.append(rec.id)
        labels.append(Label(rec.label).code)
        rows.append(extract_feature_vector(rec))
    return FeatureTable(ids, np.array(labels, dtype=np.int64),
                        np.array(rows).reshape(-1, N_FEATURES))
