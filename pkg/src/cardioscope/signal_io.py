"""WAV/CSV ingestion, dataset manifests, stratified splits and the
length-normalising preprocessing applied to raw recordings."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    EmptyClass,
    EmptySignal,
    InputTooLong,
    InputTooShort,
    InvalidParams,
    MalformedHeader,
    MalformedRow,
    UnsupportedEncoding,
)
from .rng import SplitMix64

log = logging.getLogger(__name__)

PHYSIONET_RATE = 2000
SUBSETS = ("A", "B", "C", "D", "E", "F")
DEFAULT_RATIOS = (0.72, 0.08, 0.20)

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class Label(str, Enum):
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"
    UNLABELLED = "Unlabelled"

    @property
    def code(self) -> int:
        """Numeric code used in feature files: 0 Normal, 1 Abnormal, -1 unlabelled."""
        return {Label.NORMAL: 0, Label.ABNORMAL: 1, Label.UNLABELLED: -1}[self]

    @classmethod
    def from_code(cls, code: int) -> "Label":
        try:
            return {0: cls.NORMAL, 1: cls.ABNORMAL, -1: cls.UNLABELLED}[int(code)]
        except KeyError:
            raise ValueError(f"unknown label code {code!r}") from None


@dataclass
class AudioRecord:
    id: str
    sample_rate: int
    samples: np.ndarray
    subset: str | None = None
    label: Label = Label.UNLABELLED

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise EmptySignal(f"record {self.id!r} has no samples")
        if self.sample_rate <= 0:
            raise InvalidParams("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


# ---------------------------------------------------------------------------
# WAV

def parse_wav(data: bytes, record_id: str = "") -> AudioRecord:
    """Parse a mono 16-bit PCM RIFF/WAVE byte string.

    Samples are scaled by 1/32768 so full-scale negative maps to -1.0.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader("not a RIFF/WAVE container")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            # truncated final chunk: tolerate a short data chunk, reject others
            if chunk_id != b"data":
                raise MalformedHeader(f"truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            pcm = body
            break
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise MalformedHeader("missing 'fmt ' chunk")
    if pcm is None:
        raise MalformedHeader("missing 'data' chunk")
    if len(fmt) < 16:
        raise MalformedHeader("'fmt ' chunk too short")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if tag != _WAVE_FORMAT_PCM:
        raise UnsupportedEncoding(f"format tag {tag:#06x} is not PCM")
    if bits != 16:
        raise UnsupportedEncoding(f"{bits}-bit samples are not supported")
    if channels != 1:
        raise UnsupportedEncoding(f"{channels} channels; only mono is supported")
    if rate == 0:
        raise MalformedHeader("sample rate is zero")

    n = len(pcm) // 2
    if n == 0:
        raise EmptySignal("data chunk holds no samples")
    samples = np.frombuffer(pcm[:2 * n], dtype="<i2").astype(np.float64) / 32768.0
    return AudioRecord(id=record_id, sample_rate=int(rate), samples=samples)


def read_wav(path: str | Path, **kwargs) -> AudioRecord:
    path = Path(path)
    kwargs.setdefault("record_id", path.stem)
    return parse_wav(path.read_bytes(), **kwargs)


# ---------------------------------------------------------------------------
# reference labels

def load_reference(text: str) -> dict[str, Label]:
    """Parse a challenge reference CSV (``id,-1|1`` rows) into id -> label."""
    out: dict[str, Label] = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise MalformedRow(f"line {lineno}: expected 2 columns, got {len(row)}")
        rid, raw = row[0].strip(), row[1].strip()
        if not rid:
            raise MalformedRow(f"line {lineno}: empty id")
        if raw == "-1":
            label = Label.NORMAL
        elif raw == "1":
            label = Label.ABNORMAL
        else:
            raise MalformedRow(f"line {lineno}: label {raw!r} not in {{-1, 1}}")
        if rid in out:
            raise DuplicateId(f"line {lineno}: duplicate id {rid!r}")
        out[rid] = label
    return out


# ---------------------------------------------------------------------------
# manifest

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    subset: str | None
    label: Label


@dataclass
class DatasetManifest:
    records: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DuplicateId(f"duplicate record id {r.id!r}")
            seen.add(r.id)

    def __len__(self):
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def label_of(self) -> dict[str, Label]:
        return {r.id: r.label for r in self.records}

    def counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for r in self.records:
            per = out.setdefault(r.subset or "?", {})
            per[r.label.value] = per.get(r.label.value, 0) + 1
        return {k: dict(sorted(v.items())) for k, v in sorted(out.items())}

    def filter(self, subset: str | None = None, labelled_only: bool = False) -> "DatasetManifest":
        recs = [
            r for r in self.records
            if (subset is None or r.subset == subset)
            and (not labelled_only or r.label is not Label.UNLABELLED)
        ]
        return DatasetManifest(recs)

    def to_json(self) -> str:
        doc = {
            "records": [
                {"id": r.id, "path": r.path, "subset": r.subset, "label": r.label.value}
                for r in self.records
            ],
            "counts": self.counts(),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        return cls([
            ManifestEntry(r["id"], r["path"], r.get("subset"), Label(r["label"]))
            for r in doc["records"]
        ])


def _subset_from_dir(name: str) -> str | None:
    # PhysioNet layout: training-a ... training-f
    tail = name.rsplit("-", 1)[-1].upper()
    return tail if tail in SUBSETS else None


def build_manifest(root: str | Path, validate: bool = True) -> DatasetManifest:
    """Walk a PhysioNet-style directory tree and collect every parseable WAV.

    Each sub-directory may contain a ``REFERENCE.csv``; recordings without a
    reference row are marked Unlabelled. Unparseable or empty files are
    skipped with a warning.
    """
    root = Path(root)
    entries: list[ManifestEntry] = []
    for wav in sorted(root.rglob("*.wav")):
        refs = _references_for(wav.parent)
        rid = wav.stem
        if validate:
            try:
                read_wav(wav)
            except (MalformedHeader, UnsupportedEncoding, EmptySignal) as exc:
                log.warning("skipping %s: %s", wav, exc)
                continue
        subset = _subset_from_dir(wav.parent.name)
        if subset is None and rid[:1].upper() in SUBSETS:
            subset = rid[:1].upper()
        entries.append(ManifestEntry(rid, str(wav.relative_to(root)), subset,
                                     refs.get(rid, Label.UNLABELLED)))
    return DatasetManifest(entries)


_ref_cache: dict[Path, dict[str, Label]] = {}


def _references_for(directory: Path) -> dict[str, Label]:
    if directory not in _ref_cache:
        ref = directory / "REFERENCE.csv"
        _ref_cache[directory] = load_reference(ref.read_text()) if ref.exists() else {}
    return _ref_cache[directory]


# ---------------------------------------------------------------------------
# splits

@dataclass
class SplitSpec:
    seed: int
    train_ids: list[str]
    val_ids: list[str]
    test_ids: list[str]
    ratios: tuple[float, float, float] = DEFAULT_RATIOS

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train_ids), len(self.val_ids), len(self.test_ids)

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": self.train_ids,
            "val": self.val_ids,
            "test": self.test_ids,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        doc = json.loads(text)
        return cls(doc["seed"], doc["train"], doc["val"], doc["test"],
                   tuple(doc.get("ratios", DEFAULT_RATIOS)))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(manifest: DatasetManifest,
                  ratios: Sequence[float] = DEFAULT_RATIOS,
                  seed: int = 0) -> SplitSpec:
    """Stratified train/val/test split.

    Per class, ids are sorted, shuffled with SplitMix64(seed), and the first
    round(r_test * n_c) go to test, the next round(r_val * n_c) to val and the
    remainder to train. Per-class rounding keeps every split within one
    sample of the global class proportion.
    """
    if len(manifest) == 0:
        raise InvalidParams("manifest is empty")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidParams(f"ratios must be three non-negative values summing to 1, got {ratios}")
    _, r_val, r_test = ratios

    by_label: dict[Label, list[str]] = {}
    for r in manifest.records:
        by_label.setdefault(r.label, []).append(r.id)
    for required in (Label.NORMAL, Label.ABNORMAL):
        if not by_label.get(required):
            raise EmptyClass(f"class {required.value} has no members")

    rng = SplitMix64(seed)
    train, val, test = [], [], []
    for label in (Label.NORMAL, Label.ABNORMAL, Label.UNLABELLED):
        ids = sorted(by_label.get(label, []))
        if not ids:
            continue
        rng.shuffle(ids)
        n_test = _round_half_up(r_test * len(ids))
        n_val = min(_round_half_up(r_val * len(ids)), len(ids) - n_test)
        test += ids[:n_test]
        val += ids[n_test:n_test + n_val]
        train += ids[n_test + n_val:]
    return SplitSpec(seed, train, val, test, tuple(ratios))


# ---------------------------------------------------------------------------
# length normalisation

def pad_to(samples, target_len: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.size > target_len:
        raise InputTooLong(f"{x.size} samples exceed target {target_len}")
    out = np.zeros(target_len)
    out[:x.size] = x
    return out


def prune_to(samples, target_len: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.size < target_len:
        raise InputTooShort(f"{x.size} samples shorter than target {target_len}")
    return x[:target_len].copy()


def decimate(samples, factor: int) -> np.ndarray:
    """Block-mean downsampling; a trailing partial block is dropped."""
    if factor < 1:
        raise InvalidParams("factor must be >= 1")
    x = np.asarray(samples, dtype=np.float64)
    n = x.size // factor
    return x[:n * factor].reshape(n, factor).mean(axis=1)


def normalize_amplitude(samples) -> np.ndarray:
    """Clip into [-1, 1]; int16 scaling already bounds parsed audio."""
    return np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)


def load_records(manifest: DatasetManifest, root: str | Path,
                 ids: Iterable[str] | None = None) -> list[AudioRecord]:
    root = Path(root)
    wanted = None if ids is None else set(ids)
    out = []
    for entry in manifest.records:
        if wanted is not None and entry.id not in wanted:
            continue
        rec = read_wav(root / entry.path, record_id=entry.id)
        rec.subset, rec.label = entry.subset, entry.label
        out.append(rec)
    return out


def labels_for(ids: Iterable[str], labels: Mapping[str, Label]) -> np.ndarray:
    return np.array([labels[i].code for i in ids], dtype=np.int64)
