import wave
from pathlib import Path

import numpy as np
import pytest


def write_wav(path, samples, rate=2000, sampwidth=2, channels=1):
    """Reference writer built on the stdlib ``wave`` module."""
    x = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    if channels > 1:
        pcm = np.repeat(pcm[:, None], channels, axis=1).reshape(-1)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(sampwidth)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())
    return Path(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def physionet_tree(tmp_path):
    """Two subsets, 14 labelled recordings each (4 abnormal) plus one file
    without a reference row."""
    gen = np.random.default_rng(7)
    t = np.arange(6000) / 2000.0
    for sub in ("a", "e"):
        d = tmp_path / f"training-{sub}"
        d.mkdir()
        rows = []
        for i in range(14):
            rid = f"{sub}{i:04d}"
            abnormal = i < 4
            f = 60.0 if abnormal else 35.0
            x = 0.3 * np.sin(2 * np.pi * f * t) + 0.05 * gen.standard_normal(t.size)
            write_wav(d / f"{rid}.wav", x)
            rows.append(f"{rid},{1 if abnormal else -1}")
        (d / "REFERENCE.csv").write_text("\n".join(rows) + "\n")
        write_wav(d / f"{sub}9999.wav", 0.1 * gen.standard_normal(4000))
    return tmp_path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
