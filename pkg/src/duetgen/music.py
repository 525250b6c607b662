"""35-channel music feature maps and a synthetic metronome generator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_MUSIC = 35
ENVELOPE = 0
MFCC = slice(1, 21)
CHROMA = slice(21, 33)
PEAKS = 33
BEATS = 34


@dataclass(eq=False)
class MusicFeatures:
    """T x 35 feature map: envelope, 20 MFCC, 12 chroma, one-hot peaks, one-hot beats."""

    data: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[1] != N_MUSIC:
            raise ValueError(f"music features need {N_MUSIC} columns, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("music features contain non-finite values")
        for name, col in (("peak", PEAKS), ("beat", BEATS)):
            if not np.all(np.isin(self.data[:, col], (0.0, 1.0))):
                raise ValueError(f"{name} channel must be binary")

    @property
    def beat_frames(self) -> np.ndarray:
        return np.flatnonzero(self.data[:, BEATS] > 0.5)

    @property
    def beat_times(self) -> np.ndarray:
        return self.beat_frames / self.fps


def metronome(T: int, bpm: float, fps: float = 30.0, offset: int = 0, seed: int = 0) -> MusicFeatures:
    """Click-track features: beats every 60*fps/bpm frames starting at ``offset``.

    Envelope decays after each click; MFCC and chroma are smooth seeded
    curves so the map is not degenerate. Beat times are rounded to frames.
    """
    rng = np.random.default_rng(seed)
    period = 60.0 * fps / bpm
    beats = np.zeros(T)
    k = 0
    while True:
        f = int(round(offset + k * period))
        if f >= T:
            break
        beats[f] = 1.0
        k += 1
    t = np.arange(T)
    since = np.full(T, 1e9)
    last = -1e9
    for i in range(T):
        if beats[i]:
            last = i
        since[i] = i - last
    data = np.zeros((T, N_MUSIC), dtype=np.float32)
    data[:, ENVELOPE] = np.exp(-since / (0.25 * period))
    freqs = rng.uniform(0.02, 0.2, size=20)
    phases = rng.uniform(0, 2 * np.pi, size=20)
    data[:, MFCC] = np.sin(freqs[None] * t[:, None] + phases[None])
    beat_idx = np.cumsum(beats) - 1
    data[:, CHROMA] = 0.1
    data[np.arange(T), CHROMA.start + (np.maximum(beat_idx, 0).astype(int) % 12)] = 1.0
    data[:, PEAKS] = beats
    data[:, BEATS] = beats
    return MusicFeatures(data, fps)
