"""Audio feature pipeline: resampling, grayscale spectrograms, token crops.

A 30 s clip at 22050 Hz becomes a 217x332 log-magnitude image, which is
sliced into 10 overlapping 217x45 tokens (33-frame stride, 12-frame
overlap, right-side zero padding for the final crop).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClipTooShort, WrongBinCount

TOKEN_COUNT = 10
TOKEN_BINS = 217
TOKEN_WIDTH = 45
TOKEN_STRIDE = 33
# frames the token grid spans: last crop is [297, 342)
TOKEN_SPAN = (TOKEN_COUNT - 1) * TOKEN_STRIDE + TOKEN_WIDTH


@dataclass
class AudioClip:
    """Mono samples in [-1, 1] at a known rate."""

    samples: np.ndarray
    sample_rate: int
    source_path: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("clip needs a non-empty 1-D sample array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectrogramConfig:
    """STFT geometry. Defaults give 217 bins and 45 frames per 4 seconds."""

    fft_size: int = 432
    hop: int = 1994
    target_rate: int = 22050
    db_floor: float = -80.0

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size % 2:
            raise ValueError("fft_size must be a positive even number")
        if self.hop <= 0:
            raise ValueError("hop must be positive")
        if self.target_rate <= 0:
            raise ValueError("target_rate must be positive")
        if self.db_floor >= 0:
            raise ValueError("db_floor is relative to the track max, so negative")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def frame_duration(self) -> float:
        return self.hop / self.target_rate


@dataclass
class SpectrogramImage:
    """Per-track min-max normalized grayscale image, bins x frames."""

    values: np.ndarray
    frame_duration: float

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class TokenSequence:
    """The 10 overlapping crops of one track's spectrogram."""

    tokens: np.ndarray  # [TOKEN_COUNT, TOKEN_BINS, TOKEN_WIDTH]
    start_times: np.ndarray
    frame_duration: float
    token_stride_frames: int = TOKEN_STRIDE
    token_width_frames: int = TOKEN_WIDTH

    @property
    def end_times(self) -> np.ndarray:
        return self.start_times + self.token_width_frames * self.frame_duration


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling. Low fidelity, adequate for features."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples, clip.sample_rate, clip.source_path)
    n_in = clip.samples.size
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    positions = np.arange(n_out) * (clip.sample_rate / target_rate)
    resampled = np.interp(positions, np.arange(n_in), clip.samples)
    return AudioClip(resampled, target_rate, clip.source_path)


def frame_count(n_samples: int, cfg: SpectrogramConfig) -> int:
    return (n_samples - cfg.fft_size) // cfg.hop + 1


def compute_spectrogram(clip: AudioClip, cfg: SpectrogramConfig | None = None) -> SpectrogramImage:
    """Hann-windowed magnitude STFT in dB, clamped to an 80 dB range below the
    track maximum and min-max normalized to [0, 1].

    All-constant images (digital silence) normalize to all zeros.
    """
    cfg = cfg or SpectrogramConfig()
    if clip.sample_rate != cfg.target_rate:
        raise ValueError(
            f"clip at {clip.sample_rate} Hz; resample to {cfg.target_rate} Hz first"
        )
    n = clip.samples.size
    if n < cfg.fft_size:
        raise ClipTooShort(f"{n} samples < fft_size {cfg.fft_size}")

    frames = frame_count(n, cfg)
    windows = np.lib.stride_tricks.sliding_window_view(clip.samples, cfg.fft_size)
    segments = windows[::cfg.hop][:frames]
    magnitude = np.abs(np.fft.rfft(segments * np.hanning(cfg.fft_size), axis=1))
    db = 20.0 * np.log10(magnitude + 1e-10)
    db = np.maximum(db, db.max() + cfg.db_floor)

    lo, hi = db.min(), db.max()
    if hi - lo <= 0.0:
        values = np.zeros_like(db)
    else:
        values = (db - lo) / (hi - lo)
    return SpectrogramImage(values=values.T, frame_duration=cfg.frame_duration)


def tokenize(spec: SpectrogramImage) -> TokenSequence:
    """Cut the time axis into TOKEN_COUNT crops of TOKEN_WIDTH frames at
    TOKEN_STRIDE spacing, zero-padding the right edge as needed."""
    if spec.bins != TOKEN_BINS:
        raise WrongBinCount(f"expected {TOKEN_BINS} bins, got {spec.bins}")
    values = spec.values
    if spec.frames < TOKEN_SPAN:
        pad = TOKEN_SPAN - spec.frames
        values = np.pad(values, ((0, 0), (0, pad)))
    tokens = np.stack(
        [values[:, i * TOKEN_STRIDE:i * TOKEN_STRIDE + TOKEN_WIDTH]
         for i in range(TOKEN_COUNT)]
    )
    starts = np.arange(TOKEN_COUNT) * TOKEN_STRIDE * spec.frame_duration
    return TokenSequence(tokens=tokens, start_times=starts,
                         frame_duration=spec.frame_duration)
