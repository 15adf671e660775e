"""Synthetic GTZAN-layout dataset generator.

Each class is a pair of carrier tones (aligned to spectrogram bins so the
FFT oracle can find them) amplitude-modulated at a class-specific rate,
plus noise. Tracks within a class differ by random phase and up to +-1%
carrier detune. Deterministic per (seed, class, track), so identical
seeds give bitwise-identical WAV trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import SpectrogramConfig
from .wav import write_wav


@dataclass(frozen=True)
class ClassSpec:
    name: str
    carrier_low: float   # Hz
    carrier_high: float  # Hz
    am_rate: float       # Hz
    noise_level: float


def default_classes(cfg: SpectrogramConfig | None = None) -> list[ClassSpec]:
    """Ten classes with pairwise-distinct carrier pairs at exact bin centers."""
    cfg = cfg or SpectrogramConfig()
    bin_hz = cfg.target_rate / cfg.fft_size
    classes = []
    for g in range(10):
        classes.append(ClassSpec(
            name=f"class{g:02d}",
            carrier_low=(12 + 8 * g) * bin_hz,
            carrier_high=(40 + 11 * g) * bin_hz,
            am_rate=0.5 + 0.35 * g,
            noise_level=0.02 + 0.002 * g,
        ))
    return classes


@dataclass(frozen=True)
class SyntheticSpec:
    classes: tuple[ClassSpec, ...] = field(default_factory=lambda: tuple(default_classes()))
    tracks_per_class: int = 20
    duration: float = 30.0
    sample_rate: int = 22050
    seed: int = 0

    def __post_init__(self):
        pairs = {(c.carrier_low, c.carrier_high) for c in self.classes}
        if len(pairs) != len(self.classes):
            raise ValueError("class carrier pairs must be pairwise distinct")


def synth_track(spec: SyntheticSpec, class_index: int, track_index: int) -> np.ndarray:
    cls = spec.classes[class_index]
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(class_index, track_index))
    )
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    detune = rng.uniform(-0.01, 0.01, size=2)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    tone = (np.sin(2 * np.pi * cls.carrier_low * (1 + detune[0]) * t + phases[0])
            + np.sin(2 * np.pi * cls.carrier_high * (1 + detune[1]) * t + phases[1]))
    envelope = 0.5 * (1.0 + np.sin(2 * np.pi * cls.am_rate * t + phases[2]))
    samples = envelope * tone + cls.noise_level * rng.standard_normal(n)
    return 0.9 * samples / np.max(np.abs(samples))


def synth_dataset(spec: SyntheticSpec, out_dir) -> list[Path]:
    """Write the WAV tree `<out>/<class>/<class>.<index>.wav`."""
    out_dir = Path(out_dir)
    written = []
    for class_index, cls in enumerate(spec.classes):
        folder = out_dir / cls.name
        folder.mkdir(parents=True, exist_ok=True)
        for track_index in range(spec.tracks_per_class):
            samples = synth_track(spec, class_index, track_index)
            path = folder / f"{cls.name}.{track_index:05d}.wav"
            write_wav(path, samples, spec.sample_rate, encoding="pcm16")
            written.append(path)
    return written
