"""GTZAN-layout dataset discovery and the spectrogram cache.

A dataset is a directory tree `<root>/<genre>/<track>.wav`; genres come
from the subdirectory names, sorted lexicographically to fix label
indices. `prepare_cache` mirrors that tree into binary spectrogram files
so training never touches audio again.

Cache file layout (little-endian): magic "SPEC", version u32 (=1),
bins u32, frames u32, then bins*frames float32 values column-major by
frame.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SpectrogramConfig, SpectrogramImage, compute_spectrogram, resample, tokenize
from .errors import BadMagic, MissingCache, TruncatedFile, UnsupportedVersion
from .wav import load_wav

CACHE_MAGIC = b"SPEC"
CACHE_VERSION = 1
CACHE_SUFFIX = ".spec"


@dataclass(frozen=True)
class DatasetEntry:
    track_id: str
    label: int
    path: Path


@dataclass
class DatasetIndex:
    entries: list[DatasetEntry]
    genre_names: list[str]

    def __post_init__(self):
        if self.genre_names != sorted(self.genre_names):
            raise ValueError("genre names must be sorted lexicographically")
        for e in self.entries:
            if not 0 <= e.label < len(self.genre_names):
                raise ValueError(f"label {e.label} out of range for {e.track_id}")

    def __len__(self):
        return len(self.entries)

    def genre_of(self, entry: DatasetEntry) -> str:
        return self.genre_names[entry.label]

    def by_track_id(self, track_id: str) -> DatasetEntry:
        for e in self.entries:
            if e.track_id == track_id:
                return e
        raise KeyError(track_id)


def _scan(root, suffix) -> DatasetIndex:
    root = Path(root)
    genres = sorted(
        d.name for d in root.iterdir()
        if d.is_dir() and any(f.suffix == suffix for f in d.iterdir())
    )
    entries = []
    for label, genre in enumerate(genres):
        for f in sorted((root / genre).glob(f"*{suffix}")):
            entries.append(DatasetEntry(track_id=f.stem, label=label, path=f))
    return DatasetIndex(entries=entries, genre_names=genres)


def scan_audio_tree(root) -> DatasetIndex:
    return _scan(root, ".wav")


def scan_cache_tree(root) -> DatasetIndex:
    return _scan(root, CACHE_SUFFIX)


def write_spec_cache(path, image: SpectrogramImage):
    values = np.asarray(image.values, dtype="<f4")
    bins, frames = values.shape
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<III", CACHE_VERSION, bins, frames))
        fh.write(values.T.tobytes())  # column-major by frame


def read_spec_cache(path, frame_duration: float | None = None) -> SpectrogramImage:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise MissingCache(f"{path}: no cached spectrogram (run `prepare`)") from None
    if raw[:4] != CACHE_MAGIC:
        raise BadMagic(f"{path}: not a spectrogram cache file")
    if len(raw) < 16:
        raise TruncatedFile(f"{path}: header incomplete")
    version, bins, frames = struct.unpack_from("<III", raw, 4)
    if version != CACHE_VERSION:
        raise UnsupportedVersion(f"{path}: cache version {version}")
    expected = 16 + bins * frames * 4
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: wants {expected} bytes, has {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", count=bins * frames, offset=16)
    values = values.reshape(frames, bins).T.astype(np.float64)
    if frame_duration is None:
        frame_duration = SpectrogramConfig().frame_duration
    return SpectrogramImage(values=values, frame_duration=frame_duration)


def cache_path_for(cache_root, genre: str, track_id: str) -> Path:
    return Path(cache_root) / genre / f"{track_id}{CACHE_SUFFIX}"


def prepare_track(wav_path, cache_path, cfg: SpectrogramConfig):
    clip = load_wav(wav_path)
    clip = resample(clip, cfg.target_rate)
    image = compute_spectrogram(clip, cfg)
    Path(cache_path).parent.mkdir(parents=True, exist_ok=True)
    write_spec_cache(cache_path, image)


def prepare_cache(data_root, cache_root, cfg: SpectrogramConfig | None = None,
                  jobs: int = 1) -> DatasetIndex:
    """Compute and store spectrograms for every track under data_root."""
    cfg = cfg or SpectrogramConfig()
    audio = scan_audio_tree(data_root)
    tasks = [
        (e.path, cache_path_for(cache_root, audio.genre_of(e), e.track_id))
        for e in audio.entries
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda t: prepare_track(t[0], t[1], cfg), tasks))
    else:
        for wav_path, cache_path in tasks:
            prepare_track(wav_path, cache_path, cfg)
    return scan_cache_tree(cache_root)


class TokenLoader:
    """Loads cached spectrograms, memoizes them, and crops token sequences.

    Images are held as float32 to keep a full GTZAN run in memory; tokens
    are materialized in float64 per request.
    """

    def __init__(self, cfg: SpectrogramConfig | None = None):
        self.cfg = cfg or SpectrogramConfig()
        self._images: dict[Path, np.ndarray] = {}

    def image(self, entry: DatasetEntry) -> SpectrogramImage:
        cached = self._images.get(entry.path)
        if cached is None:
            cached = read_spec_cache(entry.path, self.cfg.frame_duration).values.astype(np.float32)
            self._images[entry.path] = cached
        return SpectrogramImage(values=cached.astype(np.float64),
                                frame_duration=self.cfg.frame_duration)

    def tokens(self, entry: DatasetEntry):
        return tokenize(self.image(entry))
