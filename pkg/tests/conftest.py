import numpy as np
import pytest

from genresig.dataset import DatasetEntry, DatasetIndex
from genresig.model import ModelConfig


TINY_CFG = ModelConfig(
    token_count=3,
    token_bins=16,
    token_frames=12,
    conv_channels=(2, 3, 4),
    embed_dim=8,
    heads=2,
    class_count=4,
)


@pytest.fixture
def tiny_cfg():
    return TINY_CFG


class ArrayLoader:
    """Stand-in for TokenLoader: serves preloaded token arrays by track id."""

    def __init__(self, tokens_by_id):
        self.tokens_by_id = tokens_by_id

    def tokens(self, entry):
        return self.tokens_by_id[entry.track_id]


def make_toy_dataset(cfg: ModelConfig, tracks_per_class: int, seed: int = 0,
                     noise: float = 0.05):
    """A linearly separable toy corpus: class c lights up rows 3c..3c+2 of
    every token. Returns (DatasetIndex, ArrayLoader)."""
    rng = np.random.default_rng(seed)
    genre_names = [f"g{c}" for c in range(cfg.class_count)]
    entries, tokens_by_id = [], {}
    for c in range(cfg.class_count):
        for t in range(tracks_per_class):
            track_id = f"g{c}.{t:03d}"
            tokens = noise * rng.random((cfg.token_count, cfg.token_bins, cfg.token_frames))
            tokens[:, 3 * c:3 * c + 3, :] += 0.9
            entries.append(DatasetEntry(track_id=track_id, label=c, path=f"{track_id}.spec"))
            tokens_by_id[track_id] = np.clip(tokens, 0.0, 1.0)
    index = DatasetIndex(entries=entries, genre_names=genre_names)
    return index, ArrayLoader(tokens_by_id)
