"""Attention-weighted track signatures and per-genre mean encodings.

A track's signature is a convex combination of its token embeddings: the
weights are a softmax of the temperature-scaled per-token attention
scores. Raw scores average 1/T, so a temperature around T keeps the
softmax from collapsing to uniform; temperature 1 recovers the plain
softmax of the scores.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetIndex, TokenLoader
from .errors import EmptyGenre, GenreTooSmall
from .model import ForwardOutput, forward

DEFAULT_TEMPERATURE = 10.0


@dataclass
class TrackSignature:
    track_id: str
    genre: str
    vector: np.ndarray   # [embed_dim]
    weights: np.ndarray  # [token_count], positive, sums to 1
    start_times: np.ndarray
    end_times: np.ndarray


@dataclass
class GenreEncoding:
    genre: str
    vector: np.ndarray
    member_count: int


def signature_weights(token_scores, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    scaled = temperature * np.asarray(token_scores, dtype=np.float64)
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def track_signature(out: ForwardOutput, temperature: float = DEFAULT_TEMPERATURE,
                    track_id: str = "", genre: str = "",
                    start_times=None, end_times=None,
                    use_attended: bool = False) -> TrackSignature:
    """Weight the pre-attention CNN embeddings (or, behind the flag, the
    attended rows) by the softmax of the scaled token scores."""
    weights = signature_weights(out.token_scores, temperature)
    rows = (out.attended if use_attended else out.token_embeddings).data
    vector = weights @ rows
    n = weights.size
    return TrackSignature(
        track_id=track_id,
        genre=genre,
        vector=vector,
        weights=weights,
        start_times=np.zeros(n) if start_times is None else np.asarray(start_times, dtype=np.float64),
        end_times=np.zeros(n) if end_times is None else np.asarray(end_times, dtype=np.float64),
    )


def genre_encoding(signatures: list[TrackSignature], genre: str) -> GenreEncoding:
    members = [s for s in signatures if s.genre == genre]
    if not members:
        raise EmptyGenre(f"no signatures for genre {genre!r}")
    vectors = np.stack([s.vector for s in members])
    return GenreEncoding(genre=genre, vector=vectors.mean(axis=0), member_count=len(members))


def genre_encodings(signatures: list[TrackSignature]) -> dict[str, GenreEncoding]:
    genres = sorted({s.genre for s in signatures})
    return {g: genre_encoding(signatures, g) for g in genres}


def compute_signatures(index: DatasetIndex, params_for, loader: TokenLoader,
                       temperature: float = DEFAULT_TEMPERATURE,
                       use_attended: bool = False) -> list[TrackSignature]:
    """Signatures for every entry; params_for(entry_index) supplies the
    model used for that track (per-validation-fold or a single refit)."""
    sigs = []
    for i, entry in enumerate(index.entries):
        tokens = loader.tokens(entry)
        out = forward(tokens, params_for(i))
        sigs.append(track_signature(
            out, temperature,
            track_id=entry.track_id,
            genre=index.genre_of(entry),
            start_times=tokens.start_times,
            end_times=tokens.end_times,
            use_attended=use_attended,
        ))
    return sigs


def attention_report(index: DatasetIndex, params_for, loader: TokenLoader,
                     samples_per_genre: int = 5, seed: int = 0,
                     temperature: float = DEFAULT_TEMPERATURE) -> list[dict]:
    """Per sampled track, tokens ranked by signature weight (descending,
    ties by token index). Seeded sampling of samples_per_genre tracks per
    genre."""
    rng = np.random.default_rng(seed)
    by_genre: dict[str, list[int]] = {}
    for i, entry in enumerate(index.entries):
        by_genre.setdefault(index.genre_of(entry), []).append(i)

    report = []
    for genre in sorted(by_genre):
        members = by_genre[genre]
        if len(members) < samples_per_genre:
            raise GenreTooSmall(
                f"genre {genre!r} has {len(members)} tracks, need {samples_per_genre}"
            )
        chosen = rng.choice(len(members), size=samples_per_genre, replace=False)
        for j in np.sort(chosen):
            i = members[int(j)]
            entry = index.entries[i]
            tokens = loader.tokens(entry)
            out = forward(tokens, params_for(i))
            weights = signature_weights(out.token_scores, temperature)
            order = sorted(range(weights.size), key=lambda t: (-weights[t], t))
            report.append({
                "track_id": entry.track_id,
                "genre": genre,
                "tokens": [
                    {
                        "token": t,
                        "start": round(float(tokens.start_times[t]), 3),
                        "end": round(float(tokens.end_times[t]), 3),
                        "score": float(out.token_scores[t]),
                        "weight": float(weights[t]),
                    }
                    for t in order
                ],
            })
    return report


def write_attention_json(path, report: list[dict]):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)


def write_signatures_csv(path, signatures: list[TrackSignature]):
    if not signatures:
        raise ValueError("nothing to write")
    t = signatures[0].weights.size
    d = signatures[0].vector.size
    header = (["track_id", "genre"]
              + [f"w_{i}" for i in range(t)]
              + [f"v_{i}" for i in range(d)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in signatures:
            writer.writerow([s.track_id, s.genre]
                            + [repr(float(w)) for w in s.weights]
                            + [repr(float(v)) for v in s.vector])


def read_signatures_csv(path) -> list[TrackSignature]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    t = sum(1 for name in header if name.startswith("w_"))
    signatures = []
    for row in rows[1:]:
        weights = np.array([float(v) for v in row[2:2 + t]])
        vector = np.array([float(v) for v in row[2 + t:]])
        signatures.append(TrackSignature(
            track_id=row[0], genre=row[1], vector=vector, weights=weights,
            start_times=np.zeros(t), end_times=np.zeros(t),
        ))
    return signatures
