"""Embedding-space analytics: PCA, genre equations, neighbors, recommendations.

Everything here is exact and deterministic: the PCA eigensolver is a
cyclic Jacobi sweep on the sample covariance, the equation search
enumerates all canonical four-genre tuples, and both nearest-neighbor
routines are exhaustive scans with explicit tie-breaking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import CorpusTooSmall, ShapeMismatch, TooFewGenres, TooFewVectors
from .signatures import GenreEncoding, TrackSignature


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray          # [c, d], orthonormal rows
    explained_variance: np.ndarray  # [c], non-increasing
    explained_ratio: np.ndarray     # [c], sums to <= 1


def _jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below tol relative
    to the matrix norm. Returns (eigenvalues, eigenvectors-as-columns),
    unsorted.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1e-30)
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def fit_pca(vectors, components: int) -> PcaModel:
    """Center, eigen-decompose the (n-1)-divisor covariance, keep the top
    components. Sign convention: each component's largest-magnitude
    coordinate is positive."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewVectors("PCA needs at least two vectors")
    n, d = x.shape
    if not 1 <= components <= min(d, n - 1):
        raise TooFewVectors(
            f"cannot extract {components} components from {n} vectors in {d} dimensions"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    values, basis = _jacobi_eigh(cov)
    order = np.argsort(-values)
    values = np.clip(values[order], 0.0, None)
    basis = basis[:, order]

    comps = basis[:, :components].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = values.sum()
    explained = values[:components]
    ratio = explained / total if total > 0 else np.zeros_like(explained)
    return PcaModel(mean=mean, components=comps,
                    explained_variance=explained, explained_ratio=ratio)


def pca_project(model: PcaModel, vector) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    if v.shape[-1] != model.mean.shape[0]:
        raise ShapeMismatch(f"vector dim {v.shape[-1]} vs PCA dim {model.mean.shape[0]}")
    return (v - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# genre equations


@dataclass(frozen=True)
class GenreEquation:
    """a - b + c = d, canonicalized so a <= c and b <= d lexicographically."""

    a: str
    b: str
    c: str
    d: str
    residual: float


def equation_residual(enc, a, b, c, d, norm_scale: float) -> float:
    diff = enc[a] - enc[b] + enc[c] - enc[d]
    return float(np.linalg.norm(diff) / norm_scale)


def find_genre_equations(encodings: dict[str, GenreEncoding] | dict[str, np.ndarray],
                         max_results: int = 10,
                         threshold: float | None = None) -> list[GenreEquation]:
    """Enumerate every canonical 4-genre tuple (for 10 genres: 45 unordered
    {a,c} pairs x 28 unordered {b,d} pairs = 1260), rank by relative
    residual ascending."""
    enc = {
        name: (e.vector if isinstance(e, GenreEncoding) else np.asarray(e, dtype=np.float64))
        for name, e in encodings.items()
    }
    names = sorted(enc)
    norm_scale = float(np.mean([np.linalg.norm(enc[n]) for n in names]))
    if norm_scale <= 0:
        norm_scale = 1.0

    results = []
    for a, c in combinations(names, 2):
        rest = [n for n in names if n not in (a, c)]
        for b, d in combinations(rest, 2):
            residual = equation_residual(enc, a, b, c, d, norm_scale)
            results.append(GenreEquation(a=a, b=b, c=c, d=d, residual=residual))
    results.sort(key=lambda e: (e.residual, e.a, e.b, e.c, e.d))
    if threshold is not None:
        results = [e for e in results if e.residual <= threshold]
    return results[:max_results]


def write_equations_csv(path, equations: list[GenreEquation]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "b", "c", "d", "residual"])
        for e in equations:
            writer.writerow([e.a, e.b, e.c, e.d, repr(e.residual)])


# ---------------------------------------------------------------------------
# distances, neighbors, recommendations


def euclidean_distance(u, v) -> float:
    return float(np.linalg.norm(np.asarray(u) - np.asarray(v)))


def cosine_distance(u, v) -> float:
    """1 - cos similarity, with distance 1 against zero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 1.0
    return float(1.0 - (u @ v) / (nu * nv))


_METRICS = {"euclidean": euclidean_distance, "cosine": cosine_distance}


@dataclass
class NeighborList:
    k: int
    metric: str
    neighbors: dict[str, list[tuple[str, float]]]  # genre -> [(name, distance)]


def genre_neighbors(encodings: dict[str, GenreEncoding] | dict[str, np.ndarray],
                    k: int = 2, metric: str = "euclidean") -> NeighborList:
    enc = {
        name: (e.vector if isinstance(e, GenreEncoding) else np.asarray(e, dtype=np.float64))
        for name, e in encodings.items()
    }
    names = sorted(enc)
    if len(names) < k + 1:
        raise TooFewGenres(f"{len(names)} genres cannot have {k} neighbors each")
    dist = _METRICS[metric]
    table = {}
    for name in names:
        ranked = sorted(
            ((dist(enc[name], enc[other]), other) for other in names if other != name),
        )
        table[name] = [(other, d) for d, other in ranked[:k]]
    return NeighborList(k=k, metric=metric, neighbors=table)


def write_neighbors_csv(path, result: NeighborList):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["genre"]
        for i in range(result.k):
            header += [f"neighbor{i + 1}", f"dist{i + 1}"]
        writer.writerow(header)
        for genre in sorted(result.neighbors):
            row = [genre]
            for name, d in result.neighbors[genre]:
                row += [name, repr(d)]
            writer.writerow(row)


@dataclass
class RecommendationList:
    query_id: str
    metric: str
    items: list[tuple[str, str, float]]  # (track_id, genre, distance) ascending


def recommend_tracks(query: TrackSignature, corpus: list[TrackSignature],
                     k: int = 5, metric: str = "cosine") -> RecommendationList:
    """k most similar signatures, query excluded, ties broken by track id."""
    dist = _METRICS[metric]
    others = [s for s in corpus if s.track_id != query.track_id]
    if len(others) < k:
        raise CorpusTooSmall(f"{len(others)} candidates for k={k}")
    ranked = sorted(
        ((dist(query.vector, s.vector), s.track_id, s.genre) for s in others),
    )
    items = [(track_id, genre, d) for d, track_id, genre in ranked[:k]]
    return RecommendationList(query_id=query.track_id, metric=metric, items=items)


def write_recommendations_csv(path, result: RecommendationList):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "rank", "track_id", "genre", "distance"])
        for rank, (track_id, genre, d) in enumerate(result.items, start=1):
            writer.writerow([result.query_id, rank, track_id, genre, repr(d)])


def write_pca_csv(path, labels, coords: np.ndarray, explained_ratio):
    """`label,pc1,pc2[,pc3]` rows under a variance-ratio comment line."""
    coords = np.atleast_2d(coords)
    with open(path, "w", newline="") as fh:
        ratios = ",".join(repr(float(r)) for r in explained_ratio)
        fh.write(f"# explained_ratio,{ratios}\n")
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"pc{i + 1}" for i in range(coords.shape[1])])
        for label, row in zip(labels, coords):
            writer.writerow([label] + [repr(float(v)) for v in row])
