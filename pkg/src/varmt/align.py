"""Linear alignment of a variety embedding space into the standard space.

Supervision comes for free: tokens with identical surface forms in both
vocabularies are paired with themselves. The map is the orthogonal
Procrustes solution, so cosine geometry inside the mapped space is
untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .embed import EmbeddingModel

ORTHOGONALITY_TOL = 1e-5


@dataclass
class SeedDictionary:
    pairs: list[tuple[str, str]]

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("duplicate pairs in seed dictionary")

    @property
    def count(self) -> int:
        return len(self.pairs)


@dataclass
class AlignmentMap:
    """Orthogonal d x d matrix mapping variety vectors into the standard
    space (applied on the right: v -> v @ matrix)."""

    matrix: NDArray[np.float64]

    def __post_init__(self):
        w = self.matrix
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("alignment matrix must be square")
        gram_residual = np.linalg.norm(w.T @ w - np.eye(w.shape[0]))
        if gram_residual >= ORTHOGONALITY_TOL:
            raise ValueError(f"matrix is not orthogonal (residual {gram_residual:.2e})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_seed_dictionary(std_model: EmbeddingModel, tgt_model: EmbeddingModel) -> SeedDictionary:
    """Pair every token present in both vocabularies with itself."""
    if not (std_model.finalized and tgt_model.finalized):
        raise ValueError("both models must be finalized")
    shared = sorted(set(std_model.vocab) & set(tgt_model.vocab))
    if not shared:
        raise ValueError("vocabularies share no tokens; alignment impossible")
    if len(shared) < std_model.dim:
        warnings.warn(
            f"only {len(shared)} seed pairs for dimension {std_model.dim}; "
            "the alignment may be underdetermined", stacklevel=2)
    return SeedDictionary([(t, t) for t in shared])


def seed_matrices(dictionary: SeedDictionary, std_model: EmbeddingModel,
                  tgt_model: EmbeddingModel) -> tuple[NDArray, NDArray]:
    """Stacked (tgt, std) seed vectors, rows aligned with the dictionary."""
    x = np.stack([tgt_model.vector(t) for _, t in dictionary.pairs]).astype(np.float64)
    y = np.stack([std_model.vector(s) for s, _ in dictionary.pairs]).astype(np.float64)
    return x, y


def procrustes(x, y) -> AlignmentMap:
    """Orthogonal matrix w minimizing ||x @ w - y||_F.

    Closed form: w = u @ vt where u, s, vt is the SVD of x.T @ y.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape != y.shape:
        raise ValueError("seed matrices must share an (n, d) shape")
    if x.shape[0] < 1:
        raise ValueError("need at least one seed pair")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in seed matrices")
    u, _, vt = np.linalg.svd(x.T @ y)
    return AlignmentMap(u @ vt)


def apply_alignment(alignment: AlignmentMap, model: EmbeddingModel) -> EmbeddingModel:
    """Rotate every exported vector; norms are preserved by orthogonality."""
    if not model.finalized:
        raise ValueError("model must be finalized")
    if alignment.dim != model.dim:
        raise ValueError("alignment dimension does not match the model")
    mapped = (model.exported.astype(np.float64) @ alignment.matrix).astype(np.float32)
    return replace(model, exported=mapped)


def save_alignment(alignment: AlignmentMap, path) -> None:
    """Text format: first line is d, then d rows of d floats."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{alignment.dim}\n")
        for row in alignment.matrix:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_alignment(path) -> AlignmentMap:
    with open(path, encoding="utf-8") as f:
        d = int(f.readline())
        rows = [np.array(f.readline().split(), dtype=np.float64) for _ in range(d)]
    return AlignmentMap(np.stack(rows))
