"""Subword embeddings: skip-gram with negative sampling over BPE tokens.

A token's representation is the average of its dedicated vector and the
bucket vectors of its character n-grams, where buckets are addressed by a
32-bit FNV-1a hash of the n-gram modulo the bucket count. Because the hash
space is shared across models, a model for a new language variety can be
seeded from a parent model: the whole bucket table transfers by copy, and
tokens present in the parent keep their vectors.

Training is single-threaded and fully deterministic for a fixed seed: all
randomness flows through one PCG64 generator in a fixed draw order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .textproc import DEFAULT_MARKER, MonoCorpus, extract_ngrams, token_vocabulary

MODEL_MAGIC = b"VMEB1"

_FNV_OFFSET = 0x811C9DC5
_FNV_PRIME = 0x01000193


def fnv1a(data: bytes) -> int:
    """32-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFF
    return h


def ngram_bucket_ids(token: str, min_n: int, max_n: int, bucket_count: int,
                     marker: str = DEFAULT_MARKER) -> NDArray[np.int64]:
    """Bucket indices of a token's character n-grams, occurrences kept."""
    grams = extract_ngrams(token, min_n, max_n, marker)
    return np.array([fnv1a(g.encode("utf-8")) % bucket_count for g in grams],
                    dtype=np.int64)


@dataclass
class SkipgramConfig:
    dim: int = 300
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.05
    bucket_count: int = 2_000_000
    min_count: int = 1
    min_n: int = 3
    max_n: int = 6
    seed: int = 1

    def __post_init__(self):
        if min(self.dim, self.window, self.negatives, self.bucket_count,
               self.min_count) <= 0:
            raise ValueError("counts must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 1 <= self.min_n <= self.max_n:
            raise ValueError("need 1 <= min_n <= max_n")


@dataclass
class EmbeddingModel:
    """Token vectors plus shared n-gram bucket vectors.

    ``exported`` is set by finalize(): one unit-norm composed vector per
    vocabulary token, the only representation downstream consumers see.
    """

    dim: int
    tokens: list[str]
    vocab: dict[str, int]
    token_vectors: NDArray[np.float32]
    context_vectors: NDArray[np.float32]
    ngram_buckets: NDArray[np.float32]
    min_n: int
    max_n: int
    bucket_count: int
    marker: str = DEFAULT_MARKER
    exported: NDArray[np.float32] | None = None
    zero_norm_tokens: list[str] = field(default_factory=list)

    def __post_init__(self):
        expected = (len(self.tokens), self.dim)
        for name in ("token_vectors", "context_vectors", "exported"):
            matrix = getattr(self, name)
            if matrix is not None and matrix.shape != expected:
                raise ValueError(f"{name} has shape {matrix.shape}, expected {expected}")
        if self.ngram_buckets.shape != (self.bucket_count, self.dim):
            raise ValueError("ngram_buckets shape does not match bucket_count/dim")

    @property
    def finalized(self) -> bool:
        return self.exported is not None

    def bucket_ids(self, token: str) -> NDArray[np.int64]:
        return ngram_bucket_ids(token, self.min_n, self.max_n,
                                self.bucket_count, self.marker)

    def compose(self, token: str) -> NDArray[np.float32]:
        """Mean of the token vector and its n-gram bucket vectors."""
        idx = self.vocab[token]
        ids = self.bucket_ids(token)
        total = self.token_vectors[idx].copy()
        if len(ids):
            total += self.ngram_buckets[ids].sum(axis=0)
        return total / np.float32(1 + len(ids))

    def vector(self, token: str) -> NDArray[np.float32]:
        if not self.finalized:
            raise ValueError("model is not finalized")
        return self.exported[self.vocab[token]]


def _default_tables(rng: np.random.Generator, vocab_size: int, cfg: SkipgramConfig):
    # Draw order is fixed (buckets first, then token rows) so results are
    # reproducible regardless of later selective overwrites.
    bound = 0.5 / cfg.dim
    buckets = rng.uniform(-bound, bound, (cfg.bucket_count, cfg.dim)).astype(np.float32)
    token_vecs = rng.uniform(-bound, bound, (vocab_size, cfg.dim)).astype(np.float32)
    context = np.zeros((vocab_size, cfg.dim), dtype=np.float32)
    return buckets, token_vecs, context


def _sigmoid(x: NDArray[np.float32]) -> NDArray[np.float32]:
    return 1.0 / (1.0 + np.exp(-x))


def train_embeddings(
    corpus: MonoCorpus,
    config: SkipgramConfig,
    init: EmbeddingModel | None = None,
    marker: str = DEFAULT_MARKER,
) -> EmbeddingModel:
    """Train skip-gram-with-negative-sampling subword embeddings.

    The corpus must already be BPE-tokenized (tokens space-separated).
    When ``init`` is given, its bucket table is copied wholesale and tokens
    shared with its vocabulary start from its vectors; everything else gets
    the default initialization, after which training continues on the new
    corpus.
    """
    if init is not None:
        if init.dim != config.dim:
            raise ValueError("init dimensionality does not match config")
        if (init.min_n, init.max_n, init.bucket_count) != (
                config.min_n, config.max_n, config.bucket_count):
            raise ValueError("init n-gram/bucket settings do not match config")
        marker = init.marker

    tokens = token_vocabulary(corpus, config.min_count)
    if not tokens:
        raise ValueError("corpus is empty (or empty after min_count filtering)")
    vocab = {t: i for i, t in enumerate(tokens)}

    rng = np.random.default_rng(config.seed)
    buckets, token_vecs, context = _default_tables(rng, len(tokens), config)
    if init is not None:
        buckets[:] = init.ngram_buckets
        for t, i in vocab.items():
            j = init.vocab.get(t)
            if j is not None:
                token_vecs[i] = init.token_vectors[j]
                context[i] = init.context_vectors[j]

    model = EmbeddingModel(
        dim=config.dim, tokens=tokens, vocab=vocab,
        token_vectors=token_vecs, context_vectors=context,
        ngram_buckets=buckets, min_n=config.min_n, max_n=config.max_n,
        bucket_count=config.bucket_count, marker=marker,
    )
    if config.epochs == 0:
        return model

    counts = np.zeros(len(tokens), dtype=np.float64)
    sentences_ids: list[NDArray[np.int64]] = []
    for sentence in corpus.sentences:
        ids = [vocab[t] for t in sentence.split() if t in vocab]
        sentences_ids.append(np.array(ids, dtype=np.int64))
        for i in ids:
            counts[i] += 1

    # Noise distribution: unigram frequency to the 3/4.
    noise = counts ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    ngram_ids = [model.bucket_ids(t) for t in tokens]

    total_centers = sum(len(s) for s in sentences_ids) * config.epochs
    processed = 0
    lr0 = config.learning_rate
    k_neg = config.negatives

    for _ in range(config.epochs):
        for ids in sentences_ids:
            n = len(ids)
            for pos in range(n):
                lr = lr0 * max(1e-4, 1.0 - processed / total_centers)
                processed += 1
                center = ids[pos]
                b = int(rng.integers(1, config.window + 1))
                lo, hi = max(0, pos - b), min(n, pos + b + 1)
                ctx = [ids[j] for j in range(lo, hi) if j != pos]
                if not ctx:
                    continue
                n_ids = ngram_ids[center]
                share = np.float32(1.0 / (1 + len(n_ids)))
                h = model.token_vectors[center].copy()
                if len(n_ids):
                    h += model.ngram_buckets[n_ids].sum(axis=0)
                h *= share
                grad_h = np.zeros(config.dim, dtype=np.float32)
                for target in ctx:
                    draws = rng.random(k_neg)
                    negs = np.minimum(np.searchsorted(noise_cdf, draws),
                                      len(noise_cdf) - 1)
                    rows = np.concatenate(([target], negs[negs != target]))
                    c_rows = model.context_vectors[rows]
                    scores = _sigmoid(c_rows @ h)
                    scores[0] -= 1.0  # positive label
                    g = (lr * scores).astype(np.float32)
                    grad_h += g @ c_rows
                    np.add.at(model.context_vectors, rows, -np.outer(g, h))
                grad_h *= share
                model.token_vectors[center] -= grad_h
                if len(n_ids):
                    np.add.at(model.ngram_buckets, n_ids, -grad_h)
    return model


def transfer_init(parent: EmbeddingModel, tgt_vocab: list[str], seed: int = 1) -> EmbeddingModel:
    """Seed a variety model from a parent model over a new vocabulary.

    The bucket table is copied (the hash space is identical), token vectors
    of shared tokens are copied, and the rest are freshly initialized. The
    result is unfinalized; continue training or finalize directly.
    """
    if not parent.finalized:
        raise ValueError("parent model must be finalized")
    seen = set()
    tokens = [t for t in tgt_vocab if not (t in seen or seen.add(t))]
    if not tokens:
        raise ValueError("target vocabulary is empty")
    vocab = {t: i for i, t in enumerate(tokens)}

    rng = np.random.default_rng(seed)
    bound = 0.5 / parent.dim
    token_vecs = rng.uniform(-bound, bound, (len(tokens), parent.dim)).astype(np.float32)
    context = np.zeros((len(tokens), parent.dim), dtype=np.float32)
    for t, i in vocab.items():
        j = parent.vocab.get(t)
        if j is not None:
            token_vecs[i] = parent.token_vectors[j]
            context[i] = parent.context_vectors[j]
    return EmbeddingModel(
        dim=parent.dim, tokens=tokens, vocab=vocab,
        token_vectors=token_vecs, context_vectors=context,
        ngram_buckets=parent.ngram_buckets.copy(),
        min_n=parent.min_n, max_n=parent.max_n,
        bucket_count=parent.bucket_count, marker=parent.marker,
    )


def finalize(model: EmbeddingModel) -> EmbeddingModel:
    """Export unit-norm composed vectors; the raw tables are retained.

    Tokens whose composed vector is exactly zero get the first basis
    vector and are listed in ``zero_norm_tokens``.
    """
    composed = np.stack([model.compose(t) for t in model.tokens])
    norms = np.linalg.norm(composed.astype(np.float64), axis=1)
    flagged = [model.tokens[i] for i in np.nonzero(norms == 0.0)[0]]
    exported = np.empty_like(composed)
    for i in range(len(model.tokens)):
        if norms[i] == 0.0:
            exported[i] = 0.0
            exported[i, 0] = 1.0
        else:
            exported[i] = (composed[i].astype(np.float64) / norms[i]).astype(np.float32)
    return replace(model, exported=exported, zero_norm_tokens=flagged)


def nearest_neighbors(model: EmbeddingModel, query, k: int) -> list[tuple[str, float]]:
    """Top-k tokens by cosine similarity; exhaustive exact search.

    Ties are broken by vocabulary index.
    """
    if not model.finalized:
        raise ValueError("model is not finalized")
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (model.dim,) or not np.all(np.isfinite(q)):
        raise ValueError("query must be a finite vector of the model dimension")
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ValueError("query vector is zero")
    sims = model.exported.astype(np.float64) @ (q / norm)
    order = np.argsort(-sims, kind="stable")[:k]
    return [(model.tokens[i], float(sims[i])) for i in order]


def save_text_vectors(model: EmbeddingModel, path) -> None:
    """word2vec-style text format over the exported vectors."""
    if not model.finalized:
        raise ValueError("model is not finalized")
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(model.tokens)} {model.dim}\n")
        for token, row in zip(model.tokens, model.exported):
            f.write(token + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_text_vectors(path) -> tuple[list[str], NDArray[np.float32]]:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        n, dim = int(header[0]), int(header[1])
        tokens, rows = [], np.empty((n, dim), dtype=np.float32)
        for i in range(n):
            parts = f.readline().rstrip("\n").split(" ")
            tokens.append(parts[0])
            rows[i] = np.array(parts[1:], dtype=np.float64).astype(np.float32)
    return tokens, rows


def _write_matrix(f, m: NDArray[np.float32]) -> None:
    np.ascontiguousarray(m, dtype=np.float32).tofile(f)


def _read_matrix(f, shape) -> NDArray[np.float32]:
    count = int(np.prod(shape))
    return np.fromfile(f, dtype=np.float32, count=count).reshape(shape)


def save_model(model: EmbeddingModel, path) -> None:
    """Binary layout: magic, little-endian u32 header (dim, bucket_count,
    min_n, max_n, vocab_size), u8 finalized flag, vocab table (u32 byte
    length + UTF-8 per token), then row-major f32 matrices: token vectors,
    context vectors, buckets, and the exported matrix when finalized."""
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<5I", model.dim, model.bucket_count,
                            model.min_n, model.max_n, len(model.tokens)))
        f.write(struct.pack("<B", 1 if model.finalized else 0))
        for t in model.tokens:
            raw = t.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        _write_matrix(f, model.token_vectors)
        _write_matrix(f, model.context_vectors)
        _write_matrix(f, model.ngram_buckets)
        if model.finalized:
            _write_matrix(f, model.exported)
            flagged = [model.vocab[t] for t in model.zero_norm_tokens]
            f.write(struct.pack("<I", len(flagged)))
            for i in flagged:
                f.write(struct.pack("<I", i))


def load_model(path, marker: str = DEFAULT_MARKER) -> EmbeddingModel:
    with open(path, "rb") as f:
        magic = f.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ValueError(f"not an embedding model file: bad magic {magic!r}")
        dim, bucket_count, min_n, max_n, vocab_size = struct.unpack("<5I", f.read(20))
        finalized = struct.unpack("<B", f.read(1))[0] == 1
        tokens = []
        for _ in range(vocab_size):
            (length,) = struct.unpack("<I", f.read(4))
            tokens.append(f.read(length).decode("utf-8"))
        token_vecs = _read_matrix(f, (vocab_size, dim))
        context = _read_matrix(f, (vocab_size, dim))
        buckets = _read_matrix(f, (bucket_count, dim))
        exported = None
        zero_norm: list[str] = []
        if finalized:
            exported = _read_matrix(f, (vocab_size, dim))
            (n_flagged,) = struct.unpack("<I", f.read(4))
            for _ in range(n_flagged):
                (i,) = struct.unpack("<I", f.read(4))
                zero_norm.append(tokens[i])
    return EmbeddingModel(
        dim=dim, tokens=tokens, vocab={t: i for i, t in enumerate(tokens)},
        token_vectors=token_vecs, context_vectors=context, ngram_buckets=buckets,
        min_n=min_n, max_n=max_n, bucket_count=bucket_count, marker=marker,
        exported=exported, zero_norm_tokens=zero_norm,
    )
