import numpy as np
import pytest

from varmt import embed
from varmt.embed import (EmbeddingModel, SkipgramConfig, finalize, fnv1a,
                         nearest_neighbors, train_embeddings, transfer_init)
from varmt.textproc import MonoCorpus, extract_ngrams


def small_config(**overrides):
    defaults = dict(dim=16, window=2, negatives=4, epochs=3, learning_rate=0.05,
                    bucket_count=512, min_count=1, seed=9)
    defaults.update(overrides)
    return SkipgramConfig(**defaults)


def tiny_corpus():
    sentences = ["ab ра cd", "ра cd ef", "cd ef ab"] * 10
    return MonoCorpus(sentences)


def manual_model(rows, tokens=None, min_n=10, max_n=10):
    """Model whose tokens have no n-grams, so composed == token vector."""
    rows = np.asarray(rows, dtype=np.float32)
    tokens = tokens or [f"t{i}" for i in range(len(rows))]
    return EmbeddingModel(
        dim=rows.shape[1], tokens=tokens,
        vocab={t: i for i, t in enumerate(tokens)},
        token_vectors=rows.copy(),
        context_vectors=np.zeros_like(rows),
        ngram_buckets=np.zeros((4, rows.shape[1]), dtype=np.float32),
        min_n=min_n, max_n=max_n, bucket_count=4,
    )


class TestFnv1a:
    def test_reference_values(self):
        # published FNV-1a 32-bit test vectors
        assert fnv1a(b"") == 0x811C9DC5
        assert fnv1a(b"a") == 0xE40C292C
        assert fnv1a(b"foobar") == 0xBF9CF968


class TestDefaultInitialization:
    def test_zero_epochs_is_default_init(self):
        cfg = small_config(epochs=0)
        model = train_embeddings(tiny_corpus(), cfg)
        bound = 0.5 / cfg.dim
        assert np.all(model.context_vectors == 0.0)
        assert np.max(np.abs(model.ngram_buckets)) <= bound
        assert np.max(np.abs(model.token_vectors)) <= bound
        assert model.ngram_buckets.shape == (cfg.bucket_count, cfg.dim)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            train_embeddings(MonoCorpus([""]), small_config())

    def test_min_count_filters_vocab(self):
        corpus = MonoCorpus(["aa bb", "aa"])
        model = train_embeddings(corpus, small_config(epochs=0, min_count=2))
        assert model.tokens == ["aa"]


class TestComposedVector:
    def test_mean_of_token_and_bucket_rows(self):
        cfg = small_config(epochs=0, min_n=3, max_n=4)
        model = train_embeddings(tiny_corpus(), cfg)
        token = model.tokens[0]
        ids = [fnv1a(g.encode("utf-8")) % cfg.bucket_count
               for g in extract_ngrams(token, 3, 4)]
        expected = model.token_vectors[model.vocab[token]].astype(np.float64)
        for i in ids:
            expected += model.ngram_buckets[i].astype(np.float64)
        expected /= 1 + len(ids)
        assert np.allclose(model.compose(token), expected, atol=1e-6)

    def test_token_without_ngrams_composes_to_itself(self):
        model = manual_model([[3.0, 4.0]])
        assert np.array_equal(model.compose("t0"), np.array([3.0, 4.0], np.float32))


class TestTraining:
    def test_shared_context_tokens_converge(self):
        cfg = embed.SkipgramConfig(dim=16, window=2, negatives=5, epochs=40,
                                   learning_rate=0.05, bucket_count=4096, seed=7)
        sentences = []
        for _ in range(60):
            sentences += ["ga x1q gb", "ga x2q gb", "gc y1k gd", "gc y2k gd"]
        model = finalize(train_embeddings(MonoCorpus(sentences), cfg))

        def cos(a, b):
            return float(model.vector(a) @ model.vector(b))

        assert cos("x1q", "x2q") - cos("x1q", "y1k") >= 0.2

    def test_seeded_determinism_is_bitwise(self):
        cfg = small_config(epochs=2)
        first = train_embeddings(tiny_corpus(), cfg)
        second = train_embeddings(tiny_corpus(), cfg)
        assert np.array_equal(first.token_vectors, second.token_vectors)
        assert np.array_equal(first.context_vectors, second.context_vectors)
        assert np.array_equal(first.ngram_buckets, second.ngram_buckets)

    def test_init_mismatch_rejected(self):
        parent = finalize(train_embeddings(tiny_corpus(), small_config(epochs=0)))
        with pytest.raises(ValueError):
            train_embeddings(tiny_corpus(), small_config(dim=8), init=parent)
        with pytest.raises(ValueError):
            train_embeddings(tiny_corpus(), small_config(bucket_count=256), init=parent)

    def test_init_rows_used_before_updates(self):
        cfg = small_config(epochs=0)
        parent = finalize(train_embeddings(tiny_corpus(), cfg))
        child = train_embeddings(tiny_corpus(), cfg, init=parent)
        for token in child.tokens:
            assert np.array_equal(child.compose(token), parent.compose(token))


class TestTransferInit:
    def test_subset_vocabulary_reproduces_parent_bitwise(self):
        cfg = small_config(epochs=2)
        parent = finalize(train_embeddings(tiny_corpus(), cfg))
        subset = parent.tokens[:2]
        child = finalize(transfer_init(parent, subset))
        for token in subset:
            assert np.array_equal(child.vector(token), parent.vector(token))

    def test_full_vocabulary_idempotent(self):
        cfg = small_config(epochs=1)
        parent = finalize(train_embeddings(tiny_corpus(), cfg))
        child = finalize(transfer_init(parent, list(parent.tokens)))
        assert np.array_equal(child.exported, parent.exported)

    def test_new_token_composes_with_transferred_buckets(self):
        cfg = small_config(epochs=1, min_n=3, max_n=4)
        parent = finalize(train_embeddings(tiny_corpus(), cfg))
        child = transfer_init(parent, list(parent.tokens) + ["рак"])
        ids = child.bucket_ids("рак")
        expected = child.token_vectors[child.vocab["рак"]].copy()
        expected += child.ngram_buckets[ids].sum(axis=0)
        expected /= np.float32(1 + len(ids))
        assert np.array_equal(child.compose("рак"), expected)
        assert np.array_equal(child.ngram_buckets, parent.ngram_buckets)

    def test_shared_ngrams_correlate_with_parent(self):
        cfg = small_config(epochs=3, min_n=3, max_n=4)
        sentences = ["бачок полон", "бачок пуст", "полон пуст"] * 10
        parent = finalize(train_embeddings(MonoCorpus(sentences), cfg))
        child = finalize(transfer_init(parent, ["бачити"]))
        # "бачити" shares the <ба, бач, ... n-grams with "бачок"
        sim = float(child.vector("бачити") @ parent.vector("бачок"))
        rng = np.random.default_rng(0)
        random_unit = rng.normal(size=cfg.dim)
        random_unit /= np.linalg.norm(random_unit)
        assert sim > float(parent.vector("бачок") @ random_unit)

    def test_unfinalized_parent_rejected(self):
        parent = train_embeddings(tiny_corpus(), small_config(epochs=0))
        with pytest.raises(ValueError):
            transfer_init(parent, ["ab"])

    def test_empty_vocab_rejected(self):
        parent = finalize(train_embeddings(tiny_corpus(), small_config(epochs=0)))
        with pytest.raises(ValueError):
            transfer_init(parent, [])


class TestFinalize:
    def test_three_four_five(self):
        model = finalize(manual_model([[3.0, 4.0]]))
        assert np.allclose(model.exported[0], [0.6, 0.8], atol=1e-7)

    def test_unit_vector_unchanged(self):
        model = finalize(manual_model([[0.0, 1.0]]))
        assert np.allclose(model.exported[0], [0.0, 1.0], atol=1e-7)

    def test_zero_vector_flagged_and_replaced(self):
        model = finalize(manual_model([[0.0, 0.0], [1.0, 1.0]]))
        assert np.array_equal(model.exported[0], [1.0, 0.0])
        assert model.zero_norm_tokens == ["t0"]

    def test_all_exports_unit_norm(self):
        model = finalize(train_embeddings(tiny_corpus(), small_config(epochs=2)))
        norms = np.linalg.norm(model.exported.astype(np.float64), axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-6


class TestNearestNeighbors:
    def test_exact_match_ranks_first(self):
        model = finalize(manual_model(np.eye(3, dtype=np.float32)))
        ranked = nearest_neighbors(model, model.exported[1], 3)
        assert ranked[0] == ("t1", pytest.approx(1.0))
        assert ranked[1][1] == pytest.approx(0.0, abs=1e-7)

    def test_full_ranking_matches_brute_force(self):
        rng = np.random.default_rng(5)
        rows = rng.normal(size=(20, 8)).astype(np.float32)
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        model = finalize(manual_model(rows))
        query = rng.normal(size=8)
        ranked = nearest_neighbors(model, query, 20)
        sims = model.exported.astype(np.float64) @ (query / np.linalg.norm(query))
        expected = [model.tokens[i] for i in np.argsort(-sims, kind="stable")]
        assert [t for t, _ in ranked] == expected

    def test_tie_broken_by_vocab_index(self):
        rows = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], np.float32)
        model = finalize(manual_model(rows))
        ranked = nearest_neighbors(model, np.array([1.0, 0.0]), 3)
        assert [t for t, _ in ranked] == ["t0", "t2", "t1"]

    def test_zero_query_rejected(self):
        model = finalize(manual_model(np.eye(2, dtype=np.float32)))
        with pytest.raises(ValueError):
            nearest_neighbors(model, np.zeros(2), 1)


class TestModelIo:
    def test_binary_roundtrip(self, tmp_path):
        model = finalize(train_embeddings(tiny_corpus(), small_config(epochs=1)))
        path = tmp_path / "emb.vmeb"
        embed.save_model(model, path)
        back = embed.load_model(path)
        assert back.tokens == model.tokens
        assert np.array_equal(back.token_vectors, model.token_vectors)
        assert np.array_equal(back.ngram_buckets, model.ngram_buckets)
        assert np.array_equal(back.exported, model.exported)
        assert (back.min_n, back.max_n, back.bucket_count) == (
            model.min_n, model.max_n, model.bucket_count)

    def test_binary_magic_checked(self, tmp_path):
        path = tmp_path / "bogus.vmeb"
        path.write_bytes(b"NOTME" + b"\x00" * 16)
        with pytest.raises(ValueError):
            embed.load_model(path)

    def test_text_roundtrip(self, tmp_path):
        model = finalize(train_embeddings(tiny_corpus(), small_config(epochs=1)))
        path = tmp_path / "emb.txt"
        embed.save_text_vectors(model, path)
        tokens, rows = embed.load_text_vectors(path)
        assert tokens == model.tokens
        assert np.array_equal(rows, model.exported)
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == f"{len(model.tokens)} {model.dim}"
