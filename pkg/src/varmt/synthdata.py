"""Synthetic related-variety fixtures.

A toy source language (Latin pseudo-words) maps word-for-word onto a toy
standard language (Cyrillic pseudo-words); the target variety is derived
from the standard one by character substitutions (new letters outside the
standard alphabet) plus lexical substitutions of the most frequent words,
mimicking how a closely related variety differs from its standard form.
All sampling is seeded, so fixtures are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .textproc import MonoCorpus

SRC_CONSONANTS = "bdfgklmnprstvz"
SRC_VOWELS = "aeiou"
# Letters covered by the default character rules are sampled rarely so
# that a realistic share of standard words survives the variety rewrite
# unchanged (related varieties overlap heavily at the type level).
STD_CONSONANTS = "бвгдклмнпрстц"
STD_CONSONANT_WEIGHTS = (0.085, 0.085, 0.04, 0.085, 0.085, 0.085, 0.085,
                         0.085, 0.085, 0.085, 0.085, 0.085, 0.025)
STD_VOWELS = "аеиоуы"
STD_VOWEL_WEIGHTS = (0.33, 0.09, 0.05, 0.28, 0.22, 0.03)
# Reserved for lexical-variant suffixes only; never appears in standard
# words and no character rule produces it, which keeps p=1 specs
# invertible by construction.
VARIANT_CONSONANT = "ж"

DEFAULT_CHAR_RULES = {"е": "є", "и": "і", "ы": "ў", "г": "ґ", "ц": "џ"}


@dataclass
class SyntheticVarietySpec:
    """Word-level rewrite rules deriving a variety from standard text.

    A word matched by the lexical table is replaced outright; otherwise
    each character is substituted per the character map. Every rule fires
    with the given probability (1.0 means deterministically). Inversion
    via invert_spec assumes the two routes produce disjoint surfaces.
    """

    char_map: dict[str, str] = field(default_factory=dict)
    lexical_map: dict[str, str] = field(default_factory=dict)
    probability: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must be in [0, 1]")
        if self.probability == 1.0:
            if len(set(self.char_map.values())) != len(self.char_map):
                raise ValueError("character map is not invertible")
            if len(set(self.lexical_map.values())) != len(self.lexical_map):
                raise ValueError("lexical map is not invertible")


def _apply_word(spec: SyntheticVarietySpec, word: str,
                rng: np.random.Generator | None) -> str:
    def fires() -> bool:
        if spec.probability >= 1.0:
            return True
        return bool(rng.random() < spec.probability)

    variant = spec.lexical_map.get(word)
    if variant is not None and fires():
        return variant
    return "".join(
        spec.char_map[c] if c in spec.char_map and fires() else c for c in word
    )


def apply_variety(spec: SyntheticVarietySpec, sentence: str,
                  rng: np.random.Generator | None = None) -> str:
    if spec.probability < 1.0 and rng is None:
        raise ValueError("probabilistic specs need a random generator")
    return " ".join(_apply_word(spec, w, rng) for w in sentence.split())


def invert_spec(spec: SyntheticVarietySpec) -> SyntheticVarietySpec:
    """Inverse rewrite of a deterministic (p=1) spec."""
    if spec.probability != 1.0:
        raise ValueError("only p=1 specs are invertible")
    return SyntheticVarietySpec(
        char_map={v: k for k, v in spec.char_map.items()},
        lexical_map={v: k for k, v in spec.lexical_map.items()},
    )


def generate_synthetic_pair(
    spec: SyntheticVarietySpec, std_corpus: MonoCorpus, seed: int = 0
) -> tuple[MonoCorpus, list[tuple[str, str]]]:
    """Variety corpus plus the gold (standard, variety) sentence mapping."""
    rng = np.random.default_rng(seed)
    mapping = [(s, apply_variety(spec, s, rng)) for s in std_corpus.sentences]
    tgt = MonoCorpus([t for _, t in mapping],
                     language_tag=f"{std_corpus.language_tag}-variety")
    return tgt, mapping


def _make_words(rng: np.random.Generator, consonants: str, vowels: str,
                count: int, consonant_weights=None, vowel_weights=None) -> list[str]:
    c_p = np.asarray(consonant_weights, dtype=np.float64) if consonant_weights else None
    v_p = np.asarray(vowel_weights, dtype=np.float64) if vowel_weights else None
    if c_p is not None:
        c_p = c_p / c_p.sum()
    if v_p is not None:
        v_p = v_p / v_p.sum()
    words: list[str] = []
    seen = set()
    # Uniform three-syllable words: no word is a prefix of another, so a
    # whole word never doubles as a continuation piece after subword
    # splitting (such pairs would share every character n-gram).
    while len(words) < count:
        word = "".join(
            consonants[rng.choice(len(consonants), p=c_p)]
            + vowels[rng.choice(len(vowels), p=v_p)]
            for _ in range(3)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


@dataclass
class TranslationFixture:
    """Everything a pipeline run needs, already split."""

    train_pairs: list[tuple[str, str]]  # (src, std)
    dev_pairs: list[tuple[str, str]]
    test_pairs: list[tuple[str, str]]
    std_mono: MonoCorpus
    tgt_mono: MonoCorpus
    test_tgt_refs: list[str]  # variety references aligned with test_pairs
    spec: SyntheticVarietySpec
    src_lexicon: list[str]
    std_lexicon: list[str]


def default_variety_spec(std_lexicon: list[str], seed: int = 0,
                         n_char_rules: int = 5,
                         n_lexical_rules: int = 50) -> SyntheticVarietySpec:
    """Character rules plus lexical variants of the most frequent words.

    Lexical variants swap the final syllable for one built on a reserved
    consonant, so they collide with nothing the character rules produce.
    """
    rng = np.random.default_rng(seed)
    char_items = list(DEFAULT_CHAR_RULES.items())[:n_char_rules]
    lexical: dict[str, str] = {}
    taken: set[str] = set()
    for word in std_lexicon[:n_lexical_rules]:
        variant = word[:-2] + VARIANT_CONSONANT + STD_VOWELS[rng.integers(len(STD_VOWELS))]
        while variant in taken:
            variant += VARIANT_CONSONANT + STD_VOWELS[rng.integers(len(STD_VOWELS))]
        taken.add(variant)
        lexical[word] = variant
    return SyntheticVarietySpec(char_map=dict(char_items), lexical_map=lexical)


def make_translation_fixture(
    seed: int = 0,
    vocab_size: int = 600,
    n_train: int = 20_000,
    n_dev: int = 500,
    n_test: int = 500,
    n_std_mono: int = 10_000,
    n_tgt_mono: int = 2_000,
    min_len: int = 3,
    max_len: int = 11,
    spec: SyntheticVarietySpec | None = None,
) -> TranslationFixture:
    """Seeded end-to-end fixture in the low-monolingual-resource regime.

    The source and standard lexicons are linked by a word bijection, so a
    parallel sentence is a word-for-word rendering; the variety is the
    standard side rewritten by ``spec``. Word choice is Zipf-distributed.
    """
    rng = np.random.default_rng(seed)
    src_lexicon = _make_words(rng, SRC_CONSONANTS, SRC_VOWELS, vocab_size)
    std_lexicon = _make_words(rng, STD_CONSONANTS, STD_VOWELS, vocab_size,
                              STD_CONSONANT_WEIGHTS, STD_VOWEL_WEIGHTS)

    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    probs = 1.0 / (ranks + 2.7)
    probs /= probs.sum()

    # Sentences are random walks over a word-level Markov chain: each word
    # prefers a small successor set, giving every word a distinctive
    # co-occurrence signature (without structure, distributional embeddings
    # of equally-distributed words would collapse together).
    n_successors = 4
    successors = rng.integers(0, vocab_size, size=(vocab_size, n_successors))
    follow_probability = 0.95

    def sample_sentence_ids() -> np.ndarray:
        length = int(rng.integers(min_len, max_len + 1))
        ids = np.empty(length, dtype=np.int64)
        ids[0] = rng.choice(vocab_size, p=probs)
        for i in range(1, length):
            if rng.random() < follow_probability:
                ids[i] = successors[ids[i - 1], rng.integers(n_successors)]
            else:
                ids[i] = rng.choice(vocab_size, p=probs)
        return ids

    def sample_pairs(n: int) -> list[tuple[str, str]]:
        pairs = []
        for _ in range(n):
            ids = sample_sentence_ids()
            src = " ".join(src_lexicon[i] for i in ids)
            std = " ".join(std_lexicon[i] for i in ids)
            pairs.append((src, std))
        return pairs

    train_pairs = sample_pairs(n_train)
    dev_pairs = sample_pairs(n_dev)
    test_pairs = sample_pairs(n_test)
    std_mono = MonoCorpus(
        [" ".join(std_lexicon[i] for i in sample_sentence_ids()) for _ in range(n_std_mono)],
        language_tag="std",
    )
    if spec is None:
        spec = default_variety_spec(std_lexicon, seed)
    tgt_source = MonoCorpus(
        [" ".join(std_lexicon[i] for i in sample_sentence_ids()) for _ in range(n_tgt_mono)],
        language_tag="std",
    )
    tgt_mono, _ = generate_synthetic_pair(spec, tgt_source, seed)
    test_tgt_refs = [apply_variety(spec, std) for _, std in test_pairs]
    return TranslationFixture(
        train_pairs=train_pairs, dev_pairs=dev_pairs, test_pairs=test_pairs,
        std_mono=std_mono, tgt_mono=tgt_mono, test_tgt_refs=test_tgt_refs,
        spec=spec, src_lexicon=src_lexicon, std_lexicon=std_lexicon,
    )


def vocabulary_overlap(std: MonoCorpus, tgt: MonoCorpus) -> float:
    """Fraction of standard word types that also occur in the variety."""
    std_types = set(w for s in std.sentences for w in s.split())
    tgt_types = set(w for s in tgt.sentences for w in s.split())
    if not std_types:
        raise ValueError("empty standard corpus")
    return len(std_types & tgt_types) / len(std_types)
