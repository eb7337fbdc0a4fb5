"""Corpus handling, byte pair encoding, and character n-gram extraction.

Sentences are plain UTF-8 strings; words are whitespace-separated. BPE
merges operate on Unicode scalar values, never bytes, so Cyrillic and
Arabic text segment correctly. Non-final pieces of a split word carry a
trailing continuation marker (``@@`` by default), the convention the rest
of the toolkit relies on when restoring text or extracting n-grams.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field

DEFAULT_MARKER = "@@"

BPE_CODES_HEADER = "#version: varmt-bpe-1"


class SubwordToken(str):
    """A subword piece; behaves as a plain string.

    The surface form includes the trailing continuation marker when the
    piece is word-internal.
    """

    marker = DEFAULT_MARKER

    @property
    def is_continuation(self) -> bool:
        return self.endswith(self.marker)

    @property
    def stem(self) -> str:
        """Surface with the continuation marker stripped."""
        if self.is_continuation:
            return str(self[: -len(self.marker)])
        return str(self)


@dataclass
class MonoCorpus:
    """A list of sentences, one per line in file form."""

    sentences: list[str]
    language_tag: str = ""

    def __post_init__(self):
        for i, s in enumerate(self.sentences):
            if "\n" in s:
                raise ValueError(f"sentence {i} contains a newline")

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class BpeCodes:
    """Ordered merge rules learned from a corpus."""

    merges: list[tuple[str, str]]
    marker: str = DEFAULT_MARKER
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pair in codes")
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    @property
    def num_merges(self) -> int:
        return len(self.merges)


def read_corpus(path, language_tag: str = "") -> MonoCorpus:
    with open(path, encoding="utf-8") as f:
        sentences = [line.rstrip("\n") for line in f]
    return MonoCorpus(sentences, language_tag)


def write_corpus(corpus: MonoCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in corpus.sentences:
            f.write(s + "\n")


def _word_frequencies(corpus: MonoCorpus) -> collections.Counter:
    freqs = collections.Counter()
    for sentence in corpus.sentences:
        freqs.update(sentence.split())
    return freqs


def _count_pairs(vocab: dict[tuple[str, ...], int]) -> collections.Counter:
    pairs = collections.Counter()
    for symbols, freq in vocab.items():
        for a, b in zip(symbols, symbols[1:]):
            pairs[(a, b)] += freq
    return pairs


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    # Single left-to-right pass; "aaa" with pair (a,a) becomes ("aa", "a").
    left, right = pair
    merged = left + right
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def learn_bpe(corpus: MonoCorpus, num_merges: int, marker: str = DEFAULT_MARKER) -> BpeCodes:
    """Learn merge rules by greedy most-frequent-pair merging.

    Pair counts are recomputed after every merge. Ties are broken by
    lexicographic order of the (left, right) pair, so the result is
    deterministic for a given corpus. Fewer than ``num_merges`` rules are
    returned if the corpus runs out of adjacent pairs.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    word_freqs = _word_frequencies(corpus)
    if not word_freqs:
        raise ValueError("cannot learn BPE codes from an empty corpus")

    vocab = {tuple(word): freq for word, freq in word_freqs.items()}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pairs = _count_pairs(vocab)
        if not pairs:
            break
        best_count = max(pairs.values())
        best_pair = min(p for p, c in pairs.items() if c == best_count)
        merges.append(best_pair)
        new_vocab: dict[tuple[str, ...], int] = {}
        for symbols, freq in vocab.items():
            merged = _merge_word(symbols, best_pair)
            new_vocab[merged] = new_vocab.get(merged, 0) + freq
        vocab = new_vocab
    return BpeCodes(merges, marker)


def learn_joint_bpe(
    std_corpus: MonoCorpus,
    tgt_corpus: MonoCorpus,
    num_merges: int,
    marker: str = DEFAULT_MARKER,
) -> BpeCodes:
    """Learn a single merge table on the concatenation of two corpora.

    Shared merges raise the number of subword types the two corpora have
    in common, which is what downstream embedding transfer relies on.
    """
    if not _word_frequencies(std_corpus):
        raise ValueError("std corpus is empty")
    if not _word_frequencies(tgt_corpus):
        raise ValueError("tgt corpus is empty")
    joint = MonoCorpus(
        list(std_corpus.sentences) + list(tgt_corpus.sentences),
        language_tag=f"{std_corpus.language_tag}+{tgt_corpus.language_tag}",
    )
    return learn_bpe(joint, num_merges, marker)


def _segment_word(word: str, codes: BpeCodes) -> list[str]:
    symbols = list(word)
    ranks = codes._ranks
    while len(symbols) > 1:
        best_rank = None
        for a, b in zip(symbols, symbols[1:]):
            rank = ranks.get((a, b))
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
        if best_rank is None:
            break
        symbols = list(_merge_word(tuple(symbols), codes.merges[best_rank]))
    return symbols


def apply_bpe(codes: BpeCodes, sentence: str, _cache: dict | None = None) -> list[SubwordToken]:
    """Segment a raw sentence into subword tokens.

    Merges earlier in the table take priority, so segmentation matches the
    greedy order they were learned in. Unknown characters pass through as
    single-character tokens. The input may not contain the continuation
    marker itself, otherwise the segmentation would not be reversible.
    """
    if codes.marker in sentence:
        raise ValueError(f"sentence contains the continuation marker {codes.marker!r}")
    tokens: list[SubwordToken] = []
    for word in sentence.split():
        if _cache is not None and word in _cache:
            pieces = _cache[word]
        else:
            pieces = _segment_word(word, codes)
            if _cache is not None:
                _cache[word] = pieces
        for piece in pieces[:-1]:
            tokens.append(SubwordToken(piece + codes.marker))
        tokens.append(SubwordToken(pieces[-1]))
    return tokens


def tokenize_corpus(codes: BpeCodes, corpus: MonoCorpus) -> MonoCorpus:
    """Apply BPE to every sentence; tokens are space-joined per line."""
    cache: dict[str, list[str]] = {}
    sentences = [" ".join(apply_bpe(codes, s, cache)) for s in corpus.sentences]
    return MonoCorpus(sentences, corpus.language_tag)


def restore_bpe(tokens: list[str], marker: str = DEFAULT_MARKER) -> str:
    """Invert apply_bpe: glue continuation pieces, join words with spaces."""
    words: list[str] = []
    current = ""
    pending = False
    for token in tokens:
        if token.endswith(marker):
            current += token[: -len(marker)]
            pending = True
        else:
            words.append(current + token)
            current = ""
            pending = False
    if pending:
        raise ValueError("sequence ends with a continuation token")
    return " ".join(words)


def extract_ngrams(
    token: str, min_n: int, max_n: int, marker: str = DEFAULT_MARKER
) -> list[str]:
    """Character n-grams of a subword token, marker excluded.

    The marker-stripped surface is wrapped in the boundary symbols ``<``
    and ``>`` and every substring of length min_n..max_n of the wrapped
    string is returned, in order of increasing length then position. The
    whole wrapped token appears when its length is in range. Repeated
    substrings are kept, one entry per occurrence.
    """
    if not 1 <= min_n <= max_n:
        raise ValueError("need 1 <= min_n <= max_n")
    stem = token[: -len(marker)] if token.endswith(marker) else token
    if not stem:
        raise ValueError("token is empty after stripping the marker")
    if marker in stem:
        raise ValueError(f"malformed token: marker {marker!r} inside the surface")
    wrapped = "<" + stem + ">"
    grams: list[str] = []
    for n in range(min_n, max_n + 1):
        for i in range(len(wrapped) - n + 1):
            grams.append(wrapped[i : i + n])
    return grams


def token_vocabulary(corpus: MonoCorpus, min_count: int = 1) -> list[str]:
    """Distinct tokens of a tokenized corpus, most frequent first.

    Ties are broken lexicographically so the ordering is deterministic.
    """
    counts = collections.Counter()
    for sentence in corpus.sentences:
        counts.update(sentence.split())
    return sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )


def save_codes(codes: BpeCodes, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(BPE_CODES_HEADER + "\n")
        for left, right in codes.merges:
            f.write(f"{left} {right}\n")


def load_codes(path, marker: str = DEFAULT_MARKER) -> BpeCodes:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != BPE_CODES_HEADER:
            raise ValueError(f"unexpected codes header: {header!r}")
        merges = []
        for line in f:
            left, right = line.rstrip("\n").split(" ")
            merges.append((left, right))
    return BpeCodes(merges, marker)
