"""Pseudo-parallel corpus synthesis through a reverse translation model.

A softmax standard-to-source model is trained on reversed gold parallel
data; variety sentences are then pushed through it as if they were
standard text, exploiting the overlap between the two. The output pairs
keep the original variety sentence byte-for-byte on the target side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .mtmodel import (ModelConfig, Seq2SeqModel, TrainConfig, build_model,
                      train, translate_beam)
from .mtmodel.config import SOFTMAX
from .textproc import BpeCodes, MonoCorpus, apply_bpe, restore_bpe, token_vocabulary

GOLD = "gold"
PSEUDO = "pseudo"


@dataclass
class ParallelCorpus:
    """Aligned sentence pairs (source side first)."""

    pairs: list[tuple[str, str]]
    origin: str = GOLD

    def __post_init__(self):
        if self.origin not in (GOLD, PSEUDO):
            raise ValueError(f"unknown origin {self.origin!r}")
        for i, (a, b) in enumerate(self.pairs):
            if not a or not b:
                raise ValueError(f"pair {i} has an empty side")

    def __len__(self) -> int:
        return len(self.pairs)

    def reversed(self) -> "ParallelCorpus":
        return ParallelCorpus([(b, a) for a, b in self.pairs], self.origin)


@dataclass
class SynthesisStats:
    requested: int
    produced: int
    dropped: int


def train_reverse_model(
    parallel: ParallelCorpus,
    tc: TrainConfig,
    mc: ModelConfig | None = None,
    dev: ParallelCorpus | None = None,
) -> Seq2SeqModel:
    """Train the standard-to-source model on tokenized (std, src) pairs."""
    if parallel.origin != GOLD:
        raise ValueError("the reverse model must be trained on gold parallel data")
    if not parallel.pairs:
        raise ValueError("parallel corpus is empty")
    if mc is None:
        mc = ModelConfig(head_kind=SOFTMAX)
    elif mc.head_kind != SOFTMAX:
        raise ValueError("the reverse model uses the softmax head")
    in_vocab = token_vocabulary(MonoCorpus([a for a, _ in parallel.pairs]))
    out_vocab = token_vocabulary(MonoCorpus([b for _, b in parallel.pairs]))
    model = build_model(mc, src_vocab=in_vocab, tgt_vocab=out_vocab)
    train(model, parallel, tc, dev)
    return model


def synthesize_pseudo_parallel(
    reverse_model: Seq2SeqModel,
    tgt_mono: MonoCorpus,
    joint_codes: BpeCodes,
    beam: int = 5,
) -> tuple[ParallelCorpus, SynthesisStats]:
    """Back-translate variety sentences into the source language.

    Sentences are tokenized with the joint codes; subwords unknown to the
    reverse model map to the unknown symbol rather than failing. Pairs are
    (translated source, original raw sentence) in input order; sentences
    with an empty translation are dropped and counted.
    """
    if reverse_model.config.head_kind != SOFTMAX:
        raise ValueError("the reverse model must have a softmax head")
    pairs: list[tuple[str, str]] = []
    dropped = 0
    cache: dict[str, list[str]] = {}
    for sentence in tgt_mono.sentences:
        tokens = [str(t) for t in apply_bpe(joint_codes, sentence, cache)]
        if not tokens:
            dropped += 1
            continue
        result = translate_beam(reverse_model, tokens, beam)
        try:
            text = restore_bpe(result.tokens)
        except ValueError:
            dropped += 1
            continue
        if not text:
            dropped += 1
            continue
        pairs.append((text, sentence))
    stats = SynthesisStats(requested=len(tgt_mono.sentences),
                           produced=len(pairs), dropped=dropped)
    return ParallelCorpus(pairs, origin=PSEUDO), stats


def write_pseudo_corpus(corpus: ParallelCorpus, stats: SynthesisStats, stem: str) -> None:
    """Write aligned <stem>.src / <stem>.tgt files plus a <stem>.stats file."""
    with open(f"{stem}.src", "w", encoding="utf-8") as f:
        for src, _ in corpus.pairs:
            f.write(src + "\n")
    with open(f"{stem}.tgt", "w", encoding="utf-8") as f:
        for _, tgt in corpus.pairs:
            f.write(tgt + "\n")
    with open(f"{stem}.stats", "w", encoding="utf-8") as f:
        json.dump(vars(stats), f, indent=2)
        f.write("\n")


def read_pseudo_corpus(stem: str) -> ParallelCorpus:
    with open(f"{stem}.src", encoding="utf-8") as f:
        src = [line.rstrip("\n") for line in f]
    with open(f"{stem}.tgt", encoding="utf-8") as f:
        tgt = [line.rstrip("\n") for line in f]
    if len(src) != len(tgt):
        raise ValueError("pseudo corpus sides have different lengths")
    return ParallelCorpus(list(zip(src, tgt)), origin=PSEUDO)
