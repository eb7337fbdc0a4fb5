"""Autoregressive decoding: greedy nearest-neighbor for the continuous
head, length-normalized beam search for the softmax head."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .config import CONTINUOUS, SOFTMAX
from .transformer import BOS, EOS, NUM_SPECIALS, PAD, Seq2SeqModel


@dataclass
class Translation:
    tokens: list[str]
    truncated: bool = False


def _prepare_source(model: Seq2SeqModel, src_tokens: list[str]):
    if not src_tokens:
        raise ValueError("empty source sentence")
    ids = model.src_to_ids(src_tokens)[: model.config.max_len - 1] + [EOS]
    return torch.tensor([ids], dtype=torch.long)


def translate_greedy(model: Seq2SeqModel, src_tokens: list[str],
                     max_len: int | None = None) -> Translation:
    """Continuous-head decoding.

    Each predicted vector is matched to its cosine-nearest output-table
    row; the matched token's pretrained vector (not the raw prediction)
    feeds the next step. Stops at the end symbol or ``max_len``.
    """
    if model.config.head_kind != CONTINUOUS:
        raise ValueError("greedy vector decoding requires the continuous head")
    max_len = model.config.max_len if max_len is None else min(max_len, model.config.max_len)
    src = _prepare_source(model, src_tokens)
    model.eval()
    with torch.no_grad():
        memory, src_mask = model.encode(src)
        table = model.output_table
        out_ids: list[int] = []
        for _ in range(max_len):
            tgt_in = torch.tensor([[BOS] + out_ids], dtype=torch.long)
            hidden = model.decode(tgt_in, memory, src_mask)
            pred = model.head(hidden[0, -1])
            norm = pred.norm()
            if norm > 0:
                pred = pred / norm
            sims = table @ pred
            sims[PAD] = sims[BOS] = -torch.inf
            next_id = int(sims.argmax())
            if next_id == EOS:
                return Translation([model.tgt_token_of(i) for i in out_ids])
            out_ids.append(next_id)
    return Translation([model.tgt_token_of(i) for i in out_ids], truncated=True)


def translate_beam(model: Seq2SeqModel, src_tokens: list[str], beam: int,
                   max_len: int | None = None) -> Translation:
    """Softmax-head beam search with final length normalization.

    Partial hypotheses are pruned by cumulative log-probability; finished
    ones compete by log-probability divided by length. ``beam=1`` is
    exactly greedy argmax decoding.
    """
    if model.config.head_kind != SOFTMAX:
        raise ValueError("beam decoding requires the softmax head")
    if beam < 1:
        raise ValueError("beam must be >= 1")
    max_len = model.config.max_len if max_len is None else min(max_len, model.config.max_len)
    src = _prepare_source(model, src_tokens)
    model.eval()
    with torch.no_grad():
        memory, src_mask = model.encode(src)
        # hypotheses: (ids, cumulative logprob, finished)
        hyps: list[tuple[list[int], float, bool]] = [([], 0.0, False)]
        for _ in range(max_len):
            if all(done for _, _, done in hyps):
                break
            candidates: list[tuple[list[int], float, bool]] = []
            for ids, score, done in hyps:
                if done:
                    candidates.append((ids, score, True))
                    continue
                tgt_in = torch.tensor([[BOS] + ids], dtype=torch.long)
                hidden = model.decode(tgt_in, memory.expand(1, -1, -1), src_mask)
                logits = model.head(hidden[0, -1])
                logits[PAD] = logits[BOS] = -torch.inf
                logprobs = torch.log_softmax(logits, dim=-1)
                top = torch.topk(logprobs, min(beam, logprobs.shape[0]))
                for lp, idx in zip(top.values.tolist(), top.indices.tolist()):
                    if idx == EOS:
                        candidates.append((ids, score + lp, True))
                    else:
                        candidates.append((ids + [idx], score + lp, False))
            candidates.sort(key=lambda c: -c[1])
            hyps = candidates[:beam]

        def final_score(hyp):
            ids, score, done = hyp
            return score / max(1, len(ids) + (1 if done else 0))

        finished = [h for h in hyps if h[2]]
        pool = finished if finished else hyps
        best = max(pool, key=final_score)
    return Translation([model.tgt_token_of(i) for i in best[0]],
                       truncated=not best[2])
