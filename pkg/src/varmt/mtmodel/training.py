"""Teacher-forced training and finetuning for both output heads.

The continuous head minimizes the regularized von Mises-Fisher negative
log-likelihood between each predicted vector and the frozen pretrained
vector of the gold token; the softmax head minimizes label-smoothed cross
entropy. Gradients flow by reverse-mode differentiation through the whole
network; the vMF loss contributes its analytic gradient through a custom
autograd function.

Runs are deterministic for a fixed seed: batch order comes from one numpy
generator and dropout from the torch seed set on entry.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import torch
import torch.nn.functional as F

from .. import vmf
from .config import CONTINUOUS, TrainConfig
from .radam import RectifiedAdam
from .transformer import BOS, EOS, PAD, Seq2SeqModel

if TYPE_CHECKING:
    from ..backtranslate import ParallelCorpus


class _VmfNll(torch.autograd.Function):
    """Per-sample vMF negative log-likelihood with analytic gradients."""

    @staticmethod
    def forward(ctx, predictions: torch.Tensor, targets: torch.Tensor, lambda1: float):
        pred_np = predictions.detach().cpu().numpy().astype(np.float64)
        tgt_np = targets.detach().cpu().numpy().astype(np.float64)
        losses, grads = vmf.nll_vmf_batch(pred_np, tgt_np, lambda1)
        ctx.save_for_backward(torch.from_numpy(grads).to(predictions.dtype))
        return torch.from_numpy(losses).to(predictions.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (grads,) = ctx.saved_tensors
        return grad_output.unsqueeze(-1) * grads, None, None


def vmf_nll(predictions: torch.Tensor, targets: torch.Tensor, lambda1: float) -> torch.Tensor:
    """Batched loss vector, differentiable with respect to predictions."""
    return _VmfNll.apply(predictions, targets, lambda1)


@dataclass
class TrainResult:
    steps: int
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[tuple[int, float]] = field(default_factory=list)
    best_val: float | None = None


def _encode_pairs(model: Seq2SeqModel, corpus: ParallelCorpus, strict: bool):
    max_len = model.config.max_len
    pairs = []
    for src, tgt in corpus.pairs:
        src_ids = model.src_to_ids(src.split(), strict=strict)[: max_len - 1] + [EOS]
        gold = model.tgt_to_ids(tgt.split(), strict=strict)[: max_len - 1] + [EOS]
        pairs.append((src_ids, gold))
    return pairs


def _pad_batch(batch, device=None):
    src_len = max(len(s) for s, _ in batch)
    tgt_len = max(len(g) for _, g in batch)
    src = torch.full((len(batch), src_len), PAD, dtype=torch.long, device=device)
    tgt_in = torch.full((len(batch), tgt_len), PAD, dtype=torch.long, device=device)
    gold = torch.full((len(batch), tgt_len), PAD, dtype=torch.long, device=device)
    for i, (s, g) in enumerate(batch):
        src[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        tgt_in[i, 0] = BOS
        tgt_in[i, 1 : len(g)] = torch.tensor(g[:-1], dtype=torch.long)
        gold[i, : len(g)] = torch.tensor(g, dtype=torch.long)
    return src, tgt_in, gold


def _batches(pairs, batch_tokens, rng: np.random.Generator):
    """Shuffle then pack greedily by a per-sequence token budget."""
    order = rng.permutation(len(pairs))
    batch = []
    cost = 0
    for idx in order:
        pair = pairs[idx]
        pair_cost = max(len(pair[0]), len(pair[1]) + 1)
        if batch and cost + pair_cost > batch_tokens:
            yield batch
            batch, cost = [], 0
        batch.append(pair)
        cost += pair_cost
    if batch:
        yield batch


def batch_loss(model: Seq2SeqModel, batch, tc: TrainConfig) -> torch.Tensor:
    src, tgt_in, gold = _pad_batch(batch)
    outputs = model(src, tgt_in)
    mask = gold != PAD
    if model.config.head_kind == CONTINUOUS:
        preds = outputs[mask]
        targets = model.output_table[gold[mask]].to(outputs.dtype)
        return vmf_nll(preds, targets, tc.vmf_lambda1).mean()
    logits = outputs.reshape(-1, outputs.shape[-1])
    return F.cross_entropy(logits, gold.reshape(-1), ignore_index=PAD,
                           label_smoothing=tc.label_smoothing)


def _validation_loss(model: Seq2SeqModel, pairs, tc: TrainConfig) -> float:
    model.eval()
    losses, weights = [], []
    with torch.no_grad():
        for i in range(0, len(pairs), 32):
            batch = pairs[i : i + 32]
            losses.append(float(batch_loss(model, batch, tc)))
            weights.append(sum(len(g) for _, g in batch))
    model.train()
    return float(np.average(losses, weights=weights))


def train(
    model: Seq2SeqModel,
    data: ParallelCorpus,
    tc: TrainConfig,
    dev: ParallelCorpus | None = None,
    strict: bool = True,
) -> TrainResult:
    """Optimize the model in place; returns the loss curve.

    Training tokens must be inside the model vocabularies (pass
    strict=False for noisy synthetic corpora, where stray tokens fall back
    to the unknown symbol, as development tokens always do). Early
    stopping kicks in after ``patience`` consecutive validations without
    improvement, and the best-validation weights are restored on exit.
    """
    if not data.pairs:
        raise ValueError("training corpus is empty")
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)
    pairs = _encode_pairs(model, data, strict=strict)
    dev_pairs = _encode_pairs(model, dev, strict=False) if dev is not None else None

    optimizer = RectifiedAdam(
        (p for p in model.parameters() if p.requires_grad),
        lr=tc.lr_initial, betas=(tc.beta1, tc.beta2), eps=tc.eps,
    )
    result = TrainResult(steps=0)
    best_state = None
    bad_validations = 0
    model.train()
    stop = False
    while not stop:
        for batch in _batches(pairs, tc.batch_tokens, rng):
            if result.steps >= tc.max_steps:
                stop = True
                break
            lr = tc.lr_initial * (1.0 - result.steps / tc.max_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss = batch_loss(model, batch, tc)
            loss.backward()
            optimizer.step()
            result.steps += 1
            result.train_losses.append(loss.detach().item())

            if dev_pairs and result.steps % tc.validate_every == 0:
                val = _validation_loss(model, dev_pairs, tc)
                result.val_losses.append((result.steps, val))
                if result.best_val is None or val < result.best_val:
                    result.best_val = val
                    best_state = copy.deepcopy(model.state_dict())
                    bad_validations = 0
                else:
                    bad_validations += 1
                    if bad_validations >= tc.patience:
                        stop = True
                        break
        if tc.max_steps == 0:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


def _extend_softmax_vocab(model: Seq2SeqModel, new_tokens: list[str], seed: int) -> None:
    """Grow the decoder-side vocabulary to the union with ``new_tokens``.

    Existing rows keep their trained values; rows for unseen tokens are
    freshly initialized. This mirrors standard vocabulary expansion when a
    softmax model meets a new variety.
    """
    additions = [t for t in new_tokens if t not in model.tgt_index]
    if not additions:
        return
    torch.manual_seed(seed)
    d_model = model.config.d_model
    old_vocab = model.tgt_embed.weight.shape[0]
    new_vocab = old_vocab + len(additions)

    embed = torch.nn.Embedding(new_vocab, d_model, padding_idx=PAD)
    torch.nn.init.normal_(embed.weight, mean=0.0, std=d_model**-0.5)
    head = torch.nn.Linear(d_model, new_vocab)
    torch.nn.init.xavier_uniform_(head.weight)
    torch.nn.init.zeros_(head.bias)
    with torch.no_grad():
        embed.weight[:old_vocab] = model.tgt_embed.weight
        head.weight[:old_vocab] = model.head.weight
        head.bias[:old_vocab] = model.head.bias
    model.tgt_embed = embed
    model.head = head
    model.tgt_tokens = model.tgt_tokens + additions
    model._rebuild_token_maps()


def finetune(
    model: Seq2SeqModel,
    new_embedding,
    pseudo_data: ParallelCorpus,
    tc: TrainConfig,
    dev: ParallelCorpus | None = None,
    strict: bool = True,
) -> TrainResult:
    """Swap the decoder-side vocabulary and continue training.

    For the continuous head both frozen pretrained tables are replaced by
    ``new_embedding``'s exported vectors; every trainable parameter
    continues from its current value. For the softmax head the vocabulary
    is extended to the union instead.
    """
    if not pseudo_data.pairs:
        raise ValueError("finetuning corpus is empty")
    if model.config.head_kind == CONTINUOUS:
        model.set_decoder_tables(new_embedding)
    else:
        _extend_softmax_vocab(model, list(new_embedding.tokens), tc.seed)
    if tc.max_steps == 0:
        return TrainResult(steps=0)
    return train(model, pseudo_data, tc, dev, strict=strict)
