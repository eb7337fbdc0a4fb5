"""Compact transformer encoder-decoder with a pluggable output head.

The continuous head predicts an embedding-dimensional vector per step and
is trained against frozen pretrained token vectors; the softmax head is a
conventional logit layer. Decoder-side pretrained tables are registered as
buffers, so they are excluded from every optimizer step by construction.

Vocabulary layout on both sides: indices 0..3 are PAD, BOS, EOS, UNK;
real tokens follow. On the continuous side the four specials have
trainable input vectors (pretrained corpora have no such tokens) while
their rows in the output table are fixed random unit vectors drawn at
build time.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..embed import EmbeddingModel
from .config import CONTINUOUS, SOFTMAX, ModelConfig

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ["<pad>", "<s>", "</s>", "<unk>"]
NUM_SPECIALS = len(SPECIALS)


def sinusoidal_encoding(max_len: int, d_model: int) -> torch.Tensor:
    position = torch.arange(max_len, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float32)
                    * (-math.log(10000.0) / d_model))
    enc = torch.zeros(max_len, d_model)
    enc[:, 0::2] = torch.sin(position * div)
    enc[:, 1::2] = torch.cos(position * div)
    return enc


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, num_heads: int, dropout: float):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, query, key, value, mask=None):
        """mask: broadcastable to (batch, heads, q_len, k_len); True keeps."""
        b, q_len, _ = query.shape
        k_len = key.shape[1]

        def split(x, length):
            return x.view(b, length, self.num_heads, self.head_dim).transpose(1, 2)

        q = split(self.q_proj(query), q_len)
        k = split(self.k_proj(key), k_len)
        v = split(self.v_proj(value), k_len)
        out = F.scaled_dot_product_attention(
            q, k, v, attn_mask=mask,
            dropout_p=self.dropout.p if self.training else 0.0,
        )
        out = out.transpose(1, 2).reshape(b, q_len, -1)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.inner = nn.Linear(d_model, ffn_dim)
        self.outer = nn.Linear(ffn_dim, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.outer(self.dropout(F.relu(self.inner(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout_rate)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, src_mask):
        h = self.norm1(x)
        x = x + self.dropout(self.self_attn(h, h, h, src_mask))
        x = x + self.dropout(self.ffn(self.norm2(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout_rate)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, memory, tgt_mask, memory_mask):
        h = self.norm1(x)
        x = x + self.dropout(self.self_attn(h, h, h, tgt_mask))
        h = self.norm2(x)
        x = x + self.dropout(self.cross_attn(h, memory, memory, memory_mask))
        x = x + self.dropout(self.ffn(self.norm3(x)))
        return x


class Seq2SeqModel(nn.Module):
    """Encoder-decoder over subword tokens.

    ``src_tokens`` / ``tgt_tokens`` list the real vocabulary entries;
    specials occupy ids 0..3 on both sides.
    """

    def __init__(self, config: ModelConfig, src_tokens: list[str], tgt_tokens: list[str]):
        super().__init__()
        self.config = config
        self.src_tokens = list(src_tokens)
        self.tgt_tokens = list(tgt_tokens)
        self._rebuild_token_maps()

        cfg = config
        self.src_embed = nn.Embedding(NUM_SPECIALS + len(src_tokens), cfg.d_model,
                                      padding_idx=PAD)
        self.register_buffer("pos_encoding",
                             sinusoidal_encoding(cfg.max_len + 2, cfg.d_model),
                             persistent=False)
        self.enc_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers_enc))
        self.enc_norm = nn.LayerNorm(cfg.d_model)
        self.dec_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.num_layers_dec))
        self.dec_norm = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout_rate)

        if cfg.head_kind == CONTINUOUS:
            # Frozen pretrained vectors: input table (real tokens only) and
            # the decode-time output table (specials + real tokens).
            self.dec_special_embed = nn.Parameter(torch.empty(NUM_SPECIALS, cfg.embed_dim))
            self.register_buffer("dec_input_table",
                                 torch.zeros(len(tgt_tokens), cfg.embed_dim))
            self.register_buffer("output_table",
                                 torch.zeros(NUM_SPECIALS + len(tgt_tokens), cfg.embed_dim))
            self.dec_in_proj = nn.Linear(cfg.embed_dim, cfg.d_model)
            self.head = nn.Linear(cfg.d_model, cfg.embed_dim)
        else:
            self.tgt_embed = nn.Embedding(NUM_SPECIALS + len(tgt_tokens), cfg.d_model,
                                          padding_idx=PAD)
            self.head = nn.Linear(cfg.d_model, NUM_SPECIALS + len(tgt_tokens))

    # ---- vocabulary ----

    def _rebuild_token_maps(self):
        self.src_index = {t: i + NUM_SPECIALS for i, t in enumerate(self.src_tokens)}
        self.tgt_index = {t: i + NUM_SPECIALS for i, t in enumerate(self.tgt_tokens)}

    def src_to_ids(self, tokens: list[str], strict: bool = False) -> list[int]:
        return self._to_ids(tokens, self.src_index, strict)

    def tgt_to_ids(self, tokens: list[str], strict: bool = False) -> list[int]:
        return self._to_ids(tokens, self.tgt_index, strict)

    @staticmethod
    def _to_ids(tokens, index, strict):
        ids = []
        for t in tokens:
            i = index.get(t)
            if i is None:
                if strict:
                    raise ValueError(f"token {t!r} is outside the vocabulary")
                i = UNK
            ids.append(i)
        return ids

    def tgt_token_of(self, idx: int) -> str:
        if idx < NUM_SPECIALS:
            return SPECIALS[idx]
        return self.tgt_tokens[idx - NUM_SPECIALS]

    # ---- frozen tables ----

    def set_decoder_tables(self, embedding: EmbeddingModel,
                           special_rows: torch.Tensor | None = None) -> None:
        """Install frozen pretrained vectors for the decoder.

        ``special_rows`` keeps the existing output rows for the special
        symbols when omitted (used on table swaps during finetuning).
        """
        if self.config.head_kind != CONTINUOUS:
            raise ValueError("softmax models have no pretrained tables")
        if embedding.dim != self.config.embed_dim:
            raise ValueError("embedding dimensionality does not match the model")
        if not embedding.finalized:
            raise ValueError("embedding model must be finalized")
        table = torch.from_numpy(embedding.exported.copy()).float()
        if special_rows is None:
            special_rows = self.output_table[:NUM_SPECIALS].clone()
        self.tgt_tokens = list(embedding.tokens)
        self._rebuild_token_maps()
        self.dec_input_table = table
        self.output_table = torch.cat([special_rows, table], dim=0)

    # ---- forward pieces ----

    def _positional(self, x):
        return self.dropout(x + self.pos_encoding[: x.shape[1]])

    def encode(self, src_ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        src_mask = (src_ids != PAD)[:, None, None, :]
        x = self._positional(self.src_embed(src_ids) * math.sqrt(self.config.d_model))
        for layer in self.enc_layers:
            x = layer(x, src_mask)
        return self.enc_norm(x), src_mask

    def _decoder_input(self, tgt_in_ids: torch.Tensor) -> torch.Tensor:
        if self.config.head_kind == CONTINUOUS:
            full_table = torch.cat([self.dec_special_embed, self.dec_input_table], dim=0)
            vectors = F.embedding(tgt_in_ids, full_table)
            return self.dec_in_proj(vectors)
        return self.tgt_embed(tgt_in_ids) * math.sqrt(self.config.d_model)

    def decode(self, tgt_in_ids: torch.Tensor, memory: torch.Tensor,
               memory_mask: torch.Tensor) -> torch.Tensor:
        t = tgt_in_ids.shape[1]
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool,
                                       device=tgt_in_ids.device))
        tgt_mask = causal[None, None] & (tgt_in_ids != PAD)[:, None, None, :]
        x = self._positional(self._decoder_input(tgt_in_ids))
        for layer in self.dec_layers:
            x = layer(x, memory, tgt_mask, memory_mask)
        return self.dec_norm(x)

    def forward(self, src_ids: torch.Tensor, tgt_in_ids: torch.Tensor) -> torch.Tensor:
        """Teacher-forced pass; returns head outputs per target position:
        predicted vectors (continuous) or logits (softmax)."""
        memory, src_mask = self.encode(src_ids)
        hidden = self.decode(tgt_in_ids, memory, src_mask)
        return self.head(hidden)


def _init_parameters(model: Seq2SeqModel) -> None:
    for module in model.modules():
        if isinstance(module, nn.Linear):
            nn.init.xavier_uniform_(module.weight)
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
    nn.init.normal_(model.src_embed.weight, mean=0.0,
                    std=model.config.d_model ** -0.5)
    with torch.no_grad():
        model.src_embed.weight[PAD].zero_()
    if model.config.head_kind == SOFTMAX:
        nn.init.normal_(model.tgt_embed.weight, mean=0.0,
                        std=model.config.d_model ** -0.5)
        with torch.no_grad():
            model.tgt_embed.weight[PAD].zero_()
    else:
        nn.init.normal_(model.dec_special_embed, mean=0.0,
                        std=model.config.embed_dim ** -0.5)


def build_model(
    config: ModelConfig,
    src_vocab: list[str],
    tgt_embedding: EmbeddingModel | None = None,
    tgt_vocab: list[str] | None = None,
) -> Seq2SeqModel:
    """Construct a seeded model.

    The continuous head requires ``tgt_embedding`` (finalized); its
    exported vectors become the frozen decoder tables. The softmax head
    takes the target vocabulary from ``tgt_vocab`` or, if absent, from
    ``tgt_embedding``'s token list.
    """
    torch.manual_seed(config.seed)
    if config.head_kind == CONTINUOUS:
        if tgt_embedding is None:
            raise ValueError("continuous head requires a target embedding model")
        if tgt_embedding.dim != config.embed_dim:
            raise ValueError("embed_dim does not match the embedding model")
        tokens = list(tgt_embedding.tokens)
    else:
        if tgt_vocab is None:
            if tgt_embedding is None:
                raise ValueError("softmax head requires a target vocabulary")
            tokens = list(tgt_embedding.tokens)
        else:
            tokens = list(tgt_vocab)
    model = Seq2SeqModel(config, src_vocab, tokens)
    _init_parameters(model)
    if config.head_kind == CONTINUOUS:
        special_rows = torch.randn(NUM_SPECIALS, config.embed_dim)
        special_rows = special_rows / special_rows.norm(dim=1, keepdim=True)
        model.set_decoder_tables(tgt_embedding, special_rows)
    return model
