"""Five-stage adaptation pipeline with cached, checksummed artifacts.

Stages (letters name the run subdirectories):
  a: subword codes (source, standard, joint) + standard embeddings
  b: source-to-standard model predicting pretrained vectors
  c: reverse standard-to-source model + back-translated pseudo corpus
  d: variety embeddings seeded from the standard model, then aligned
  e: finetuned source-to-variety model

Each stage writes a manifest recording its configuration hash and the
checksums of inputs and outputs, so reruns are verifiable and any stage
can be rebuilt from upstream artifacts alone. Ablation arms swap exactly
one ingredient: a softmax head, a randomly initialized finetune start, or
variety embeddings trained from scratch.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass

import torch

from . import align, embed, evalfair, textproc
from .backtranslate import (GOLD, ParallelCorpus, synthesize_pseudo_parallel,
                            train_reverse_model, write_pseudo_corpus,
                            read_pseudo_corpus)
from .mtmodel import (CONTINUOUS, SOFTMAX, ModelConfig, TrainConfig,
                      build_model, finetune, load_checkpoint, save_checkpoint,
                      train, translate_beam, translate_greedy)

STAGES = "abcde"
ABLATIONS = ("softmax", "random-init", "scratch-embeddings")


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    parser: configparser.ConfigParser
    run_dir: str

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path, encoding="utf-8")
        if not read:
            raise PipelineError(f"cannot read config file {path}")
        run_dir = parser.get("pipeline", "run_dir", fallback="run")
        return cls(parser, run_dir)

    # -- typed accessors -------------------------------------------------

    def data_path(self, key: str) -> str:
        try:
            return self.parser.get("data", key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            raise PipelineError(f"config is missing data path {key!r}")

    @property
    def seed(self) -> int:
        return self.parser.getint("pipeline", "seed", fallback=1)

    @property
    def single_thread(self) -> bool:
        return self.parser.getboolean("pipeline", "single_thread", fallback=True)

    @property
    def bpe_merges(self) -> int:
        return self.parser.getint("bpe", "merges", fallback=500)

    def skipgram_config(self) -> embed.SkipgramConfig:
        s = self.parser["embeddings"] if self.parser.has_section("embeddings") else {}
        get = lambda k, d: int(s.get(k, d))
        return embed.SkipgramConfig(
            dim=get("dim", 48),
            window=get("window", 5),
            negatives=get("negatives", 5),
            epochs=get("epochs", 5),
            learning_rate=float(s.get("learning_rate", 0.05)),
            bucket_count=get("bucket_count", 65536),
            min_count=get("min_count", 1),
            min_n=get("min_n", 3),
            max_n=get("max_n", 6),
            seed=get("seed", self.seed),
        )

    def model_config(self, head_kind: str) -> ModelConfig:
        s = self.parser["model"] if self.parser.has_section("model") else {}
        get = lambda k, d: int(s.get(k, d))
        return ModelConfig(
            d_model=get("d_model", 96),
            num_layers_enc=get("layers_enc", 2),
            num_layers_dec=get("layers_dec", 2),
            num_heads=get("heads", 4),
            ffn_dim=get("ffn_dim", 192),
            dropout_rate=float(s.get("dropout", 0.1)),
            embed_dim=self.skipgram_config().dim,
            head_kind=head_kind,
            max_len=get("max_len", 64),
            seed=get("seed", self.seed),
        )

    def train_config(self, section: str) -> TrainConfig:
        s = self.parser[section] if self.parser.has_section(section) else {}
        get = lambda k, d: int(s.get(k, d))
        return TrainConfig(
            batch_tokens=get("batch_tokens", 2000),
            lr_initial=float(s.get("lr", 7e-4)),
            max_steps=get("max_steps", 3000),
            validate_every=get("validate_every", 250),
            patience=get("patience", 6),
            label_smoothing=float(s.get("label_smoothing", 0.1)),
            vmf_lambda1=float(s.get("vmf_lambda1", 0.02)),
            seed=get("seed", self.seed),
        )

    def backtranslate_beam(self) -> int:
        if self.parser.has_section("train_c"):
            return int(self.parser["train_c"].get("beam", 4))
        return 4

    def stage_dir(self, letter: str) -> str:
        return os.path.join(self.run_dir, letter)

    def artifact(self, letter: str, name: str) -> str:
        return os.path.join(self.stage_dir(letter), name)

    def config_hash(self, sections: list[str]) -> str:
        lines = []
        for section in sorted(sections):
            if not self.parser.has_section(section):
                continue
            for key, value in sorted(self.parser.items(section)):
                lines.append(f"{section}.{key}={value}")
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(cfg: PipelineConfig, letter: str, sections: list[str],
                    inputs: list[str], outputs: list[str], notes: dict) -> None:
    manifest = {
        "stage": letter,
        "config_hash": cfg.config_hash(sections),
        "inputs": {p: sha256_file(p) for p in inputs},
        "outputs": {p: sha256_file(p) for p in outputs},
        "notes": notes,
    }
    with open(cfg.artifact(letter, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _require(cfg: PipelineConfig, letter: str, *paths: str) -> None:
    for p in paths:
        if not os.path.exists(p):
            raise PipelineError(f"stage {letter}: missing dependency {p}")


def _read_parallel(cfg: PipelineConfig, src_key: str, std_key: str) -> ParallelCorpus:
    src = textproc.read_corpus(cfg.data_path(src_key))
    std = textproc.read_corpus(cfg.data_path(std_key))
    if len(src) != len(std):
        raise PipelineError(f"{src_key}/{std_key} are not aligned")
    return ParallelCorpus(list(zip(src.sentences, std.sentences)), origin=GOLD)


def _tokenize_pairs(pairs, src_codes, tgt_codes) -> ParallelCorpus:
    src_cache: dict = {}
    tgt_cache: dict = {}
    out = []
    for a, b in pairs:
        ta = " ".join(textproc.apply_bpe(src_codes, a, src_cache))
        tb = " ".join(textproc.apply_bpe(tgt_codes, b, tgt_cache))
        out.append((ta, tb))
    return ParallelCorpus(out, origin=GOLD)


# --------------------------------------------------------------------------
# stages


def run_stage_a(cfg: PipelineConfig) -> None:
    """Subword codes and standard-language embeddings."""
    os.makedirs(cfg.stage_dir("a"), exist_ok=True)
    parallel = _read_parallel(cfg, "train_src", "train_std")
    std_mono = textproc.read_corpus(cfg.data_path("std_mono"), "std")
    tgt_mono = textproc.read_corpus(cfg.data_path("tgt_mono"), "tgt")

    src_corpus = textproc.MonoCorpus([a for a, _ in parallel.pairs], "src")
    std_corpus = textproc.MonoCorpus([b for _, b in parallel.pairs], "std")
    codes_src = textproc.learn_bpe(src_corpus, cfg.bpe_merges)
    codes_std = textproc.learn_bpe(std_corpus, cfg.bpe_merges)
    codes_joint = textproc.learn_joint_bpe(std_mono, tgt_mono, cfg.bpe_merges)
    textproc.save_codes(codes_src, cfg.artifact("a", "codes_src.txt"))
    textproc.save_codes(codes_std, cfg.artifact("a", "codes_std.txt"))
    textproc.save_codes(codes_joint, cfg.artifact("a", "codes_joint.txt"))

    tokenized = textproc.tokenize_corpus(codes_std, std_mono)
    model = embed.train_embeddings(tokenized, cfg.skipgram_config())
    model = embed.finalize(model)
    embed.save_model(model, cfg.artifact("a", "std_emb.vmeb"))

    _write_manifest(
        cfg, "a", ["bpe", "embeddings"],
        inputs=[cfg.data_path(k) for k in ("train_src", "train_std", "std_mono", "tgt_mono")],
        outputs=[cfg.artifact("a", n) for n in
                 ("codes_src.txt", "codes_std.txt", "codes_joint.txt", "std_emb.vmeb")],
        notes={"zero_norm_tokens": len(model.zero_norm_tokens)},
    )


def run_stage_b(cfg: PipelineConfig, ablation: str | None = None) -> None:
    """Source-to-standard model (continuous head unless ablated)."""
    os.makedirs(cfg.stage_dir("b"), exist_ok=True)
    _require(cfg, "b", cfg.artifact("a", "codes_src.txt"),
             cfg.artifact("a", "codes_std.txt"), cfg.artifact("a", "std_emb.vmeb"))
    codes_src = textproc.load_codes(cfg.artifact("a", "codes_src.txt"))
    codes_std = textproc.load_codes(cfg.artifact("a", "codes_std.txt"))
    std_emb = embed.load_model(cfg.artifact("a", "std_emb.vmeb"))

    head = SOFTMAX if ablation == "softmax" else CONTINUOUS
    data = _tokenize_pairs(_read_parallel(cfg, "train_src", "train_std").pairs,
                           codes_src, codes_std)
    dev = _tokenize_pairs(_read_parallel(cfg, "dev_src", "dev_std").pairs,
                          codes_src, codes_std)
    src_vocab = textproc.token_vocabulary(
        textproc.MonoCorpus([a for a, _ in data.pairs]))
    model = build_model(cfg.model_config(head), src_vocab, std_emb)
    result = train(model, data, cfg.train_config("train_b"), dev)
    save_checkpoint(model, cfg.artifact("b", "model_b.vmmt"))
    with open(cfg.artifact("b", "curve_b.json"), "w", encoding="utf-8") as f:
        json.dump({"train": result.train_losses, "val": result.val_losses,
                   "steps": result.steps}, f)
        f.write("\n")

    _write_manifest(
        cfg, "b", ["bpe", "embeddings", "model", "train_b"],
        inputs=[cfg.artifact("a", n) for n in
                ("codes_src.txt", "codes_std.txt", "std_emb.vmeb")]
               + [cfg.data_path(k) for k in ("train_src", "train_std")],
        outputs=[cfg.artifact("b", "model_b.vmmt")],
        notes={"head": head, "steps": result.steps, "best_val": result.best_val,
               "ablation": ablation},
    )


def run_stage_c(cfg: PipelineConfig) -> None:
    """Reverse model and back-translated pseudo corpus."""
    os.makedirs(cfg.stage_dir("c"), exist_ok=True)
    _require(cfg, "c", cfg.artifact("a", "codes_src.txt"),
             cfg.artifact("a", "codes_std.txt"), cfg.artifact("a", "codes_joint.txt"))
    codes_src = textproc.load_codes(cfg.artifact("a", "codes_src.txt"))
    codes_std = textproc.load_codes(cfg.artifact("a", "codes_std.txt"))
    codes_joint = textproc.load_codes(cfg.artifact("a", "codes_joint.txt"))

    forward = _tokenize_pairs(_read_parallel(cfg, "train_src", "train_std").pairs,
                              codes_src, codes_std)
    dev_forward = _tokenize_pairs(_read_parallel(cfg, "dev_src", "dev_std").pairs,
                                  codes_src, codes_std)
    reverse_model = train_reverse_model(
        forward.reversed(), cfg.train_config("train_c"),
        cfg.model_config(SOFTMAX), dev_forward.reversed())
    save_checkpoint(reverse_model, cfg.artifact("c", "reverse.vmmt"))

    tgt_mono = textproc.read_corpus(cfg.data_path("tgt_mono"), "tgt")
    pseudo, stats = synthesize_pseudo_parallel(
        reverse_model, tgt_mono, codes_joint, beam=cfg.backtranslate_beam())
    write_pseudo_corpus(pseudo, stats, cfg.artifact("c", "pseudo"))

    _write_manifest(
        cfg, "c", ["bpe", "model", "train_c"],
        inputs=[cfg.artifact("a", n) for n in
                ("codes_src.txt", "codes_std.txt", "codes_joint.txt")]
               + [cfg.data_path("tgt_mono")],
        outputs=[cfg.artifact("c", "reverse.vmmt"),
                 cfg.artifact("c", "pseudo.src"), cfg.artifact("c", "pseudo.tgt")],
        notes={"produced": stats.produced, "dropped": stats.dropped,
               "shares_codes_with_stage_b": True},
    )


def run_stage_d(cfg: PipelineConfig, ablation: str | None = None) -> None:
    """Variety embeddings: transferred (or from scratch), then aligned."""
    os.makedirs(cfg.stage_dir("d"), exist_ok=True)
    _require(cfg, "d", cfg.artifact("a", "codes_joint.txt"),
             cfg.artifact("a", "std_emb.vmeb"))
    codes_joint = textproc.load_codes(cfg.artifact("a", "codes_joint.txt"))
    std_emb = embed.load_model(cfg.artifact("a", "std_emb.vmeb"))

    tgt_mono = textproc.read_corpus(cfg.data_path("tgt_mono"), "tgt")
    tokenized = textproc.tokenize_corpus(codes_joint, tgt_mono)
    init = None if ablation == "scratch-embeddings" else std_emb
    tgt_model = embed.train_embeddings(tokenized, cfg.skipgram_config(), init=init)
    tgt_model = embed.finalize(tgt_model)

    dictionary = align.build_seed_dictionary(std_emb, tgt_model)
    x, y = align.seed_matrices(dictionary, std_emb, tgt_model)
    alignment = align.procrustes(x, y)
    aligned = align.apply_alignment(alignment, tgt_model)
    align.save_alignment(alignment, cfg.artifact("d", "alignment.txt"))
    embed.save_model(aligned, cfg.artifact("d", "tgt_emb_aligned.vmeb"))

    _write_manifest(
        cfg, "d", ["bpe", "embeddings"],
        inputs=[cfg.artifact("a", "codes_joint.txt"),
                cfg.artifact("a", "std_emb.vmeb"), cfg.data_path("tgt_mono")],
        outputs=[cfg.artifact("d", "alignment.txt"),
                 cfg.artifact("d", "tgt_emb_aligned.vmeb")],
        notes={"seed_pairs": dictionary.count, "ablation": ablation},
    )


def run_stage_e(cfg: PipelineConfig, ablation: str | None = None) -> None:
    """Finetune towards the variety on the pseudo-parallel corpus."""
    os.makedirs(cfg.stage_dir("e"), exist_ok=True)
    _require(cfg, "e", cfg.artifact("b", "model_b.vmmt"),
             cfg.artifact("c", "pseudo.src"), cfg.artifact("c", "pseudo.tgt"),
             cfg.artifact("d", "tgt_emb_aligned.vmeb"))
    codes_src = textproc.load_codes(cfg.artifact("a", "codes_src.txt"))
    codes_joint = textproc.load_codes(cfg.artifact("a", "codes_joint.txt"))
    tgt_emb = embed.load_model(cfg.artifact("d", "tgt_emb_aligned.vmeb"))

    if ablation == "random-init":
        reference = load_checkpoint(cfg.artifact("b", "model_b.vmmt"))
        model = build_model(cfg.model_config(reference.config.head_kind),
                            reference.src_tokens,
                            tgt_emb if reference.config.head_kind == CONTINUOUS else None,
                            tgt_vocab=reference.tgt_tokens)
    else:
        model = load_checkpoint(cfg.artifact("b", "model_b.vmmt"))

    pseudo = read_pseudo_corpus(cfg.artifact("c", "pseudo"))
    tokenized = _tokenize_pairs(pseudo.pairs, codes_src, codes_joint)
    n_dev = max(1, len(tokenized.pairs) // 20)
    dev = ParallelCorpus(tokenized.pairs[-n_dev:], GOLD)
    data = ParallelCorpus(tokenized.pairs[:-n_dev], GOLD)
    result = finetune(model, tgt_emb, data, cfg.train_config("train_e"), dev,
                      strict=False)
    save_checkpoint(model, cfg.artifact("e", "model_e.vmmt"))
    with open(cfg.artifact("e", "curve_e.json"), "w", encoding="utf-8") as f:
        json.dump({"train": result.train_losses, "val": result.val_losses,
                   "steps": result.steps}, f)
        f.write("\n")

    _write_manifest(
        cfg, "e", ["bpe", "embeddings", "model", "train_e"],
        inputs=[cfg.artifact("b", "model_b.vmmt"), cfg.artifact("c", "pseudo.src"),
                cfg.artifact("c", "pseudo.tgt"),
                cfg.artifact("d", "tgt_emb_aligned.vmeb")],
        outputs=[cfg.artifact("e", "model_e.vmmt")],
        notes={"ablation": ablation, "steps": result.steps,
               "best_val": result.best_val},
    )


_STAGE_RUNNERS = {
    "a": lambda cfg, ablation: run_stage_a(cfg),
    "b": run_stage_b,
    "c": lambda cfg, ablation: run_stage_c(cfg),
    "d": run_stage_d,
    "e": run_stage_e,
}


def run_pipeline(cfg: PipelineConfig, stages: str = STAGES,
                 ablation: str | None = None) -> None:
    if ablation is not None and ablation not in ABLATIONS:
        raise PipelineError(f"unknown ablation {ablation!r}")
    for letter in stages:
        if letter not in STAGES:
            raise PipelineError(f"unknown stage {letter!r}")
    if cfg.single_thread:
        torch.set_num_threads(1)
    for letter in stages:
        _STAGE_RUNNERS[letter](cfg, ablation)


def _decode_corpus(model, sentences: list[str], codes_src, beam: int | None) -> list[str]:
    cache: dict = {}
    hyps = []
    for sentence in sentences:
        tokens = [str(t) for t in textproc.apply_bpe(codes_src, sentence, cache)]
        if model.config.head_kind == CONTINUOUS:
            out = translate_greedy(model, tokens)
        else:
            out = translate_beam(model, tokens, beam or 4)
        try:
            hyps.append(textproc.restore_bpe(out.tokens))
        except ValueError:
            hyps.append("")
    return hyps


def evaluate_run(cfg: PipelineConfig) -> dict:
    """Score the adapted model and the non-adapted baseline on the variety
    test set; writes scores.json under the run directory."""
    _require(cfg, "evaluate", cfg.artifact("a", "codes_src.txt"),
             cfg.artifact("b", "model_b.vmmt"), cfg.artifact("e", "model_e.vmmt"))
    codes_src = textproc.load_codes(cfg.artifact("a", "codes_src.txt"))
    test_src = textproc.read_corpus(cfg.data_path("test_src")).sentences
    test_refs = textproc.read_corpus(cfg.data_path("test_tgt")).sentences
    if cfg.single_thread:
        torch.set_num_threads(1)

    baseline_model = load_checkpoint(cfg.artifact("b", "model_b.vmmt"))
    adapted_model = load_checkpoint(cfg.artifact("e", "model_e.vmmt"))
    beam = cfg.backtranslate_beam()
    baseline_hyps = _decode_corpus(baseline_model, test_src, codes_src, beam)
    adapted_hyps = _decode_corpus(adapted_model, test_src, codes_src, beam)
    scores = {
        "baseline_bleu": evalfair.bleu(baseline_hyps, test_refs).score,
        "adapted_bleu": evalfair.bleu(adapted_hyps, test_refs).score,
        "n_test": len(test_src),
    }
    os.makedirs(cfg.run_dir, exist_ok=True)
    with open(os.path.join(cfg.run_dir, "scores.json"), "w", encoding="utf-8") as f:
        json.dump(scores, f, indent=2)
        f.write("\n")
    return scores
