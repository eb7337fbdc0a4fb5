"""Command-line interface.

One subcommand per pipeline operation; `varmt pipeline` drives the whole
five-stage adaptation run from a config file.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import align, embed, evalfair, textproc, vmf
from .backtranslate import synthesize_pseudo_parallel, write_pseudo_corpus
from .mtmodel import (CONTINUOUS, ModelConfig, TrainConfig, build_model,
                      finetune, load_checkpoint, save_checkpoint, train,
                      translate_beam, translate_greedy)
from .backtranslate import ParallelCorpus
from .pipeline import PipelineConfig, evaluate_run, run_pipeline


def _cmd_learn_bpe(args) -> int:
    corpus = textproc.read_corpus(args.input)
    if args.input2:
        second = textproc.read_corpus(args.input2)
        codes = textproc.learn_joint_bpe(corpus, second, args.merges)
    else:
        codes = textproc.learn_bpe(corpus, args.merges)
    textproc.save_codes(codes, args.output)
    print(f"learned {codes.num_merges} merges -> {args.output}")
    return 0


def _cmd_apply_bpe(args) -> int:
    codes = textproc.load_codes(args.codes)
    corpus = textproc.read_corpus(args.input)
    textproc.write_corpus(textproc.tokenize_corpus(codes, corpus), args.output)
    return 0


def _cmd_train_embeddings(args) -> int:
    corpus = textproc.read_corpus(args.input)
    config = embed.SkipgramConfig(
        dim=args.dim, window=args.window, negatives=args.negatives,
        epochs=args.epochs, learning_rate=args.lr, bucket_count=args.buckets,
        min_count=args.min_count, min_n=args.min_n, max_n=args.max_n,
        seed=args.seed,
    )
    init = embed.load_model(args.init) if args.init else None
    model = embed.finalize(embed.train_embeddings(corpus, config, init))
    embed.save_model(model, args.output)
    if args.text_output:
        embed.save_text_vectors(model, args.text_output)
    print(f"trained {len(model.tokens)} vectors -> {args.output}")
    return 0


def _cmd_transfer_embeddings(args) -> int:
    parent = embed.load_model(args.parent)
    with open(args.vocab, encoding="utf-8") as f:
        vocab = [line.rstrip("\n") for line in f if line.strip()]
    model = embed.finalize(embed.transfer_init(parent, vocab, seed=args.seed))
    embed.save_model(model, args.output)
    print(f"transferred {len(model.tokens)} vectors -> {args.output}")
    return 0


def _cmd_align_embeddings(args) -> int:
    std_model = embed.load_model(args.std)
    tgt_model = embed.load_model(args.tgt)
    dictionary = align.build_seed_dictionary(std_model, tgt_model)
    x, y = align.seed_matrices(dictionary, std_model, tgt_model)
    alignment = align.procrustes(x, y)
    align.save_alignment(alignment, args.out)
    print(f"{dictionary.count} seed pairs -> {args.out}")
    return 0


def _cmd_apply_alignment(args) -> int:
    alignment = align.load_alignment(args.map)
    model = embed.load_model(args.model)
    embed.save_model(align.apply_alignment(alignment, model), args.out)
    return 0


def _read_parallel(src_path, tgt_path) -> ParallelCorpus:
    src = textproc.read_corpus(src_path).sentences
    tgt = textproc.read_corpus(tgt_path).sentences
    if len(src) != len(tgt):
        raise SystemExit("parallel files are not aligned")
    return ParallelCorpus(list(zip(src, tgt)))


def _train_config(args) -> TrainConfig:
    return TrainConfig(batch_tokens=args.batch_tokens, lr_initial=args.lr,
                       max_steps=args.max_steps, validate_every=args.validate_every,
                       patience=args.patience, seed=args.seed)


def _cmd_train_mt(args) -> int:
    data = _read_parallel(args.src, args.tgt)
    dev = _read_parallel(args.dev_src, args.dev_tgt) if args.dev_src else None
    src_vocab = textproc.token_vocabulary(
        textproc.MonoCorpus([a for a, _ in data.pairs]))
    head = "softmax" if args.softmax else CONTINUOUS
    tgt_embedding = embed.load_model(args.tgt_embedding) if args.tgt_embedding else None
    tgt_vocab = None
    if head == "softmax" and tgt_embedding is None:
        tgt_vocab = textproc.token_vocabulary(
            textproc.MonoCorpus([b for _, b in data.pairs]))
    config = ModelConfig(
        d_model=args.d_model, num_layers_enc=args.layers, num_layers_dec=args.layers,
        num_heads=args.heads, ffn_dim=args.ffn_dim, dropout_rate=args.dropout,
        embed_dim=tgt_embedding.dim if tgt_embedding else args.d_model,
        head_kind=head, max_len=args.max_len, seed=args.seed,
    )
    model = build_model(config, src_vocab, tgt_embedding, tgt_vocab)
    result = train(model, data, _train_config(args), dev)
    save_checkpoint(model, args.output)
    print(f"{result.steps} steps, best val {result.best_val} -> {args.output}")
    return 0


def _cmd_finetune_mt(args) -> int:
    model = load_checkpoint(args.model)
    new_embedding = embed.load_model(args.embedding)
    data = _read_parallel(args.src, args.tgt)
    dev = _read_parallel(args.dev_src, args.dev_tgt) if args.dev_src else None
    result = finetune(model, new_embedding, data, _train_config(args), dev,
                      strict=not args.lenient)
    save_checkpoint(model, args.output)
    print(f"{result.steps} steps, best val {result.best_val} -> {args.output}")
    return 0


def _cmd_translate(args) -> int:
    model = load_checkpoint(args.model)
    corpus = textproc.read_corpus(args.input)
    out = []
    for sentence in corpus.sentences:
        tokens = sentence.split()
        if model.config.head_kind == CONTINUOUS:
            result = translate_greedy(model, tokens)
        else:
            result = translate_beam(model, tokens, args.beam)
        out.append(" ".join(result.tokens))
    textproc.write_corpus(textproc.MonoCorpus(out), args.output)
    return 0


def _cmd_backtranslate(args) -> int:
    model = load_checkpoint(args.model)
    mono = textproc.read_corpus(args.mono)
    codes = textproc.load_codes(args.codes)
    pseudo, stats = synthesize_pseudo_parallel(model, mono, codes, beam=args.beam)
    write_pseudo_corpus(pseudo, stats, args.out)
    print(f"{stats.produced} pairs ({stats.dropped} dropped) -> {args.out}.src/.tgt")
    return 0


def _cmd_evaluate(args) -> int:
    hyps = textproc.read_corpus(args.hyp).sentences
    refs = textproc.read_corpus(args.ref).sentences
    score = evalfair.bleu(hyps, refs)
    print(score.format())
    return 0


def _cmd_fairness_report(args) -> int:
    scores: dict[str, float] = {}
    with open(args.scores, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                name, value = line.rstrip("\n").split("\t")
                scores[name] = float(value)
    pops = evalfair.read_populations(args.pops) if args.pops else {g: 1 for g in scores}
    groups = [(g, pops.get(g, 1), scores[g]) for g in scores]
    report = evalfair.unfairness_from_bleu(evalfair.BenefitVector(groups), args.alpha)
    print(report.format())
    return 0


def _cmd_vmf_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for dim in (3, 50, 300):
        for _ in range(args.trials):
            prediction = rng.normal(size=dim) * rng.uniform(0.5, 4.0)
            target = rng.normal(size=dim)
            target /= np.linalg.norm(target)
            value = vmf.nll_vmf_regularized(prediction, target, args.lambda1)
            h = 1e-5
            fd = np.empty(dim)
            for i in range(dim):
                up, down = prediction.copy(), prediction.copy()
                up[i] += h
                down[i] -= h
                fd[i] = (vmf.nll_vmf_regularized(up, target, args.lambda1).loss
                         - vmf.nll_vmf_regularized(down, target, args.lambda1).loss) / (2 * h)
            err = (np.max(np.abs(value.grad_wrt_prediction - fd))
                   / max(np.max(np.abs(fd)), 1e-12))
            worst = max(worst, err)
        print(f"dim {dim}: worst relative gradient error so far {worst:.3e}")
    print("PASS" if worst < 1e-4 else "FAIL")
    return 0 if worst < 1e-4 else 1


def _cmd_pipeline(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    stages = "abcde" if args.stage == "all" else args.stage
    run_pipeline(cfg, stages, args.ablation)
    if args.stage == "all":
        scores = evaluate_run(cfg)
        print(json.dumps(scores, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varmt",
                                     description="Adapt translation models to language varieties")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn-bpe", help="learn merge rules from a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--input2", help="second corpus for a joint model")
    p.add_argument("--merges", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_learn_bpe)

    p = sub.add_parser("apply-bpe", help="tokenize a corpus with learned codes")
    p.add_argument("--codes", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_apply_bpe)

    p = sub.add_parser("train-embeddings", help="train subword embeddings")
    p.add_argument("--input", required=True, help="tokenized corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--text-output")
    p.add_argument("--init", help="parent model to continue from")
    p.add_argument("--dim", type=int, default=48)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--buckets", type=int, default=65536)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--min-n", type=int, default=3)
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_train_embeddings)

    p = sub.add_parser("transfer-embeddings",
                       help="seed a model from a parent over a new vocabulary")
    p.add_argument("--parent", required=True)
    p.add_argument("--vocab", required=True, help="one token per line")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_transfer_embeddings)

    p = sub.add_parser("align-embeddings", help="fit an orthogonal alignment map")
    p.add_argument("--std", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_align_embeddings)

    p = sub.add_parser("apply-alignment", help="rotate a model into the standard space")
    p.add_argument("--map", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_apply_alignment)

    p = sub.add_parser("train-mt", help="train a translation model")
    p.add_argument("--src", required=True, help="tokenized source corpus")
    p.add_argument("--tgt", required=True, help="tokenized target corpus")
    p.add_argument("--dev-src")
    p.add_argument("--dev-tgt")
    p.add_argument("--tgt-embedding", help="finalized embedding model (continuous head)")
    p.add_argument("--softmax", action="store_true")
    p.add_argument("--output", required=True)
    p.add_argument("--d-model", type=int, default=96)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--ffn-dim", type=int, default=192)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--batch-tokens", type=int, default=2000)
    p.add_argument("--lr", type=float, default=7e-4)
    p.add_argument("--max-steps", type=int, default=3000)
    p.add_argument("--validate-every", type=int, default=250)
    p.add_argument("--patience", type=int, default=6)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_train_mt)

    p = sub.add_parser("finetune-mt", help="swap decoder vocabulary and continue training")
    p.add_argument("--model", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--dev-src")
    p.add_argument("--dev-tgt")
    p.add_argument("--lenient", action="store_true",
                   help="map stray tokens to the unknown symbol instead of failing")
    p.add_argument("--output", required=True)
    p.add_argument("--batch-tokens", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--max-steps", type=int, default=1500)
    p.add_argument("--validate-every", type=int, default=250)
    p.add_argument("--patience", type=int, default=6)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_finetune_mt)

    p = sub.add_parser("translate", help="decode a tokenized corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("backtranslate", help="synthesize a pseudo-parallel corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--mono", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--out", required=True, help="output stem")
    p.add_argument("--beam", type=int, default=4)
    p.set_defaults(func=_cmd_backtranslate)

    p = sub.add_parser("evaluate", help="corpus BLEU of hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("fairness-report", help="group fairness metrics from scores")
    p.add_argument("--scores", required=True, help="group<TAB>bleu per line")
    p.add_argument("--pops", help="group<TAB>population per line")
    p.add_argument("--alpha", type=float, default=2.0)
    p.set_defaults(func=_cmd_fairness_report)

    p = sub.add_parser("vmf-check", help="run the loss gradient self-check")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--lambda1", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_vmf_check)

    p = sub.add_parser("pipeline", help="run adaptation stages from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", default="all",
                   help="a, b, c, d, e, a substring like 'abc', or 'all'")
    p.add_argument("--ablation", choices=["softmax", "random-init", "scratch-embeddings"])
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
