"""Corpus BLEU, rare-word accuracy, and group fairness metrics.

BLEU follows the WMT convention: the internal "13a" tokenization, four
modified n-gram precisions, an exponential brevity penalty, and no
smoothing, so a corpus with zero matching 4-grams scores 0. Fairness is
measured over per-group benefit values with the generalized entropy index
and its exact within/between-group decomposition.
"""

from __future__ import annotations

import collections
import math
import re
from dataclasses import dataclass

NGRAM_ORDER = 4

_LOG_ZERO = -9999999999.0


def tokenize_13a(line: str) -> str:
    """Minimal WMT-compatible tokenization; returns a space-joined string."""
    norm = line
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")

    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    norm = re.sub(r"\s+", " ", norm)
    return norm.strip()


@dataclass
class BleuScore:
    score: float
    precisions: list[float]  # percentages, orders 1..4
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def format(self) -> str:
        ps = "/".join(f"{p:.1f}" for p in self.precisions)
        return (f"BLEU = {self.score:.2f} {ps} "
                f"(BP = {self.brevity_penalty:.3f} "
                f"hyp_len = {self.hyp_len} ref_len = {self.ref_len})")


def _count_ngrams(tokens: list[str], max_order: int = NGRAM_ORDER) -> collections.Counter:
    grams = collections.Counter()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            grams[tuple(tokens[i:i + n])] += 1
    return grams


def _floored_log(value: float) -> float:
    return math.log(value) if value > 0.0 else _LOG_ZERO


def bleu(hypotheses: list[str], references: list[str], tokenize: bool = True) -> BleuScore:
    """Corpus-level BLEU-4 of detokenized hypotheses against references.

    One reference per hypothesis. Set tokenize=False if both sides are
    already tokenized (space-separated).
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis and reference counts differ")
    if not references:
        raise ValueError("empty reference set")

    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        if tokenize:
            hyp, ref = tokenize_13a(hyp.rstrip()), tokenize_13a(ref.rstrip())
        hyp_tokens, ref_tokens = hyp.split(), ref.split()
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        ref_grams = _count_ngrams(ref_tokens)
        for gram, count in _count_ngrams(hyp_tokens).items():
            n = len(gram)
            correct[n - 1] += min(count, ref_grams.get(gram, 0))
            total[n - 1] += count

    precisions = [0.0] * NGRAM_ORDER
    for n in range(1, NGRAM_ORDER + 1):
        if total[n - 1] == 0:
            break
        precisions[n - 1] = 100.0 * correct[n - 1] / total[n - 1]

    if hyp_len == 0:
        brevity_penalty = 0.0
    elif hyp_len < ref_len:
        brevity_penalty = math.exp(1.0 - ref_len / hyp_len)
    else:
        brevity_penalty = 1.0
    # Geometric mean over precision fractions so a perfect corpus scores
    # exactly 100 despite rounding in log/exp.
    score = 100.0 * brevity_penalty * math.exp(
        sum(_floored_log(p / 100.0) for p in precisions) / NGRAM_ORDER)
    return BleuScore(score, precisions, brevity_penalty, hyp_len, ref_len)


DEFAULT_FREQ_BUCKETS = [1, 2, 3, 4, 5, 10, 100, 1000]


def rare_word_accuracy(
    hypotheses: list[str],
    references: list[str],
    freq_table: dict[str, int],
    buckets: list[int] = DEFAULT_FREQ_BUCKETS,
) -> dict[str, float]:
    """Bag-of-words recall of reference words, grouped by corpus frequency.

    Buckets are defined by consecutive boundaries: [b0], [b1], ... for unit
    gaps and half-open ranges [bi, bi+1) otherwise; words outside every
    bucket are ignored. Empty buckets are absent from the result rather
    than reported as zero. Matching is case-sensitive over whitespace
    tokens.
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis and reference counts differ")
    if sorted(buckets) != list(buckets) or len(buckets) < 2:
        raise ValueError("buckets must be an ascending boundary list")

    def bucket_label(freq: int) -> str | None:
        for lo, hi in zip(buckets, buckets[1:]):
            if lo <= freq < hi:
                return str(lo) if hi == lo + 1 else f"[{lo},{hi})"
        return None

    hits: dict[str, int] = collections.defaultdict(int)
    totals: dict[str, int] = collections.defaultdict(int)
    for hyp, ref in zip(hypotheses, references):
        hyp_counts = collections.Counter(hyp.split())
        for word, count in collections.Counter(ref.split()).items():
            label = bucket_label(freq_table.get(word, 0))
            if label is None:
                continue
            totals[label] += count
            hits[label] += min(count, hyp_counts[word])
    return {label: hits[label] / totals[label] for label in totals}


@dataclass
class BenefitVector:
    """Per-group benefit values with population sizes."""

    groups: list[tuple[str, int, float]]  # (name, population, benefit)

    def __post_init__(self):
        if not self.groups:
            raise ValueError("need at least one group")
        for name, pop, benefit in self.groups:
            if pop <= 0:
                raise ValueError(f"group {name!r} has non-positive population")
            if benefit < 0:
                raise ValueError(f"group {name!r} has negative benefit")

    @property
    def benefits(self) -> list[float]:
        return [b for _, _, b in self.groups]

    @property
    def populations(self) -> list[int]:
        return [p for _, p, _ in self.groups]


@dataclass
class FairnessReport:
    avg_macro: float
    avg_pop: float
    max_min: float
    alpha: float
    unfair_total: float
    unfair_within: float
    unfair_between: float

    def format(self) -> str:
        lines = [
            f"avg_L = {self.avg_macro:.1f}",
            f"avg_pop = {self.avg_pop:.1f}",
            f"max-min = {self.max_min:.1f}",
            f"alpha = {self.alpha:g}",
            f"unfair_total = {self.unfair_total:.3f}",
            f"unfair_within = {self.unfair_within:.3f}",
            f"unfair_between = {self.unfair_between:.3f}",
        ]
        return "\n".join(lines)


def macro_avg(benefits: BenefitVector) -> float:
    """Unweighted mean of group benefits."""
    values = benefits.benefits
    return sum(values) / len(values)


def pop_weighted_avg(benefits: BenefitVector) -> float:
    """Population-weighted mean of group benefits."""
    total_pop = sum(benefits.populations)
    if total_pop == 0:
        raise ValueError("total population is zero")
    return sum(p * b for _, p, b in benefits.groups) / total_pop


def max_min(benefits: BenefitVector) -> float:
    values = benefits.benefits
    return max(values) - min(values)


def generalized_entropy(individual_benefits, alpha: float) -> float:
    """Generalized entropy index of a benefit vector.

    E^alpha = 1/(n alpha (alpha-1)) * sum_i [(b_i / mean)^alpha - 1].
    At alpha = 2 this equals half the squared coefficient of variation.
    """
    if alpha in (0.0, 1.0):
        raise ValueError("alpha must not be 0 or 1")
    values = list(individual_benefits)
    if not values:
        raise ValueError("empty benefit vector")
    n = len(values)
    mu = sum(values) / n
    if mu <= 0:
        raise ValueError("mean benefit must be positive")
    return sum((b / mu) ** alpha - 1.0 for b in values) / (n * alpha * (alpha - 1.0))


def entropy_decomposition(groups, alpha: float) -> tuple[float, float, float]:
    """(total, within, between) generalized entropy over grouped benefits.

    within  = sum_g (n_g/n) (mu_g/mu)^alpha E^alpha(group g)
    between = sum_g n_g / (n alpha (alpha-1)) [(mu_g/mu)^alpha - 1]

    The returned total is their sum and equals the index of the pooled
    vector.
    """
    if alpha in (0.0, 1.0):
        raise ValueError("alpha must not be 0 or 1")
    group_lists = [list(g) for g in groups]
    if not group_lists or any(not g for g in group_lists):
        raise ValueError("every group must be nonempty")
    n = sum(len(g) for g in group_lists)
    mu = sum(sum(g) for g in group_lists) / n
    if mu <= 0:
        raise ValueError("mean benefit must be positive")
    within = 0.0
    between = 0.0
    for g in group_lists:
        n_g = len(g)
        mu_g = sum(g) / n_g
        ratio = (mu_g / mu) ** alpha
        if mu_g > 0:
            within += (n_g / n) * ratio * generalized_entropy(g, alpha)
        # mu_g == 0 forces a constant-zero group, whose index is 0
        between += n_g / (n * alpha * (alpha - 1.0)) * (ratio - 1.0)
    return within + between, within, between


def unfairness_from_bleu(benefits: BenefitVector, alpha: float = 2.0) -> FairnessReport:
    """Full fairness report for groups whose benefit is a BLEU score.

    Every group expands (virtually) to ``population`` individuals sharing
    benefit BLEU/100, so the within-group term is zero by construction and
    the between-group term is evaluated in closed form with population
    weights. Averages and max-min are reported on the raw BLEU scale.
    """
    if alpha in (0.0, 1.0):
        raise ValueError("alpha must not be 0 or 1")
    populations = benefits.populations
    scaled = [b / 100.0 for b in benefits.benefits]
    n = sum(populations)
    mu = sum(p * b for p, b in zip(populations, scaled)) / n
    if mu <= 0:
        raise ValueError("mean benefit must be positive")
    between = sum(
        p / (n * alpha * (alpha - 1.0)) * ((b / mu) ** alpha - 1.0)
        for p, b in zip(populations, scaled)
    )
    return FairnessReport(
        avg_macro=macro_avg(benefits),
        avg_pop=pop_weighted_avg(benefits),
        max_min=max_min(benefits),
        alpha=alpha,
        unfair_total=between,
        unfair_within=0.0,
        unfair_between=between,
    )


def read_populations(path) -> dict[str, int]:
    """Population file: one "group<TAB>population" entry per line."""
    pops: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            name, value = line.split("\t")
            pops[name] = int(value)
    return pops
