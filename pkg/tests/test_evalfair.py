import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varmt import evalfair
from varmt.evalfair import (BenefitVector, bleu, entropy_decomposition,
                            generalized_entropy, macro_avg, max_min,
                            pop_weighted_avg, rare_word_accuracy, tokenize_13a,
                            unfairness_from_bleu)


def reference_bleu(hypotheses, references):
    """Independent oracle: n-gram statistics computed with plain dicts,
    following the published corpus-BLEU definition (no smoothing, closest
    reference length, exponential brevity penalty)."""
    correct = [0] * 4
    total = [0] * 4
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = tokenize_13a(hyp).split()
        r = tokenize_13a(ref).split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, 5):
            hgrams, rgrams = {}, {}
            for i in range(len(h) - n + 1):
                key = tuple(h[i:i + n])
                hgrams[key] = hgrams.get(key, 0) + 1
            for i in range(len(r) - n + 1):
                key = tuple(r[i:i + n])
                rgrams[key] = rgrams.get(key, 0) + 1
            for gram, count in hgrams.items():
                correct[n - 1] += min(count, rgrams.get(gram, 0))
                total[n - 1] += count
    precisions = [c / t if t else 0.0 for c, t in zip(correct, total)]
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / max(hyp_len, 1))
    if any(p == 0.0 for p in precisions):
        return 0.0
    return 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4)


class TestTokenize13a:
    def test_punctuation_split(self):
        assert tokenize_13a("Hello, world!") == "Hello , world !"

    def test_decimal_numbers_kept(self):
        assert tokenize_13a("It is 3.5 km.") == "It is 3.5 km ."

    def test_entities_unescaped_then_split(self):
        # unescaped angle brackets are punctuation, so they split off
        assert tokenize_13a("a &amp; b &lt;c&gt;") == "a & b < c >"

    def test_digit_dash(self):
        assert tokenize_13a("2-3 things") == "2 - 3 things"


class TestBleu:
    def test_identity_scores_exactly_100(self):
        hyps = ["the cat sat on the mat today ok", "another long sentence here ok"]
        assert bleu(hyps, list(hyps)).score == 100.0

    def test_empty_fourgram_overlap_scores_zero(self):
        result = bleu(["the cat sat"], ["the cat sat down"])
        assert result.score == 0.0
        assert result.precisions[:3] == [100.0, 100.0, 100.0]

    def test_brevity_penalty_closed_form(self):
        result = bleu(["a b c d e f g h i"], ["a b c d e f g h i j"])
        assert result.brevity_penalty == pytest.approx(math.exp(1 - 10 / 9), abs=1e-9)

    def test_hand_computed_fixture(self):
        # hyp 7 tokens vs ref 8: matched n-grams counted by hand give
        # p1=7/7, p2=5/6, p3=3/5, p4=1/4
        hyp = ["it is a small good test today"]
        ref = ["it is a very small good test today"]
        result = bleu(hyp, ref)
        assert result.precisions == pytest.approx(
            [100.0, 100 * 5 / 6, 100 * 3 / 5, 100 * 1 / 4])
        expected = math.exp(1 - 8 / 7) * 100 * (
            1.0 * (5 / 6) * (3 / 5) * (1 / 4)) ** 0.25
        assert result.score == pytest.approx(expected, abs=1e-9)
        assert result.score == pytest.approx(reference_bleu(hyp, ref), abs=1e-9)

    @pytest.mark.parametrize("case", [
        (["a b c d e"], ["a b c d e"]),
        (["the quick brown fox jumps"], ["the quick brown dog jumps"]),
        (["one two three four"], ["one two three four five six"]),
        (["x y. z w, v"], ["x y. z w v u"]),
        (["Hello, world! Nice day."], ["Hello, world! Fine day."]),
    ])
    def test_against_independent_oracle(self, case):
        hyps, refs = case
        assert bleu(hyps, refs).score == pytest.approx(
            reference_bleu(hyps, refs), abs=1e-9)

    def test_corpus_level_aggregation(self):
        hyps = ["a b c d", "e f g h"]
        refs = ["a b c d", "e f x h"]
        assert bleu(hyps, refs).score == pytest.approx(
            reference_bleu(hyps, refs), abs=1e-9)

    def test_order_permutation_invariance(self):
        hyps = ["a b c d e", "f g h i j", "k l m n o p"]
        refs = ["a b c d x", "f g h i j", "k l m z o p"]
        direct = bleu(hyps, refs).score
        permuted = bleu(hyps[::-1], refs[::-1]).score
        assert direct == pytest.approx(permuted, abs=1e-12)

    def test_bounds(self):
        assert 0.0 <= bleu(["a b"], ["c d"]).score <= 100.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            bleu(["a"], ["a", "b"])

    def test_empty_reference_set_rejected(self):
        with pytest.raises(ValueError):
            bleu([], [])


class TestRareWordAccuracy:
    FREQS = {"redkij": 1, "para": 2, "tri": 3, "chetyre": 4,
             "sredne": 7, "chasto": 50, "vezde": 500, "giga": 5000}

    def test_identity_gives_ones(self):
        hyps = ["redkij para sredne", "chasto vezde tri"]
        result = rare_word_accuracy(hyps, list(hyps), self.FREQS)
        assert set(result.values()) == {1.0}

    def test_empty_hypothesis_gives_zeros(self):
        refs = ["redkij chasto", "vezde para"]
        result = rare_word_accuracy(["", ""], refs, self.FREQS)
        assert set(result.values()) == {0.0}

    def test_hand_counted_fixture(self):
        refs = ["redkij redkij para", "sredne chasto chasto vezde"]
        hyps = ["redkij para para", "chasto nope vezde vezde"]
        result = rare_word_accuracy(hyps, refs, self.FREQS)
        assert result["1"] == pytest.approx(1 / 2)          # redkij: 1 of 2
        assert result["2"] == pytest.approx(1.0)            # para: 1 of 1
        assert result["[5,10)"] == pytest.approx(0.0)       # sredne missed
        assert result["[10,100)"] == pytest.approx(1 / 2)   # chasto: 1 of 2
        assert result["[100,1000)"] == pytest.approx(1.0)   # vezde
        assert "[1000" not in "".join(result)               # giga outside buckets

    def test_empty_buckets_absent(self):
        result = rare_word_accuracy(["para"], ["para"], self.FREQS)
        assert list(result) == ["2"]

    def test_default_bucket_labels(self):
        refs = ["redkij para tri chetyre sredne chasto vezde"]
        result = rare_word_accuracy(refs, refs, self.FREQS)
        assert sorted(result) == sorted(
            ["1", "2", "3", "4", "[5,10)", "[10,100)", "[100,1000)"])

    def test_out_of_vocabulary_words_ignored(self):
        result = rare_word_accuracy(["neu"], ["neu"], self.FREQS)
        assert result == {}


class TestAverages:
    def test_macro_from_dialect_scores(self):
        groups = BenefitVector([("doha", 1, 20.1), ("beirut", 1, 8.1),
                                ("rabat", 1, 7.4), ("tunis", 1, 4.6)])
        assert macro_avg(groups) == pytest.approx(10.05)
        assert abs(macro_avg(groups) - 10.0) <= 0.05 + 1e-9

    def test_macro_second_row(self):
        groups = BenefitVector([("doha", 1, 14.5), ("beirut", 1, 7.4),
                                ("rabat", 1, 4.9), ("tunis", 1, 3.9)])
        assert macro_avg(groups) == pytest.approx(7.675)
        assert abs(macro_avg(groups) - 7.7) <= 0.05

    def test_single_group(self):
        assert macro_avg(BenefitVector([("x", 3, 11.5)])) == 11.5

    def test_population_weighting(self):
        groups = BenefitVector([("a", 1, 10.0), ("b", 3, 2.0)])
        assert pop_weighted_avg(groups) == pytest.approx(4.0)

    def test_equal_populations_match_macro(self):
        groups = BenefitVector([("a", 7, 10.0), ("b", 7, 2.0), ("c", 7, 6.0)])
        assert pop_weighted_avg(groups) == pytest.approx(macro_avg(groups))

    def test_max_min(self):
        v = BenefitVector([("m", 1, 21.2), ("d", 1, 20.1), ("b", 1, 8.1),
                           ("r", 1, 7.4), ("t", 1, 4.6)])
        assert max_min(v) == pytest.approx(16.6)
        v2 = BenefitVector([("m", 1, 21.2), ("d", 1, 3.7), ("b", 1, 1.8),
                            ("r", 1, 2.0), ("t", 1, 1.3)])
        assert max_min(v2) == pytest.approx(19.9)
        assert max_min(BenefitVector([("a", 1, 5.0), ("b", 1, 5.0)])) == 0.0


class TestGeneralizedEntropy:
    def test_equal_benefits_zero(self):
        assert generalized_entropy([4.0, 4.0, 4.0], 2.0) == pytest.approx(0.0)

    def test_two_point_value(self):
        assert generalized_entropy([1.0, 3.0], 2.0) == pytest.approx(0.125, abs=1e-12)

    def test_duplicated_two_point_value(self):
        assert generalized_entropy([1.0, 1.0, 3.0, 3.0], 2.0) == pytest.approx(
            0.125, abs=1e-12)

    def test_alpha_two_is_half_squared_cv(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            values = rng.uniform(0.1, 5.0, size=rng.integers(2, 12))
            mu = values.mean()
            half_cv2 = 0.5 * values.var() / mu**2
            assert generalized_entropy(values.tolist(), 2.0) == pytest.approx(
                half_cv2, abs=1e-12)

    def test_scale_invariance(self):
        values = [0.5, 1.5, 2.5, 4.0]
        for c in (0.01, 1.0, 250.0):
            assert generalized_entropy([c * v for v in values], 2.0) == pytest.approx(
                generalized_entropy(values, 2.0), abs=1e-12)

    def test_invalid_alpha_rejected(self):
        with pytest.raises(ValueError):
            generalized_entropy([1.0, 2.0], 1.0)
        with pytest.raises(ValueError):
            generalized_entropy([1.0, 2.0], 0.0)

    def test_zero_mean_rejected(self):
        with pytest.raises(ValueError):
            generalized_entropy([0.0, 0.0], 2.0)


class TestDecomposition:
    def test_constant_groups_are_pure_between(self):
        total, within, between = entropy_decomposition([[1.0, 1.0], [3.0, 3.0]], 2.0)
        assert within == pytest.approx(0.0, abs=1e-15)
        assert between == pytest.approx(0.125, abs=1e-12)
        assert total == pytest.approx(0.125, abs=1e-12)

    def test_single_group_is_pure_within(self):
        total, within, between = entropy_decomposition([[1.0, 2.0, 3.0]], 2.0)
        assert between == pytest.approx(0.0, abs=1e-15)
        assert within == pytest.approx(total)
        assert total == pytest.approx(generalized_entropy([1.0, 2.0, 3.0], 2.0))

    def test_total_invariant_across_random_groupings(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(0.2, 9.0, size=30).tolist()
        pooled = generalized_entropy(values, 2.0)
        for _ in range(100):
            order = rng.permutation(30)
            cuts = sorted(rng.choice(np.arange(1, 30), size=3, replace=False))
            groups, start = [], 0
            for cut in list(cuts) + [30]:
                groups.append([values[i] for i in order[start:cut]])
                start = cut
            total, within, between = entropy_decomposition(groups, 2.0)
            assert total == pytest.approx(pooled, abs=1e-10)
            assert total == pytest.approx(within + between, abs=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.lists(st.floats(0.05, 20.0), min_size=1, max_size=6),
                    min_size=1, max_size=5),
           st.sampled_from([2.0, 3.0, 0.5, -1.0]))
    def test_decomposition_identity_property(self, groups, alpha):
        pooled = [b for g in groups for b in g]
        total, within, between = entropy_decomposition(groups, alpha)
        assert total == pytest.approx(generalized_entropy(pooled, alpha), abs=1e-10)


class TestUnfairnessReport:
    def test_single_group_is_fair(self):
        report = unfairness_from_bleu(BenefitVector([("only", 10, 14.0)]))
        assert report.unfair_total == pytest.approx(0.0, abs=1e-15)

    def test_two_group_hand_computation(self):
        report = unfairness_from_bleu(
            BenefitVector([("a", 1, 1.0), ("b", 1, 21.0)]), 2.0)
        # benefits 0.01 and 0.21: mu=0.11, var=0.01, half squared CV
        assert report.unfair_total == pytest.approx(0.5 * 0.01 / 0.11**2, abs=1e-12)
        assert report.unfair_within == 0.0
        assert report.unfair_total == pytest.approx(report.unfair_between)

    def test_population_expansion_matches_explicit(self):
        pops = [3, 5, 2]
        scores = [12.0, 2.5, 7.0]
        vector = BenefitVector(list(zip("abc", pops, scores)))
        report = unfairness_from_bleu(vector, 2.0)
        expanded = [s / 100.0 for p, s in zip(pops, scores) for _ in range(p)]
        assert report.unfair_total == pytest.approx(
            generalized_entropy(expanded, 2.0), abs=1e-12)

    def test_report_fields_and_format(self):
        vector = BenefitVector([("msa", 2, 21.2), ("doha", 1, 20.1)])
        report = unfairness_from_bleu(vector)
        text = report.format()
        assert "avg_L = 20.6" in text
        assert "unfair_total = " in text
        lines = dict(l.split(" = ") for l in text.splitlines())
        assert float(lines["avg_pop"]) == pytest.approx(
            pop_weighted_avg(vector), abs=0.05)

    def test_population_file_roundtrip(self, tmp_path):
        path = tmp_path / "pops.tsv"
        path.write_text("gulf\t1000000\nlevantine\t2500000\n", encoding="utf-8")
        assert evalfair.read_populations(path) == {
            "gulf": 1000000, "levantine": 2500000}
