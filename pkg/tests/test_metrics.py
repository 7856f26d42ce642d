"""Tests for BLEU, CIDEr, ROUGE-L, and METEOR.

Every metric is checked against an independent brute-force implementation
(tests/oracles.py) on short random inputs, plus hand-computed values for
the canonical cases.
"""

import math

import numpy as np
import pytest

from keycap.errors import DataError
from keycap.metrics import (
    MetricReport,
    bleu,
    cider,
    corpus_bleu,
    corpus_report,
    effective_reference_length,
    lcs_length,
    meteor,
    ngram_counts,
    rouge_l,
)
from keycap.tensor import SeededRng

from oracles import (
    bleu_brute,
    cider_brute,
    effective_reference_length_brute,
    lcs_brute,
    meteor_brute,
    rouge_l_brute,
)


def toks(s: str) -> list[str]:
    return s.split()


class TestBleuHandCases:
    def test_identical_scores_one(self):
        sent = toks("the retina shows swelling today")
        for n in range(1, 5):
            assert bleu(sent, [sent], max_n=n) == pytest.approx(1.0, abs=1e-12)

    def test_repeated_token_clipping(self):
        # "the the the" vs "the cat": unigram count clipped at 1, c=3 > r=2.
        got = bleu(toks("the the the"), [toks("the cat")], max_n=1)
        assert got == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_brevity_penalty_exponent(self):
        # Perfect unigrams but c=2 against r=4: BP = exp(1 - 4/2) = e^-1.
        got = bleu(toks("a b"), [toks("a b c d")], max_n=1)
        assert got == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_any_zero_precision_zeroes_the_score(self):
        assert bleu(toks("x y"), [toks("x z")], max_n=2) == 0.0

    def test_smoothing_flag_rescues_zero_precisions(self):
        score = bleu(toks("the the the"), [toks("the cat")], max_n=4, smoothing_eps=1e-9)
        assert 0.0 < score < 0.1

    def test_empty_candidate_scores_zero(self):
        assert bleu([], [toks("a b")], max_n=2) == 0.0

    def test_empty_references_rejected(self):
        with pytest.raises(DataError):
            bleu(toks("a"), [], max_n=1)
        with pytest.raises(DataError):
            bleu(toks("a"), [[]], max_n=1)

    def test_effective_length_prefers_closer_then_shorter(self):
        refs = [toks("a b c"), toks("a b c d e")]
        assert effective_reference_length(4, refs) == 3  # tie 3 vs 5 -> shorter
        assert effective_reference_length(5, refs) == 5

    def test_unigram_permutation_invariant_bigram_not(self):
        ref = [toks("a b c d")]
        cand, shuffled = toks("a b c d"), toks("d c b a")
        assert bleu(cand, ref, 1) == pytest.approx(bleu(shuffled, ref, 1), abs=1e-12)
        assert bleu(cand, ref, 2) != bleu(shuffled, ref, 2)

    def test_appending_matched_token_never_decreases_clipped_counts(self):
        from keycap.metrics import _clipped_counts
        ref = [toks("a b c d e")]
        cand = toks("a b")
        for n in (1, 2):
            before, _ = _clipped_counts(cand, ref, n)
            after, _ = _clipped_counts(cand + ["c"], ref, n)
            assert after >= before


class TestRougeHandCases:
    def test_identical_scores_one(self):
        sent = toks("one two three")
        for beta in (0.5, 1.0, 1.2, 2.0):
            assert rouge_l(sent, sent, beta=beta) == pytest.approx(1.0, abs=1e-12)

    def test_lcs_dp_table_case(self):
        # candidate "a c d" vs reference "a b c d": LCS=3, R=0.75, P=1.
        got = rouge_l(toks("a c d"), toks("a b c d"), beta=1.2)
        want = (1 + 1.44) * 0.75 * 1.0 / (0.75 + 1.44 * 1.0)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.8356164383561644, abs=1e-12)

    def test_disjoint_scores_zero(self):
        assert rouge_l(toks("x y"), toks("a b")) == 0.0

    def test_multiple_references_take_max(self):
        refs = [toks("a b"), toks("x y z")]
        got = rouge_l(toks("x y z"), refs)
        assert got == pytest.approx(1.0, abs=1e-12)

    def test_empty_reference_rejected(self):
        with pytest.raises(DataError):
            rouge_l(toks("a"), [])

    def test_empty_candidate_scores_zero(self):
        assert rouge_l([], toks("a b")) == 0.0

    def test_lcs_matches_exhaustive_oracle(self):
        rng = SeededRng(5)
        alphabet = ["a", "b", "c"]
        for _ in range(30):
            a = [alphabet[i] for i in rng.integers(0, 3, int(rng.integers(1, 7)))]
            b = [alphabet[i] for i in rng.integers(0, 3, int(rng.integers(1, 7)))]
            assert lcs_length(a, b) == lcs_brute(a, b)


class TestMeteorHandCases:
    def test_identical_six_tokens(self):
        sent = toks("u v w x y z")
        assert meteor(sent, sent) == pytest.approx(1.0 - 0.5 / 216.0, abs=1e-12)
        assert meteor(sent, sent) == pytest.approx(431.0 / 432.0, abs=1e-12)

    def test_no_overlap_scores_zero(self):
        assert meteor(toks("p q"), toks("x y")) == 0.0

    def test_swapped_middle_pair(self):
        # "a c b d" vs "a b c d": forced alignment, 4 matches in 4 chunks,
        # so the penalty is 0.5 and the score exactly 0.5.
        assert meteor(toks("a c b d"), toks("a b c d")) == pytest.approx(0.5, abs=1e-12)

    def test_empty_sides_score_zero(self):
        assert meteor([], toks("a")) == 0.0
        assert meteor(toks("a"), []) == 0.0

    def test_chunk_minimization_prefers_contiguous_alignment(self):
        # "the cat the" vs "the cat the dog": the contiguous mapping uses 1
        # chunk; a careless assignment of the duplicated "the" yields 2+.
        got = meteor(toks("the cat the"), toks("the cat the dog"))
        matches, chunks = 3, 1
        p, r = matches / 3, matches / 4
        f = 10 * p * r / (r + 9 * p)
        assert got == pytest.approx(f * (1 - 0.5 * (chunks / matches) ** 3), abs=1e-12)

    def test_repetition_heavy_input_still_terminates(self):
        cand = toks("the the the the the the the the")
        ref = toks("the the the the the the the the the")
        score = meteor(cand, ref)
        assert 0.0 < score <= 1.0


class TestCiderHandCases:
    def test_two_image_corpus_self_similarity(self):
        ref_a = toks("macular edema in the left eye")
        ref_b = toks("optic glaucoma under high pressure")
        corpus = [[ref_a], [ref_b]]
        got = cider(ref_a, [ref_a], corpus)
        want = cider_brute(ref_a, [ref_a], corpus)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(1.0, abs=1e-12)  # cosine of a vector with itself

    def test_zero_overlap_scores_zero(self):
        corpus = [[toks("a b c")], [toks("d e f")]]
        assert cider(toks("x y z"), [toks("a b c")], corpus) == 0.0

    def test_duplicate_reference_leaves_cosine_unchanged(self):
        ref = toks("swelling across the lens")
        other = toks("pressure near the nerve")
        corpus = [[ref], [other]]
        one = cider(toks("swelling the lens"), [ref], corpus)
        two = cider(toks("swelling the lens"), [ref, ref], corpus)
        assert one == pytest.approx(two, abs=1e-12)

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            cider(toks("a"), [toks("a")], [])
        with pytest.raises(DataError):
            cider(toks("a"), [], [[toks("a")]])

    def test_idf_discounts_ubiquitous_ngrams(self):
        # "the" appears in every image, so it carries zero idf weight and
        # contributes nothing; a candidate of only "the" scores 0.
        corpus = [[toks("the cat")], [toks("the dog")]]
        assert cider(toks("the"), [toks("the cat")], corpus) == pytest.approx(0.0, abs=1e-12)


def random_tokens(rng, alphabet, lo, hi):
    length = int(rng.integers(lo, hi + 1))
    return [alphabet[i] for i in rng.integers(0, len(alphabet), length)]


class TestOracleEquivalence:
    """Randomized agreement with the brute-force implementations."""

    def test_bleu_matches_brute_force(self):
        rng = SeededRng(11)
        alphabet = ["a", "b", "c", "d"]
        for trial in range(60):
            cand = random_tokens(rng, alphabet, 0, 6)
            refs = [random_tokens(rng, alphabet, 1, 6)
                    for _ in range(int(rng.integers(1, 4)))]
            max_n = int(rng.integers(1, 5))
            assert bleu(cand, refs, max_n) == pytest.approx(
                bleu_brute(cand, refs, max_n), abs=1e-10
            ), (cand, refs, max_n)

    def test_rouge_matches_brute_force(self):
        rng = SeededRng(13)
        alphabet = ["a", "b", "c"]
        for trial in range(60):
            cand = random_tokens(rng, alphabet, 0, 6)
            ref = random_tokens(rng, alphabet, 1, 6)
            beta = float(rng.uniform(0.5, 2.0, 1)[0])
            assert rouge_l(cand, ref, beta) == pytest.approx(
                rouge_l_brute(cand, ref, beta), abs=1e-10
            ), (cand, ref, beta)

    def test_meteor_matches_brute_force(self):
        rng = SeededRng(17)
        alphabet = ["a", "b", "c"]
        for trial in range(60):
            cand = random_tokens(rng, alphabet, 0, 6)
            ref = random_tokens(rng, alphabet, 0, 6)
            assert meteor(cand, ref) == pytest.approx(
                meteor_brute(cand, ref), abs=1e-10
            ), (cand, ref)

    def test_cider_matches_brute_force(self):
        rng = SeededRng(19)
        alphabet = ["a", "b", "c", "d", "e"]
        for trial in range(25):
            corpus = [
                [random_tokens(rng, alphabet, 1, 6)
                 for _ in range(int(rng.integers(1, 3)))]
                for _ in range(int(rng.integers(2, 5)))
            ]
            cand = random_tokens(rng, alphabet, 1, 6)
            refs = corpus[0]
            assert cider(cand, refs, corpus) == pytest.approx(
                cider_brute(cand, refs, corpus), abs=1e-10
            ), (cand, refs, corpus)


class TestCorpusReport:
    def _pairs(self):
        return [
            (toks("macular edema observed"), [toks("macular edema observed")]),
            (toks("clouding across the lens"), [toks("clouding across the lens")]),
            (toks("pressure on the optic nerve"), [toks("pressure on the optic nerve")]),
        ]

    def test_perfect_candidates_max_out_bleu_and_rouge(self):
        report = corpus_report(self._pairs())
        for value in (report.bleu_1, report.bleu_2, report.bleu_3, report.bleu_4):
            assert value == pytest.approx(1.0, abs=1e-12)
        assert report.rouge_l == pytest.approx(1.0, abs=1e-12)
        assert report.corpus_size == 3

    def test_single_pair_corpus_bleu_equals_sentence_bleu(self):
        cand = toks("a b c d")
        refs = [toks("a b x d")]
        assert corpus_bleu([(cand, refs)], max_n=2) == pytest.approx(
            bleu(cand, refs, max_n=2), abs=1e-12
        )

    def test_fields_match_manual_composition(self):
        rng = SeededRng(23)
        alphabet = ["a", "b", "c", "d"]
        pairs = []
        for _ in range(4):
            pairs.append((
                random_tokens(rng, alphabet, 1, 6),
                [random_tokens(rng, alphabet, 1, 6)],
            ))
        report = corpus_report(pairs)
        corpus = [refs for _, refs in pairs]
        assert report.bleu_2 == pytest.approx(corpus_bleu(pairs, 2), abs=1e-12)
        want_cider = sum(cider(c, r, corpus) for c, r in pairs) / 4
        assert report.cider == pytest.approx(want_cider, abs=1e-12)
        want_rouge = sum(rouge_l(c, r) for c, r in pairs) / 4
        assert report.rouge_l == pytest.approx(want_rouge, abs=1e-12)
        want_meteor = sum(max(meteor(c, ref) for ref in r) for c, r in pairs) / 4
        assert report.meteor == pytest.approx(want_meteor, abs=1e-12)

    def test_bleu_avg_is_mean_of_orders(self):
        report = corpus_report(self._pairs())
        mean = (report.bleu_1 + report.bleu_2 + report.bleu_3 + report.bleu_4) / 4
        assert report.bleu_avg == pytest.approx(mean, abs=1e-12)

    def test_json_serialization_is_flat_and_complete(self):
        import json
        blob = json.loads(corpus_report(self._pairs()).to_json())
        assert set(blob) == {
            "bleu_1", "bleu_2", "bleu_3", "bleu_4", "bleu_avg",
            "cider", "rouge_l", "meteor", "corpus_size",
        }
        assert all(isinstance(v, (int, float)) for v in blob.values())

    def test_empty_pairs_rejected(self):
        with pytest.raises(DataError):
            corpus_report([])

    def test_scores_within_ranges(self):
        rng = SeededRng(29)
        alphabet = ["a", "b", "c"]
        pairs = [
            (random_tokens(rng, alphabet, 1, 6), [random_tokens(rng, alphabet, 1, 6)])
            for _ in range(5)
        ]
        report = corpus_report(pairs)
        for value in (report.bleu_1, report.bleu_2, report.bleu_3, report.bleu_4,
                      report.bleu_avg, report.rouge_l, report.meteor):
            assert 0.0 <= value <= 1.0
        assert report.cider >= 0.0


class TestNGramCounts:
    def test_counts_and_order(self):
        grams = ngram_counts(toks("a b a b"), 2)
        assert grams.order == 2
        assert grams.counts[("a", "b")] == 2
        assert grams.counts[("b", "a")] == 1

    def test_too_short_sequence_is_empty(self):
        assert not ngram_counts(toks("a"), 2).counts
