import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpfim.errors import ConfigError
from dpfim.metrics import aggregate, chrf_pp, lm_score, longest_line_match

from oracles import chrf_pp_brute, longest_line_run_brute

# frozen from the brute-force oracle: chrf_pp_brute("ab cd", "ab ce")
# (4 char orders + 2 word orders; P = R = (3/4 + 2/3 + 1/2 + 0 + 1/2 + 0)/6)
AB_CD_VS_AB_CE = 40.27777777777777

code_text = st.text(
    alphabet=st.sampled_from("abcdef (){}=.\n\t xyz0123"), min_size=0, max_size=60
)


class TestChrf:
    def test_identity_is_100(self):
        assert chrf_pp("fun main() { return 1 }", "fun main() { return 1 }") == pytest.approx(100.0)

    def test_disjoint_is_0(self):
        assert chrf_pp("aaaa", "bbbb") == 0.0

    def test_empty_hypothesis_is_0(self):
        assert chrf_pp("", "fun main()") == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ConfigError):
            chrf_pp("abc", "")

    def test_frozen_example(self):
        assert chrf_pp("ab cd", "ab ce") == pytest.approx(AB_CD_VS_AB_CE, abs=1e-9)
        assert chrf_pp_brute("ab cd", "ab ce") == pytest.approx(AB_CD_VS_AB_CE, abs=1e-12)

    def test_whitespace_only_reference(self):
        # no reference n-grams at any order
        assert chrf_pp("abc", "   ") == 0.0

    @given(code_text, code_text.filter(lambda s: s.strip()))
    @settings(max_examples=300, deadline=None)
    def test_matches_oracle(self, hyp, ref):
        assert chrf_pp(hyp, ref) == pytest.approx(chrf_pp_brute(hyp, ref), abs=1e-9)

    @given(code_text, code_text.filter(lambda s: s.strip()))
    @settings(max_examples=200, deadline=None)
    def test_range(self, hyp, ref):
        assert 0.0 <= chrf_pp(hyp, ref) <= 100.0 + 1e-12

    @given(code_text.filter(lambda s: s.strip()))
    @settings(max_examples=100, deadline=None)
    def test_self_similarity(self, ref):
        assert chrf_pp(ref, ref) == pytest.approx(100.0)


class TestLmScore:
    def test_identity(self):
        ref = "a\nb\nc\nd"
        assert lm_score(ref, ref) == 1.0

    def test_no_shared_lines(self):
        assert lm_score("x\ny", "a\nb\nc\nd") == 0.0

    def test_half_match(self):
        ref = "l1\nl2\nl3\nl4"
        hyp = "zzz\nl2\nl3"
        assert lm_score(hyp, ref) == 0.5

    def test_trailing_whitespace_trimmed(self):
        assert lm_score("a  \nb\t", "a\nb") == 1.0

    def test_threshold_table(self):
        ref = "\n".join(f"l{i}" for i in range(8))
        for lines, expected in ((8, 1.0), (6, 0.75), (4, 0.5), (2, 0.25), (1, 0.0)):
            hyp = "\n".join(f"l{i}" for i in range(lines))
            assert lm_score(hyp, ref) == expected

    def test_empty_reference_rejected(self):
        with pytest.raises(ConfigError):
            lm_score("abc", "")

    def test_monotone_in_appended_correct_line(self):
        ref_lines = [f"line {i}" for i in range(6)]
        ref = "\n".join(ref_lines)
        hyp_lines = ["noise", "line 2", "line 3"]
        before = lm_score("\n".join(hyp_lines), ref)
        after = lm_score("\n".join(hyp_lines + ["line 4"]), ref)
        assert after >= before

    @given(
        st.lists(st.sampled_from(["a", "b", "c", "dd"]), max_size=12),
        st.lists(st.sampled_from(["a", "b", "c", "dd"]), min_size=1, max_size=12),
    )
    @settings(max_examples=200, deadline=None)
    def test_run_length_matches_brute_force(self, hyp_lines, ref_lines):
        assert longest_line_match(hyp_lines, ref_lines) == longest_line_run_brute(
            hyp_lines, ref_lines
        )


class TestAggregate:
    def test_constant(self):
        rep = aggregate([1.0, 1.0, 1.0])
        assert rep.mean == 1.0 and rep.stderr == 0.0 and rep.n == 3

    def test_two_point(self):
        rep = aggregate([0.0, 1.0])
        assert rep.mean == pytest.approx(0.5)
        assert rep.stderr == pytest.approx(0.5)  # sample std 0.7071 / sqrt(2)

    def test_single_sample_flagged(self):
        rep = aggregate([3.0])
        assert rep.stderr == 0.0 and rep.single_sample

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            aggregate([])

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=30), st.randoms())
    @settings(max_examples=150, deadline=None)
    def test_permutation_invariance(self, scores, rnd):
        rep = aggregate(scores)
        shuffled = list(scores)
        rnd.shuffle(shuffled)
        rep2 = aggregate(shuffled)
        assert rep.mean == rep2.mean and rep.stderr == rep2.stderr
