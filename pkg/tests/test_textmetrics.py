from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimtrace.errors import DataError
from claimtrace.textmetrics import import_external_scores, rouge1, rougeL, tokenize

from oracles import clipped_unigram_overlap, lcs_by_recursion


def test_tokenize_lowercases_and_splits_on_non_alnum():
    assert tokenize("The cat, sat!") == ["the", "cat", "sat"]
    assert tokenize("4.72V across 100-425VDC") == ["4", "72v", "across", "100", "425vdc"]
    assert tokenize("") == []


def test_rouge1_two_of_three_overlap():
    # "the cat" overlaps out of three tokens on each side.
    score = rouge1("the cat sat", "the cat ran")
    assert score.precision == pytest.approx(2 / 3)
    assert score.recall == pytest.approx(2 / 3)
    assert score.f1 == pytest.approx(2 / 3)


def test_rouge1_clips_repeated_tokens():
    # Candidate repeats "the" three times; reference has it once.
    score = rouge1("the the the", "the cat")
    assert score.precision == pytest.approx(1 / 3)
    assert score.recall == pytest.approx(1 / 2)


def test_rouge1_empty_sides_score_zero():
    for cand, ref in (("", "the cat"), ("the cat", ""), ("", "")):
        score = rouge1(cand, ref)
        assert score.precision == 0.0
        assert score.recall == 0.0
        assert score.f1 == 0.0


def test_rougeL_subsequence_not_substring():
    # LCS of (a b c d) and (a x c y) is (a c).
    score = rougeL("a b c d", "a x c y")
    assert score.precision == pytest.approx(0.5)
    assert score.recall == pytest.approx(0.5)
    assert score.f1 == pytest.approx(0.5)


def test_rougeL_identical_texts():
    score = rougeL("one two three", "one two three")
    assert score.f1 == 1.0


def test_rougeL_order_matters():
    forward = rougeL("a b c", "c b a")
    assert forward.precision == pytest.approx(1 / 3)


_tokens = st.lists(st.sampled_from("abcde"), min_size=0, max_size=10)


@given(_tokens, _tokens)
@settings(max_examples=120)
def test_rouge1_matches_consuming_oracle(cand, ref):
    score = rouge1(" ".join(cand), " ".join(ref))
    overlap = clipped_unigram_overlap(cand, ref)
    expected_p = overlap / len(cand) if cand else 0.0
    expected_r = overlap / len(ref) if ref else 0.0
    assert score.precision == pytest.approx(expected_p)
    assert score.recall == pytest.approx(expected_r)


@given(_tokens, _tokens)
@settings(max_examples=120, deadline=None)
def test_rougeL_matches_recursive_oracle(cand, ref):
    score = rougeL(" ".join(cand), " ".join(ref))
    lcs = lcs_by_recursion(cand, ref)
    expected_p = lcs / len(cand) if cand else 0.0
    expected_r = lcs / len(ref) if ref else 0.0
    assert score.precision == pytest.approx(expected_p)
    assert score.recall == pytest.approx(expected_r)


@given(_tokens, _tokens)
@settings(max_examples=60)
def test_equal_length_texts_have_symmetric_rouge1(cand, ref):
    if len(cand) != len(ref):
        return
    score = rouge1(" ".join(cand), " ".join(ref))
    assert score.precision == pytest.approx(score.recall)


# ---------------------------------------------------------------- import

def test_import_external_scores(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text(
        "instance_id,metric_name,value\n"
        "dp-1--na,bertscore_f1,0.91\n"
        "dp-1--na,rouge1_f1,0.55\n"
        "dp-2--na,bertscore_f1,0.87\n"
    )
    scores = import_external_scores(path)
    assert scores[("dp-1--na", "bertscore_f1")] == pytest.approx(0.91)
    assert len(scores) == 3


def test_import_rejects_duplicates(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text(
        "instance_id,metric_name,value\n"
        "dp-1,rouge1_f1,0.5\n"
        "dp-1,rouge1_f1,0.6\n"
    )
    with pytest.raises(DataError):
        import_external_scores(path)


def test_import_rejects_missing_columns(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("instance_id,value\ndp-1,0.5\n")
    with pytest.raises(DataError):
        import_external_scores(path)


def test_import_rejects_non_numeric(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("instance_id,metric_name,value\ndp-1,rouge1_f1,high\n")
    with pytest.raises(DataError):
        import_external_scores(path)
