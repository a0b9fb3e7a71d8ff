import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emocause.corpus import EmotionCausePair
from emocause.ioutil import write_report_document
from emocause.metrics import (
    MetricsError,
    score_erc,
    score_keyed_pairs,
    score_pairs,
)
from helpers import brute_force_erc_score, brute_force_pair_score, random_pair_instance

GOLD = [
    EmotionCausePair(4, "joy", 2),
    EmotionCausePair(4, "joy", 3),
    EmotionCausePair(5, "disgust", 5),
]


# ---------------------------------------------------------------------------
# Worked examples (expected values computed with the brute-force oracle first)
# ---------------------------------------------------------------------------

def test_perfect_prediction_scores_exactly_one():
    report = score_pairs(GOLD, list(GOLD))
    assert report.weighted_f1 == 1.0
    assert report.micro == (1.0, 1.0, 1.0)


def test_empty_prediction_scores_zero():
    report = score_pairs(GOLD, [])
    assert report.weighted_f1 == 0.0
    assert report.pred_total == 0


def test_single_true_positive_scores_four_ninths():
    # oracle: joy tp=1 fp=0 fn=1 -> F1 2/3; disgust F1 0; weights 2/3, 1/3
    oracle_value, _ = brute_force_pair_score(GOLD, [GOLD[0]])
    report = score_pairs(GOLD, [GOLD[0]])
    assert abs(oracle_value - 4 / 9) < 1e-12
    assert abs(report.weighted_f1 - 4 / 9) < 1e-12
    assert round(report.weighted_f1, 4) == 0.4444
    assert report.per_category["joy"].f1 == pytest.approx(2 / 3)
    assert report.per_category["disgust"].f1 == 0.0


def test_false_positive_mix_scores_two_thirds():
    pred = [EmotionCausePair(4, "joy", 2), EmotionCausePair(4, "joy", 1),
            EmotionCausePair(5, "disgust", 5)]
    oracle_value, _ = brute_force_pair_score(GOLD, pred)
    report = score_pairs(GOLD, pred)
    assert abs(oracle_value - 2 / 3) < 1e-12
    assert abs(report.weighted_f1 - 2 / 3) < 1e-12
    assert report.per_category["joy"].f1 == pytest.approx(0.5)
    assert report.per_category["disgust"].f1 == 1.0


def test_duplicates_collapse_under_set_semantics():
    report = score_pairs(GOLD + GOLD, [GOLD[0], GOLD[0]])
    assert report.gold_total == 3
    assert report.pred_total == 1
    assert abs(report.weighted_f1 - 4 / 9) < 1e-12


def test_empty_gold_is_an_error():
    with pytest.raises(MetricsError, match="empty"):
        score_pairs([], [GOLD[0]])


def test_neutral_pair_rejected():
    with pytest.raises(MetricsError, match="neutral"):
        score_pairs([EmotionCausePair(1, "neutral", 1)], [])


def test_category_counts_invariants():
    pred = [GOLD[0], EmotionCausePair(4, "joy", 1)]
    report = score_pairs(GOLD, pred)
    joy = report.per_category["joy"]
    assert joy.tp + joy.fn == 2       # gold joy pairs
    assert joy.tp + joy.fp == 2       # predicted joy pairs
    assert joy.gold == 2 and joy.pred == 2


# ---------------------------------------------------------------------------
# Oracle equivalence and properties
# ---------------------------------------------------------------------------

def test_oracle_equivalence_on_random_instances():
    rng = random.Random(1234)
    for _ in range(1200):
        gold, pred = random_pair_instance(rng)
        oracle_value, oracle_per = brute_force_pair_score(gold, pred)
        report = score_pairs(gold, pred)
        assert abs(report.weighted_f1 - oracle_value) < 1e-12
        for cat, (precision, recall, f1, tp, fp, fn) in oracle_per.items():
            s = report.per_category[cat]
            assert (s.tp, s.fp, s.fn) == (tp, fp, fn)
            assert abs(s.f1 - f1) < 1e-12


def test_adding_matching_pair_never_lowers_score():
    rng = random.Random(77)
    for _ in range(300):
        gold, pred = random_pair_instance(rng)
        missing = [g for g in gold if g not in pred]
        if not missing:
            continue
        before = score_pairs(gold, pred).weighted_f1
        after = score_pairs(gold, pred + [missing[0]]).weighted_f1
        assert after >= before - 1e-12


def test_adding_non_matching_pair_never_raises_score():
    rng = random.Random(78)
    for _ in range(300):
        gold, pred = random_pair_instance(rng)
        stray = EmotionCausePair(7, "fear", 7)
        if stray in gold:
            continue
        before = score_pairs(gold, pred).weighted_f1
        after = score_pairs(gold, pred + [stray]).weighted_f1
        assert after <= before + 1e-12


def test_permutation_invariance():
    rng = random.Random(79)
    gold, pred = random_pair_instance(rng)
    shuffled_gold, shuffled_pred = list(gold), list(pred)
    rng.shuffle(shuffled_gold)
    rng.shuffle(shuffled_pred)
    assert score_pairs(gold, pred).weighted_f1 == \
        score_pairs(shuffled_gold, shuffled_pred).weighted_f1


@settings(max_examples=100, deadline=None)
@given(st.lists(
    st.tuples(st.integers(1, 6), st.sampled_from(["joy", "anger", "fear"]), st.integers(1, 6)),
    min_size=1, max_size=6))
def test_symmetric_perfection(triples):
    gold = [EmotionCausePair(*t) for t in triples]
    assert score_pairs(gold, list(gold)).weighted_f1 == 1.0


# ---------------------------------------------------------------------------
# Cross-conversation scoring
# ---------------------------------------------------------------------------

def test_keyed_scoring_separates_conversations():
    pair = EmotionCausePair(1, "joy", 1)
    gold = {"a": [pair], "b": [pair]}
    # the same triple predicted in the wrong conversation must not count
    report = score_keyed_pairs(gold, {"a": [pair]})
    assert report.gold_total == 2
    assert report.per_category["joy"].tp == 1
    assert report.per_category["joy"].fn == 1


# ---------------------------------------------------------------------------
# score_erc
# ---------------------------------------------------------------------------

def test_erc_identity_scores_one():
    gold = {1: "joy", 2: "anger", 3: "neutral"}
    assert score_erc(gold, dict(gold)).weighted_f1 == 1.0


def test_erc_disjoint_scores_zero():
    gold = {i: "joy" for i in range(4)}
    pred = {i: "sadness" for i in range(4)}
    assert score_erc(gold, pred).weighted_f1 == 0.0


def test_erc_worked_mixture():
    gold = {1: "joy", 2: "joy", 3: "anger"}
    pred = {1: "joy", 2: "anger", 3: "anger"}
    oracle_value = brute_force_erc_score(gold, pred)
    report = score_erc(gold, pred)
    assert abs(oracle_value - 2 / 3) < 1e-12
    assert abs(report.weighted_f1 - 2 / 3) < 1e-12
    assert report.per_category["joy"].f1 == pytest.approx(2 / 3)
    assert report.per_category["anger"].f1 == pytest.approx(2 / 3)


def test_erc_key_mismatch_fails():
    with pytest.raises(MetricsError, match="different targets"):
        score_erc({1: "joy"}, {2: "joy"})


def test_erc_oracle_equivalence_random():
    rng = random.Random(4321)
    labels = ["anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"]
    for _ in range(400):
        keys = range(rng.randint(1, 12))
        gold = {k: rng.choice(labels) for k in keys}
        pred = {k: rng.choice(labels) for k in keys}
        if not gold:
            continue
        assert abs(score_erc(gold, pred).weighted_f1 -
                   brute_force_erc_score(gold, pred)) < 1e-12


# ---------------------------------------------------------------------------
# Report document
# ---------------------------------------------------------------------------

def test_report_document_shape_and_determinism(tmp_path):
    report = score_pairs(GOLD, [GOLD[0]])
    doc = report.to_doc()
    assert set(doc) == {"weighted_f1", "micro", "per_category", "gold_total", "pred_total"}
    assert doc["weighted_f1"] == 0.4444
    a = write_report_document(doc, tmp_path / "a.json").read_bytes()
    b = write_report_document(report.to_doc(), tmp_path / "b.json").read_bytes()
    assert a == b
    parsed = json.loads(a)
    assert list(parsed) == sorted(parsed)  # sorted-key serialization
