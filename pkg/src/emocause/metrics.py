"""Pair-level and label-level scoring with gold-support-weighted average F1.

Matching is exact at utterance granularity: a predicted pair is a true
positive iff its full (emotion utterance, category, cause utterance) triple
matches a gold triple. Conventions pinned here: duplicates collapse under set
semantics, precision (recall) is 0 when a category has no predictions (no
gold), F1 is 0 when precision + recall is 0, and categories with zero gold
support are excluded from the weighted average. The weighted average is
computed as sum(gold_count_c * f1_c) / gold_total so a perfect prediction
scores exactly 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping

from .corpus import NEUTRAL, EMOTION_CATEGORIES, EmotionCausePair


class MetricsError(ValueError):
    """Scoring inputs violate a precondition (empty gold, key mismatch, ...)."""


@dataclass(frozen=True)
class CategoryScore:
    """Counts and derived fractions for one emotion category."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @property
    def gold(self) -> int:
        return self.tp + self.fn

    @property
    def pred(self) -> int:
        return self.tp + self.fp


@dataclass(frozen=True)
class ScoreReport:
    per_category: Mapping[str, CategoryScore]
    weighted_f1: float
    micro: tuple[float, float, float]  # (precision, recall, f1)
    gold_total: int
    pred_total: int

    def to_doc(self) -> dict:
        """Deterministic report document with 4-decimal fractions."""
        return {
            "weighted_f1": round(self.weighted_f1, 4),
            "micro": {
                "precision": round(self.micro[0], 4),
                "recall": round(self.micro[1], 4),
                "f1": round(self.micro[2], 4),
            },
            "per_category": {
                cat: {
                    "precision": round(s.precision, 4),
                    "recall": round(s.recall, 4),
                    "f1": round(s.f1, 4),
                    "gold": s.gold,
                    "pred": s.pred,
                }
                for cat, s in self.per_category.items()
            },
            "gold_total": self.gold_total,
            "pred_total": self.pred_total,
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _score_items(
    gold_items: Iterable[tuple[str, Hashable]],
    pred_items: Iterable[tuple[str, Hashable]],
) -> ScoreReport:
    """Core scorer over (category, identity) items with set semantics."""
    gold = set(gold_items)
    pred = set(pred_items)
    if not gold:
        raise MetricsError("gold set is empty; weighted averaging is undefined")

    categories = sorted({cat for cat, _ in gold} | {cat for cat, _ in pred})
    per_category: dict[str, CategoryScore] = {}
    weighted_sum = 0.0
    micro_tp = micro_fp = micro_fn = 0
    for cat in categories:
        gold_c = {item for c, item in gold if c == cat}
        pred_c = {item for c, item in pred if c == cat}
        tp = len(gold_c & pred_c)
        fp = len(pred_c - gold_c)
        fn = len(gold_c - pred_c)
        precision, recall, f1 = _prf(tp, fp, fn)
        per_category[cat] = CategoryScore(tp=tp, fp=fp, fn=fn,
                                          precision=precision, recall=recall, f1=f1)
        weighted_sum += len(gold_c) * f1
        micro_tp += tp
        micro_fp += fp
        micro_fn += fn

    return ScoreReport(
        per_category=per_category,
        weighted_f1=weighted_sum / len(gold),
        micro=_prf(micro_tp, micro_fp, micro_fn),
        gold_total=len(gold),
        pred_total=len(pred),
    )


def score_pairs(
    gold: Iterable[EmotionCausePair], pred: Iterable[EmotionCausePair]
) -> ScoreReport:
    """Score predicted pairs against gold pairs of a single conversation."""
    gold = list(gold)
    pred = list(pred)
    for p in gold + pred:
        if p.category == NEUTRAL:
            raise MetricsError(f"pair {p.as_list()} carries the neutral category")
    return _score_items(
        ((p.category, (p.emotion_index, p.category, p.cause_index)) for p in gold),
        ((p.category, (p.emotion_index, p.category, p.cause_index)) for p in pred),
    )


def score_keyed_pairs(
    gold: Mapping[str, Iterable[EmotionCausePair]],
    pred: Mapping[str, Iterable[EmotionCausePair]],
) -> ScoreReport:
    """Score pairs across conversations; identity includes the conversation id."""
    def items(mapping: Mapping[str, Iterable[EmotionCausePair]]):
        for conv_id, pairs in mapping.items():
            for p in pairs:
                if p.category == NEUTRAL:
                    raise MetricsError(f"pair {p.as_list()} in {conv_id!r} carries the neutral category")
                yield p.category, (conv_id, p.emotion_index, p.category, p.cause_index)

    return _score_items(items(gold), items(pred))


def score_erc(
    gold: Mapping[Hashable, str], pred: Mapping[Hashable, str]
) -> ScoreReport:
    """Label-level weighted F1 over the seven categories (identical key sets)."""
    if set(gold) != set(pred):
        missing = sorted(map(repr, set(gold) ^ set(pred)))[:5]
        raise MetricsError(f"gold and predicted label maps cover different targets, e.g. {missing}")
    if not gold:
        raise MetricsError("gold label map is empty")
    for label in list(gold.values()) + list(pred.values()):
        if label not in EMOTION_CATEGORIES:
            raise MetricsError(f"unknown emotion label {label!r}")
    return _score_items(
        ((label, key) for key, label in gold.items()),
        ((label, key) for key, label in pred.items()),
    )
