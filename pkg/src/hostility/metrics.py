"""Weighted F1 scoring, the combined fine-grained score, and report generation.

The coarse hostile/non-hostile score is a support-weighted two-class F1 over
the whole evaluation corpus.  Each fine-grained dimension is scored on the
gold-hostile subset using the ungated probabilities, and the combined
fine-grained score averages the four dimension scores weighted by each
dimension's share of positive examples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .data import FINE_DIMENSIONS, LabeledPost

if TYPE_CHECKING:  # pragma: no cover
    from .strategies import PredictionSet

# Column order used by report rows and serialized report JSON.
REPORT_SCORE_ORDER = ("hostile", "defamation", "fake", "hate", "offensive", "weighted")


class MetricsError(ValueError):
    """Invalid evaluation inputs (length mismatch, missing predictions, ...)."""


@dataclass(frozen=True)
class BinaryConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_pairs(cls, preds: Sequence[bool], golds: Sequence[bool]) -> "BinaryConfusion":
        if len(preds) != len(golds):
            raise MetricsError(
                f"length mismatch: {len(preds)} predictions vs {len(golds)} golds"
            )
        if len(golds) == 0:
            raise MetricsError("cannot score an empty prediction list")
        tp = fp = fn = tn = 0
        for pred, gold in zip(preds, golds):
            if pred and gold:
                tp += 1
            elif pred and not gold:
                fp += 1
            elif not pred and gold:
                fn += 1
            else:
                tn += 1
        return cls(tp=tp, fp=fp, fn=fn, tn=tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def f1(self) -> float:
        """F1 of the positive class; 0 when precision + recall is 0."""
        precision = self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0
        recall = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        if precision + recall == 0.0:
            return 0.0
        return 2.0 * precision * recall / (precision + recall)

    def flipped(self) -> "BinaryConfusion":
        """Confusion of the complementary class (0 treated as positive)."""
        return BinaryConfusion(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


def binary_f1(preds: Sequence[bool], golds: Sequence[bool]) -> float:
    """Positive-class F1."""
    return BinaryConfusion.from_pairs(preds, golds).f1()


def weighted_f1(preds: Sequence[bool], golds: Sequence[bool]) -> float:
    """Support-weighted average of the positive-class and negative-class F1s."""
    confusion = BinaryConfusion.from_pairs(preds, golds)
    pos_support = confusion.tp + confusion.fn
    neg_support = confusion.tn + confusion.fp
    score = pos_support * confusion.f1() + neg_support * confusion.flipped().f1()
    return score / (pos_support + neg_support)


def weighted_fine_grained(
    f1s: Sequence[float], positive_supports: Sequence[int]
) -> float:
    """Average the four fine-grained scores by their positive-example fractions."""
    if len(f1s) != len(positive_supports):
        raise MetricsError("need one support per score")
    if any(s < 0 for s in positive_supports):
        raise MetricsError("supports must be non-negative")
    total = sum(positive_supports)
    if total == 0:
        raise MetricsError("all supports are zero")
    return sum(s * f for s, f in zip(positive_supports, f1s)) / total


@dataclass(frozen=True)
class MetricsReport:
    hostile_f1: float
    fake_f1: float
    hate_f1: float
    defamation_f1: float
    offensive_f1: float
    weighted_fine_grained: float
    supports: dict[str, int]
    subset: dict[str, object]

    def scores(self) -> dict[str, float]:
        return {
            "hostile": self.hostile_f1,
            "defamation": self.defamation_f1,
            "fake": self.fake_f1,
            "hate": self.hate_f1,
            "offensive": self.offensive_f1,
            "weighted": self.weighted_fine_grained,
        }

    def to_json_dict(self) -> dict:
        payload: dict = dict(self.scores())
        payload["supports"] = dict(self.supports)
        payload["subset"] = dict(self.subset)
        return payload

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )


def evaluate(
    predictions: "PredictionSet",
    gold_corpus: Sequence[LabeledPost],
    fine_scoring: str = "weighted",
    corpus_supports: dict[str, int] | None = None,
) -> MetricsReport:
    """Score predictions against a gold corpus, Table-style.

    The hostile score covers every post.  Fine-grained scores cover the
    gold-hostile subset and threshold the ungated probabilities at the
    prediction set's own threshold.  ``fine_scoring`` selects two-class
    support-weighted F1 (``weighted``, default) or positive-class F1
    (``binary``) per dimension.  ``corpus_supports`` overrides the combined
    score's weights with corpus-level positive counts.
    """
    if fine_scoring not in ("weighted", "binary"):
        raise MetricsError(f"fine_scoring must be 'weighted' or 'binary', got {fine_scoring!r}")
    score_fn = weighted_f1 if fine_scoring == "weighted" else binary_f1
    if not gold_corpus:
        raise MetricsError("cannot evaluate against an empty corpus")

    paired = []
    for post in gold_corpus:
        if post.labels is None:
            raise MetricsError(f"gold post {post.id!r} is unlabeled")
        pred = predictions.by_id.get(post.id)
        if pred is None:
            raise MetricsError(f"missing prediction for gold id {post.id!r}")
        paired.append((post, pred))

    threshold = predictions.threshold
    hostile_score = weighted_f1(
        [pred.labels.hostile for _, pred in paired],
        [post.labels.hostile for post, _ in paired],
    )

    fine_pairs = [(post, pred) for post, pred in paired if post.labels.hostile]
    fine_scores = {dim: 0.0 for dim in FINE_DIMENSIONS}
    supports = {dim: 0 for dim in FINE_DIMENSIONS}
    combined = 0.0
    if fine_pairs:
        for dim in FINE_DIMENSIONS:
            preds_d = [pred.fine_probs[dim] >= threshold for _, pred in fine_pairs]
            golds_d = [post.labels.flag(dim) for post, _ in fine_pairs]
            fine_scores[dim] = score_fn(preds_d, golds_d)
            supports[dim] = sum(golds_d)
        weight_source = corpus_supports if corpus_supports is not None else supports
        weights = [weight_source[dim] for dim in FINE_DIMENSIONS]
        if sum(weights) > 0:
            combined = weighted_fine_grained(
                [fine_scores[dim] for dim in FINE_DIMENSIONS], weights
            )

    return MetricsReport(
        hostile_f1=hostile_score,
        fake_f1=fine_scores["fake"],
        hate_f1=fine_scores["hate"],
        defamation_f1=fine_scores["defamation"],
        offensive_f1=fine_scores["offensive"],
        weighted_fine_grained=combined,
        supports=supports,
        subset={
            "posts": len(paired),
            "fine_posts": len(fine_pairs),
            "fine_policy": "gold-hostile",
            "fine_scoring": fine_scoring,
        },
    )


def misclassification_report(
    predictions: "PredictionSet",
    gold_corpus: Sequence[LabeledPost],
    limit: int | None = None,
) -> list[tuple[str, str, str, str]]:
    """Rows (id, text, gold labels, predicted labels) for disagreeing posts.

    Ordered by the number of disagreeing dimensions, most first; ties keep
    corpus order.  ``limit`` truncates the table.
    """
    rows = []
    for post in gold_corpus:
        if post.labels is None:
            raise MetricsError(f"gold post {post.id!r} is unlabeled")
        pred = predictions.by_id.get(post.id)
        if pred is None:
            raise MetricsError(f"missing prediction for gold id {post.id!r}")
        disagreements = sum(
            post.labels.flag(dim) != pred.labels.flag(dim)
            for dim in ("hostile", *FINE_DIMENSIONS)
        )
        if disagreements:
            rows.append((disagreements, post, pred))
    rows.sort(key=lambda item: -item[0])
    if limit is not None:
        rows = rows[: max(limit, 0)]
    return [
        (post.id, post.text, _label_text(post.labels), _label_text(pred.labels))
        for _, post, pred in rows
    ]


def _label_text(labels) -> str:
    if not labels.hostile:
        return "non-hostile"
    tags = [dim for dim in FINE_DIMENSIONS if labels.flag(dim)]
    return ",".join(tags) if tags else "hostile"


def write_misclassification_tsv(
    rows: Sequence[tuple[str, str, str, str]], path: str | Path
) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write("id\ttext\tgold\tpredicted\n")
        for row in rows:
            handle.write("\t".join(str(col).replace("\t", " ") for col in row) + "\n")
