"""Pluggable text-classifier backend: multinomial naive Bayes over n-grams.

Features are token unigrams plus bigrams from the shared tokenizer, counted
with Laplace alpha=1 smoothing; class priors are add-one smoothed document
frequencies. ``predict_scores`` returns a normalized posterior over the label
set, which downstream voting code compares directly. The ``epochs`` argument
of the training entry points exists for backend compatibility and is a no-op
for this closed-form backend.

Supports multiclass training over base-model labels, per-base binary training
(positives vs the complement), and stratified k-fold cross-validation.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .seeds import derive_seed
from .textmetrics import tokenize

LAPLACE_ALPHA = 1.0
MODEL_MAGIC = "lmattrib-nb/1"

BINARY_LABELS = ("negative", "positive")


@dataclass(frozen=True)
class LabeledResponse:
    label: str
    text: str
    query_id: str = ""


def extract_features(text: str) -> Counter:
    """Unigram and bigram counts; bigrams are space-joined token pairs."""
    tokens = tokenize(text)
    feats = Counter(tokens)
    for a, b in zip(tokens, tokens[1:]):
        feats[f"{a} {b}"] += 1
    return feats


class NgramClassifier:
    """Multinomial naive Bayes over pre-counted n-gram features."""

    def __init__(self, labels: tuple[str, ...], doc_counts: list[int],
                 feature_counts: list[dict[str, int]]):
        if len(labels) < 2:
            raise ValidationError("need at least 2 labels")
        self.labels = labels
        self._doc_counts = list(doc_counts)
        self._feature_counts = [dict(fc) for fc in feature_counts]
        self._vocab = set()
        for fc in self._feature_counts:
            self._vocab.update(fc)
        total_docs = sum(self._doc_counts)
        self._priors = np.array(
            [(n + 1.0) / (total_docs + len(labels)) for n in self._doc_counts]
        )
        self._log_priors = np.log(self._priors)
        self._totals = [sum(fc.values()) for fc in self._feature_counts]

    def predict_scores(self, text: str) -> np.ndarray:
        """Posterior probability per label; unknown features are ignored.

        With no known features the (smoothed) priors are returned verbatim.
        """
        feats = {f: n for f, n in extract_features(text).items() if f in self._vocab}
        if not feats:
            return self._priors.copy()
        denom_base = float(len(self._vocab)) * LAPLACE_ALPHA
        log_scores = self._log_priors.copy()
        for ci in range(len(self.labels)):
            fc = self._feature_counts[ci]
            denom = self._totals[ci] + denom_base
            acc = 0.0
            for f, n in feats.items():
                acc += n * math.log((fc.get(f, 0) + LAPLACE_ALPHA) / denom)
            log_scores[ci] += acc
        log_scores -= log_scores.max()
        scores = np.exp(log_scores)
        return scores / scores.sum()

    def save(self, path: str | Path) -> None:
        payload = {
            "magic": MODEL_MAGIC,
            "labels": list(self.labels),
            "doc_counts": self._doc_counts,
            "feature_counts": self._feature_counts,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "NgramClassifier":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("magic") != MODEL_MAGIC:
            raise ValidationError(f"{path}: not a {MODEL_MAGIC} model file")
        return cls(tuple(payload["labels"]), payload["doc_counts"], payload["feature_counts"])


def _aggregate(texts: list[str]) -> tuple[int, dict[str, int]]:
    counts: Counter = Counter()
    for text in texts:
        counts.update(extract_features(text))
    return len(texts), dict(counts)


def train_multiclass(data: list[LabeledResponse], epochs: int = 3) -> NgramClassifier:
    """Train one classifier over all labels present in ``data`` (sorted order)."""
    del epochs
    by_label: dict[str, list[str]] = {}
    for rec in data:
        by_label.setdefault(rec.label, []).append(rec.text)
    if len(by_label) < 2:
        raise ValidationError("need at least 2 distinct labels")
    labels = tuple(sorted(by_label))
    doc_counts = []
    feature_counts = []
    for label in labels:
        n, fc = _aggregate(by_label[label])
        doc_counts.append(n)
        feature_counts.append(fc)
    return NgramClassifier(labels, doc_counts, feature_counts)


def train_binary(positive: list[str], negative: list[str], epochs: int = 3) -> NgramClassifier:
    """Train a [negative, positive] classifier; both sides must be non-empty."""
    del epochs
    if not positive:
        raise ValidationError("no positive examples")
    if not negative:
        raise ValidationError("no negative examples")
    n_neg, fc_neg = _aggregate(negative)
    n_pos, fc_pos = _aggregate(positive)
    return NgramClassifier(BINARY_LABELS, [n_neg, n_pos], [fc_neg, fc_pos])


def binary_family(docs_by_label: dict[str, list[str]]) -> dict[str, NgramClassifier]:
    """One binary classifier per label, negatives being everyone else's docs.

    Equivalent to calling :func:`train_binary` per label but aggregates each
    label's features once and derives complements by subtraction.
    """
    if len(docs_by_label) < 2:
        raise ValidationError("need at least 2 labels")
    per_label = {label: _aggregate(texts) for label, texts in docs_by_label.items()}
    total_docs = sum(n for n, _ in per_label.values())
    total_counts: Counter = Counter()
    for _, fc in per_label.values():
        total_counts.update(fc)
    classifiers: dict[str, NgramClassifier] = {}
    for label, (n_pos, fc_pos) in per_label.items():
        if n_pos == 0:
            raise ValidationError(f"label {label!r} has no examples")
        fc_neg = {f: total_counts[f] - fc_pos.get(f, 0) for f in total_counts}
        fc_neg = {f: n for f, n in fc_neg.items() if n > 0}
        classifiers[label] = NgramClassifier(
            BINARY_LABELS, [total_docs - n_pos, n_pos], [fc_neg, fc_pos]
        )
    return classifiers


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: tuple[int, ...]  # record index -> fold id, stratified by label

    def fold_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignments) if f == fold]


def stratified_kfold(data: list[LabeledResponse], k: int, seed: int) -> FoldPlan:
    """Assign records to ``k`` folds, balanced within every label.

    Records are ordered by a content hash keyed on the seed before dealing
    them round-robin, so the plan is invariant under input permutation.
    """
    if k < 2:
        raise ValidationError("k must be >= 2")
    by_label: dict[str, list[int]] = {}
    for i, rec in enumerate(data):
        by_label.setdefault(rec.label, []).append(i)
    for label, indices in by_label.items():
        if len(indices) < k:
            raise ValidationError(f"label {label!r} has {len(indices)} records; need >= {k}")
    assignments = [0] * len(data)
    for label, indices in by_label.items():
        keyed = sorted(
            indices,
            key=lambda i: (derive_seed(seed, data[i].label, data[i].query_id, data[i].text), i),
        )
        for pos, i in enumerate(keyed):
            assignments[i] = pos % k
    return FoldPlan(k, tuple(assignments))


def cross_validate(data: list[LabeledResponse], k: int, seed: int) -> float:
    """Mean held-out argmax accuracy over a stratified k-fold split."""
    plan = stratified_kfold(data, k, seed)
    fold_accuracies = []
    for fold in range(k):
        held = set(plan.fold_indices(fold))
        model = train_multiclass([rec for i, rec in enumerate(data) if i not in held])
        correct = 0
        for i in sorted(held):
            scores = model.predict_scores(data[i].text)
            if model.labels[int(np.argmax(scores))] == data[i].label:
                correct += 1
        fold_accuracies.append(correct / len(held))
    return float(np.mean(fold_accuracies))
