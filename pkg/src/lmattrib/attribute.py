"""Four attribution engines over aligned base/fine-tuned transcript stores.

All four consume the same rectangular (model, query) transcript grids and emit
an :class:`AttributionResult` mapping each fine-tuned model to at most one
base model. Several fine-tuned models may share a base; only the one-vs-all
engine may answer NONE. Failed transcript cells are skipped, never scored.

* ``bleu``/``ter``: average sentence BLEU (argmax) or TER (argmin) between
  fine-tuned responses (references) and base responses (hypotheses).
* ``vsm``: cosine against per-base TF-IDF response documents, averaged over
  queries, argmax.
* ``multiclass``: n-gram classifier trained on base responses, mean posterior
  over queries, argmax.
* ``one_vs_all``: one binary classifier per base (positives vs complement);
  per query the bases voting positive compete by posterior, all-negative means
  an abstention; the final pairing is the modal vote, NONE when abstentions
  hold a strict majority over every base.

All ties break toward the lowest base index, so results are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classify import LabeledResponse, binary_family, train_multiclass
from .errors import ValidationError
from .interrogator import TranscriptStore
from .corpus import QueryCorpus
from .textmetrics import bleu, ter, tokenize
from .vsm import ResponseDocument, build_index, compute_sim

ABSTAIN = -1


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-(fine-tuned, base) query score lists for one metric."""

    metric: str
    fine_tuned_ids: tuple[str, ...]
    base_ids: tuple[str, ...]
    per_query: dict[tuple[str, str], tuple[float, ...]]

    def mean(self, ft_id: str, base_id: str) -> float | None:
        scores = self.per_query[(ft_id, base_id)]
        if not scores:
            return None
        return sum(scores) / len(scores)

    def mean_vector(self, ft_id: str) -> list[float | None]:
        return [self.mean(ft_id, base_id) for base_id in self.base_ids]


@dataclass(frozen=True)
class AttributionResult:
    """Pairing per fine-tuned model plus the evidence behind each choice.

    ``evidence[ft]`` is ``{"scores": [...]}`` (one entry per base, None for
    unscorable cells) for the score-driven methods, or
    ``{"votes": [...], "abstain": n}`` for one-vs-all.
    """

    method: str
    base_ids: tuple[str, ...]
    pairs: dict[str, str | None]
    evidence: dict[str, dict]

    def to_report_dict(self, corpus_hash: str, seed: int) -> dict:
        return {
            "method": self.method,
            "corpus_hash": corpus_hash,
            "base_ids": list(self.base_ids),
            "pairs": dict(self.pairs),
            "evidence": self.evidence,
            "seed": seed,
            "versions": {"lmattrib": __version__, "report": 1},
        }


def write_report(result: AttributionResult, corpus: QueryCorpus, seed: int,
                 path: str | Path) -> None:
    """Write the result as JSON with stable key order (byte-reproducible)."""
    payload = result.to_report_dict(corpus.content_hash(), seed)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def _arg_best(values: list[float | None], largest: bool) -> int:
    best_idx = -1
    best = None
    for i, v in enumerate(values):
        if v is None:
            continue
        if best is None or (v > best if largest else v < best):
            best, best_idx = v, i
    if best_idx < 0:
        raise ValidationError("no scorable base models")
    return best_idx


def _check_coverage(store: TranscriptStore, kind: str, corpus: QueryCorpus) -> list[str]:
    ids = store.model_ids(kind)
    if not ids:
        raise ValidationError(f"store holds no {kind} records")
    for model_id in ids:
        for q in corpus.queries:
            if store.get(model_id, q.id) is None:
                raise ValidationError(f"store missing record for ({model_id}, {q.id})")
    return ids


def attribute_bleu_ter(base_store: TranscriptStore, ft_store: TranscriptStore,
                       corpus: QueryCorpus,
                       swap_ref_hyp: bool = False) -> tuple[AttributionResult, AttributionResult]:
    """Pair by mean BLEU (higher wins) and mean TER (lower wins) in one pass.

    Fine-tuned responses serve as references and base responses as hypotheses
    unless ``swap_ref_hyp``. Cells with a failed record on either side, or an
    empty reference, are excluded from the mean.
    """
    base_ids = tuple(_check_coverage(base_store, "base", corpus))
    ft_ids = tuple(_check_coverage(ft_store, "finetuned", corpus))

    base_tokens = {
        (b, q.id): tokenize(base_store.get(b, q.id).response_text)
        for b in base_ids for q in corpus.queries
    }
    bleu_cells: dict[tuple[str, str], tuple[float, ...]] = {}
    ter_cells: dict[tuple[str, str], tuple[float, ...]] = {}
    for ft in ft_ids:
        ft_tokens = {q.id: tokenize(ft_store.get(ft, q.id).response_text) for q in corpus.queries}
        for b in base_ids:
            bleu_scores: list[float] = []
            ter_scores: list[float] = []
            for q in corpus.queries:
                if ft_store.get(ft, q.id).failed or base_store.get(b, q.id).failed:
                    continue
                ref, hyp = ft_tokens[q.id], base_tokens[(b, q.id)]
                if swap_ref_hyp:
                    ref, hyp = hyp, ref
                if not ref:
                    continue
                bleu_scores.append(bleu(ref, hyp).score)
                ter_scores.append(ter(ref, hyp).score)
            bleu_cells[(ft, b)] = tuple(bleu_scores)
            ter_cells[(ft, b)] = tuple(ter_scores)

    results = []
    for metric, cells, largest in (("bleu", bleu_cells, True), ("ter", ter_cells, False)):
        matrix = ScoreMatrix(metric, ft_ids, base_ids, cells)
        pairs: dict[str, str | None] = {}
        evidence: dict[str, dict] = {}
        for ft in ft_ids:
            vector = matrix.mean_vector(ft)
            pairs[ft] = base_ids[_arg_best(vector, largest)]
            evidence[ft] = {"scores": vector}
        results.append(AttributionResult(metric, base_ids, pairs, evidence))
    return results[0], results[1]


def _response_documents(base_store: TranscriptStore, base_ids: tuple[str, ...],
                        corpus: QueryCorpus) -> list[ResponseDocument]:
    docs = []
    for b in base_ids:
        parts = [base_store.get(b, q.id).response_text
                 for q in corpus.queries if not base_store.get(b, q.id).failed]
        docs.append(ResponseDocument(b, " ".join(parts)))
    return docs


def attribute_vsm(base_store: TranscriptStore, ft_store: TranscriptStore,
                  corpus: QueryCorpus) -> AttributionResult:
    """Pair by mean cosine against per-base response documents."""
    base_ids = tuple(_check_coverage(base_store, "base", corpus))
    ft_ids = tuple(_check_coverage(ft_store, "finetuned", corpus))
    index = build_index(_response_documents(base_store, base_ids, corpus))

    pairs: dict[str, str | None] = {}
    evidence: dict[str, dict] = {}
    for ft in ft_ids:
        total = np.zeros(len(base_ids))
        scored = 0
        for q in corpus.queries:
            record = ft_store.get(ft, q.id)
            if record.failed:
                continue
            total += compute_sim(index, record.response_text)
            scored += 1
        if scored == 0:
            raise ValidationError(f"no scorable queries for {ft!r}")
        vector = [float(v) for v in total / scored]
        pairs[ft] = base_ids[_arg_best(vector, largest=True)]
        evidence[ft] = {"scores": vector}
    return AttributionResult("vsm", base_ids, pairs, evidence)


def attribute_multiclass(base_store: TranscriptStore, ft_store: TranscriptStore,
                         corpus: QueryCorpus) -> AttributionResult:
    """Pair by mean classifier posterior over base-model labels."""
    base_ids = tuple(_check_coverage(base_store, "base", corpus))
    ft_ids = tuple(_check_coverage(ft_store, "finetuned", corpus))
    training = [
        LabeledResponse(b, base_store.get(b, q.id).response_text, q.id)
        for b in base_ids for q in corpus.queries if not base_store.get(b, q.id).failed
    ]
    model = train_multiclass(training)
    order = [model.labels.index(b) for b in base_ids]

    pairs: dict[str, str | None] = {}
    evidence: dict[str, dict] = {}
    for ft in ft_ids:
        total = np.zeros(len(base_ids))
        scored = 0
        for q in corpus.queries:
            record = ft_store.get(ft, q.id)
            if record.failed:
                continue
            total += model.predict_scores(record.response_text)[order]
            scored += 1
        if scored == 0:
            raise ValidationError(f"no scorable queries for {ft!r}")
        vector = [float(v) for v in total / scored]
        pairs[ft] = base_ids[_arg_best(vector, largest=True)]
        evidence[ft] = {"scores": vector}
    return AttributionResult("multiclass", base_ids, pairs, evidence)


def resolve_votes(vote_counts: list[int], abstain_count: int) -> int | None:
    """Modal winner: None only when abstentions strictly beat every base.

    Ties between bases go to the lowest index; a tie between the abstention
    count and the best base prefers the base.
    """
    winner = int(np.argmax(vote_counts)) if vote_counts else ABSTAIN
    if not vote_counts or abstain_count > vote_counts[winner]:
        return None
    return winner


def attribute_one_vs_all(base_store: TranscriptStore, ft_store: TranscriptStore,
                         corpus: QueryCorpus) -> AttributionResult:
    """Pair by per-query votes from per-base binary classifiers; NONE allowed."""
    base_ids = tuple(_check_coverage(base_store, "base", corpus))
    ft_ids = tuple(_check_coverage(ft_store, "finetuned", corpus))
    docs_by_label = {
        b: [base_store.get(b, q.id).response_text
            for q in corpus.queries if not base_store.get(b, q.id).failed]
        for b in base_ids
    }
    classifiers = binary_family(docs_by_label)

    pairs: dict[str, str | None] = {}
    evidence: dict[str, dict] = {}
    for ft in ft_ids:
        votes = [0] * len(base_ids)
        abstain = 0
        scored = 0
        for q in corpus.queries:
            record = ft_store.get(ft, q.id)
            if record.failed:
                continue
            scored += 1
            positive_probs = []
            for b in base_ids:
                p_neg, p_pos = classifiers[b].predict_scores(record.response_text)
                positive_probs.append(ABSTAIN if p_neg >= p_pos else float(p_pos))
            best = max(positive_probs)
            if best == ABSTAIN:
                abstain += 1
            else:
                votes[positive_probs.index(best)] += 1
        if scored == 0:
            raise ValidationError(f"no scorable queries for {ft!r}")
        winner = resolve_votes(votes, abstain)
        pairs[ft] = None if winner is None else base_ids[winner]
        evidence[ft] = {"votes": votes, "abstain": abstain}
    return AttributionResult("one_vs_all", base_ids, pairs, evidence)


def run_method(method: str, base_store: TranscriptStore, ft_store: TranscriptStore,
               corpus: QueryCorpus) -> AttributionResult:
    """Dispatch a single method name (``ova`` accepted for ``one_vs_all``)."""
    method = {"ova": "one_vs_all"}.get(method, method)
    if method in ("bleu", "ter"):
        bleu_result, ter_result = attribute_bleu_ter(base_store, ft_store, corpus)
        return bleu_result if method == "bleu" else ter_result
    engines = {"vsm": attribute_vsm, "multiclass": attribute_multiclass,
               "one_vs_all": attribute_one_vs_all}
    if method not in engines:
        raise ValidationError(f"unknown method {method!r}")
    return engines[method](base_store, ft_store, corpus)
