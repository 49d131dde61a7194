"""Experiment orchestration: simulations, cross-validation, accuracy scoring.

A simulation repeats the full loop (build a synthetic family, serve it over
HTTP, interrogate every model with a seeded corpus, run each configured
attribution method, score against ground truth) with per-repetition seeds
derived from one master seed, so any report can be regenerated from its
embedded config. Orphans count as correct only when a method answers NONE,
which only one_vs_all can do; accuracy denominators include orphans anyway,
and a non-orphan accuracy is reported alongside.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attribute import run_method
from .classify import LabeledResponse, binary_family, cross_validate, stratified_kfold
from .corpus import QueryCorpus, load_corpus, sample_queries
from .errors import ValidationError
from .interrogator import Interrogator, TranscriptStore
from .seeds import derive_seed
from .simnet import FamilyLayout, build_family, master_lexicon, serve

ALL_METHODS = ("bleu", "ter", "vsm", "multiclass", "one_vs_all")


@dataclass(frozen=True)
class CorpusSpec:
    """Synthetic pools (datasets of lexicon-token queries) or a corpus file."""

    num_datasets: int = 10
    per_dataset: int = 9
    pool_multiplier: int = 3
    query_tokens: int = 8
    path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    family: FamilyLayout = field(default_factory=FamilyLayout)
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    methods: tuple[str, ...] = ALL_METHODS
    repetitions: int = 10
    master_seed: int = 0
    max_tokens: int = 30
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        for m in self.methods:
            if m not in ALL_METHODS and m != "ova":
                raise ValidationError(f"unknown method {m!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            return cls(
                family=FamilyLayout(**raw.get("family", {})),
                corpus=CorpusSpec(**raw.get("corpus", {})),
                methods=tuple(raw.get("methods", ALL_METHODS)),
                repetitions=raw.get("repetitions", 10),
                master_seed=raw.get("master_seed", 0),
                max_tokens=raw.get("max_tokens", 30),
                parallelism=raw.get("parallelism", 1),
            )
        except TypeError as exc:
            raise ValidationError(f"malformed config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def synthetic_pools(seed: int, spec: CorpusSpec, lexicon_size: int) -> list[tuple[str, list[str]]]:
    """Per-dataset pools of random lexicon-token queries."""
    lexicon = master_lexicon(lexicon_size)
    pools = []
    for i in range(spec.num_datasets):
        rng = np.random.default_rng(derive_seed(seed, "pool", i))
        texts = [
            " ".join(lexicon[j] for j in rng.integers(0, len(lexicon), size=spec.query_tokens))
            for _ in range(spec.per_dataset * spec.pool_multiplier)
        ]
        pools.append((f"ds-{i:02d}", texts))
    return pools


def build_corpus(seed: int, spec: CorpusSpec, lexicon_size: int) -> QueryCorpus:
    if spec.path is not None:
        return load_corpus(spec.path)
    return sample_queries(synthetic_pools(seed, spec, lexicon_size), spec.per_dataset, seed)


def score_pairing(result, ground_truth: dict[str, str | None]) -> float:
    """Exact-match rate of predicted pairs; NONE matches orphan ground truth."""
    correct, total = pairing_counts(result.pairs, ground_truth)
    return correct / total


def pairing_counts(pairs: dict[str, str | None], ground_truth: dict[str, str | None],
                   only_ids: list[str] | None = None) -> tuple[int, int]:
    ids = list(ground_truth) if only_ids is None else only_ids
    if not ids:
        raise ValidationError("empty ground truth")
    for ft_id in ids:
        if ft_id not in pairs:
            raise ValidationError(f"result has no pairing for {ft_id!r}")
    correct = sum(1 for ft_id in ids if pairs[ft_id] == ground_truth[ft_id])
    return correct, len(ids)


@dataclass
class ExperimentReport:
    """Everything needed to audit or regenerate a simulation run."""

    config: dict
    repetitions: list[dict]
    aggregates: dict
    query_budget: int
    partial: bool

    def to_json_bytes(self) -> bytes:
        payload = {
            "config": self.config,
            "repetitions": self.repetitions,
            "aggregates": self.aggregates,
            "query_budget": self.query_budget,
            "partial": self.partial,
        }
        return (json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_json_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentReport":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(raw["config"], raw["repetitions"], raw["aggregates"],
                   raw["query_budget"], raw["partial"])


def _run_repetition(config: ExperimentConfig, rep: int) -> tuple[dict, int]:
    rep_seed = derive_seed(config.master_seed, "rep", rep)
    family = build_family(rep_seed, config.family)
    lexicon_size = round(config.family.vocab_size / config.family.overlap_ratio)
    corpus = build_corpus(derive_seed(rep_seed, "corpus"), config.corpus, lexicon_size)
    server = serve(family)
    try:
        interrogator = Interrogator(max_tokens=config.max_tokens,
                                    generation_seed=derive_seed(rep_seed, "gen"))
        base_store = interrogator.interrogate_all(server.endpoints("base"), corpus,
                                                  config.parallelism)
        ft_store = interrogator.interrogate_all(server.endpoints("finetuned"), corpus,
                                                config.parallelism)
    finally:
        server.stop()

    truth = family.ground_truth
    non_orphans = [ft for ft, parent in truth.items() if parent is not None]
    methods_out: dict[str, dict] = {}
    for method in config.methods:
        result = run_method(method, base_store, ft_store, corpus)
        correct, total = pairing_counts(result.pairs, truth)
        entry = {
            "base_ids": list(result.base_ids),
            "pairs": dict(result.pairs),
            "evidence": result.evidence,
            "accuracy": correct / total,
            "correct": correct,
            "total": total,
        }
        if non_orphans:
            no_correct, no_total = pairing_counts(result.pairs, truth, non_orphans)
            entry["non_orphan_accuracy"] = no_correct / no_total
        methods_out[result.method] = entry
    entry = {
        "repetition": rep,
        "seed": rep_seed,
        "corpus_hash": corpus.content_hash(),
        "ground_truth": dict(truth),
        "methods": methods_out,
    }
    return entry, interrogator.request_count


def run_simulation(config: ExperimentConfig) -> ExperimentReport:
    """Run all repetitions; a failing repetition is recorded, not fatal."""
    repetitions: list[dict] = []
    budget = 0
    partial = False
    for rep in range(config.repetitions):
        try:
            entry, requests_used = _run_repetition(config, rep)
        except Exception as exc:  # noqa: BLE001  (flagged in the report instead)
            repetitions.append({"repetition": rep, "error": f"{exc.__class__.__name__}: {exc}"})
            partial = True
            continue
        repetitions.append(entry)
        budget += requests_used

    aggregates: dict[str, dict] = {}
    ok_reps = [r for r in repetitions if "methods" in r]
    if ok_reps:
        for method in ok_reps[0]["methods"]:
            acc = [r["methods"][method]["accuracy"] for r in ok_reps]
            agg = {
                "mean_accuracy": float(np.mean(acc)),
                "min_accuracy": float(np.min(acc)),
                "max_accuracy": float(np.max(acc)),
            }
            non_orphan = [r["methods"][method].get("non_orphan_accuracy") for r in ok_reps]
            if all(v is not None for v in non_orphan):
                agg["mean_non_orphan_accuracy"] = float(np.mean(non_orphan))
            aggregates[method] = agg
    return ExperimentReport(config.to_dict(), repetitions, aggregates, budget, partial)


def run_cv(base_store: TranscriptStore, k: int, seed: int,
           backend: str = "multiclass") -> float:
    """Stratified k-fold accuracy over base-model transcripts.

    ``multiclass`` scores held-out rows with a single classifier's argmax;
    ``one_vs_all`` applies the vote rule per row (an abstention is wrong).
    """
    data = [
        LabeledResponse(r.model_id, r.response_text, r.query_id)
        for r in base_store if r.model_kind == "base" and not r.failed
    ]
    if not data:
        raise ValidationError("store holds no base records")
    backend = {"ova": "one_vs_all"}.get(backend, backend)
    if backend == "multiclass":
        return cross_validate(data, k, seed)
    if backend != "one_vs_all":
        raise ValidationError(f"unknown backend {backend!r}")

    plan = stratified_kfold(data, k, seed)
    labels = sorted({rec.label for rec in data})
    fold_accuracies = []
    for fold in range(k):
        held = set(plan.fold_indices(fold))
        docs_by_label: dict[str, list[str]] = {label: [] for label in labels}
        for i, rec in enumerate(data):
            if i not in held:
                docs_by_label[rec.label].append(rec.text)
        classifiers = binary_family(docs_by_label)
        correct = 0
        for i in sorted(held):
            probs = []
            for label in labels:
                p_neg, p_pos = classifiers[label].predict_scores(data[i].text)
                probs.append(-1.0 if p_neg >= p_pos else float(p_pos))
            best = max(probs)
            predicted = None if best == -1.0 else labels[probs.index(best)]
            if predicted == data[i].label:
                correct += 1
        fold_accuracies.append(correct / len(held))
    return float(np.mean(fold_accuracies))
