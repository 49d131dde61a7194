"""Query corpus: interrogation prompts tagged with their source dataset.

A corpus is scored by topical diversity, the percentage ratio of distinct
source datasets to total queries: 100 when every query comes from its own
dataset, approaching 0 when one dataset supplies them all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .seeds import content_hash, derive_seed


@dataclass(frozen=True)
class Query:
    id: str
    dataset_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValidationError(f"query {self.id!r}: text is empty")


@dataclass(frozen=True)
class QueryCorpus:
    queries: tuple[Query, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for q in self.queries:
            if q.id in seen:
                raise ValidationError(f"duplicate query id {q.id!r}")
            seen.add(q.id)

    @property
    def num_queries(self) -> int:
        return len(self.queries)

    @property
    def num_datasets(self) -> int:
        return len({q.dataset_id for q in self.queries})

    def content_hash(self) -> str:
        return content_hash([[q.id, q.dataset_id, q.text] for q in self.queries])


def compute_diversity(corpus: QueryCorpus) -> float:
    """Percentage of distinct datasets per query, in (0, 100]."""
    if corpus.num_queries == 0:
        raise ValidationError("empty corpus")
    return corpus.num_datasets / corpus.num_queries * 100.0


def sample_queries(
    pool: list[tuple[str, list[str]]], per_dataset: int, seed: int
) -> QueryCorpus:
    """Draw ``per_dataset`` texts without replacement from every pool entry.

    Each dataset gets its own RNG stream derived from (seed, dataset_id), so
    adding or reordering pool entries never perturbs the draws of the others.
    Query ids are ``{dataset_id}-{k}``; output is ordered by dataset id.
    """
    if per_dataset < 1:
        raise ValidationError("per_dataset must be >= 1")
    if not pool:
        raise ValidationError("empty corpus")
    seen_datasets: set[str] = set()
    for dataset_id, texts in pool:
        if dataset_id in seen_datasets:
            raise ValidationError(f"duplicate dataset {dataset_id!r} in pool")
        seen_datasets.add(dataset_id)
        if len(texts) < per_dataset:
            raise ValidationError(
                f"dataset {dataset_id!r} has {len(texts)} texts; need >= {per_dataset}"
            )
    queries: list[Query] = []
    for dataset_id, texts in sorted(pool, key=lambda entry: entry[0]):
        rng = np.random.default_rng(derive_seed(seed, dataset_id))
        chosen = rng.choice(len(texts), size=per_dataset, replace=False)
        for k, idx in enumerate(chosen):
            queries.append(Query(id=f"{dataset_id}-{k}", dataset_id=dataset_id, text=texts[idx]))
    return QueryCorpus(tuple(queries))


def save_corpus(corpus: QueryCorpus, path: str | Path) -> None:
    """Write one JSON record per line with fields id, dataset, text."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in corpus.queries:
            fh.write(json.dumps({"id": q.id, "dataset": q.dataset_id, "text": q.text},
                                ensure_ascii=False))
            fh.write("\n")


def load_corpus(path: str | Path) -> QueryCorpus:
    queries: list[Query] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                queries.append(Query(id=rec["id"], dataset_id=rec["dataset"], text=rec["text"]))
            except ValidationError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
    if not queries:
        raise ValidationError("empty corpus")
    return QueryCorpus(tuple(queries))
