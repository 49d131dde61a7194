"""TF-IDF vector space over per-base-model response documents.

One document per base model (its responses to every query, concatenated);
fine-tuned responses are scored against all documents by cosine similarity.
Weighting is raw term frequency times smoothed idf ``ln((1+D)/(1+df)) + 1``
with L2 normalization, over the shared tokenizer's unigrams.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .textmetrics import tokenize


@dataclass(frozen=True)
class ResponseDocument:
    base_model_id: str
    text: str


@dataclass(frozen=True)
class TfIdfIndex:
    base_ids: tuple[str, ...]
    vocabulary: dict[str, int]
    idf: np.ndarray
    doc_vectors: np.ndarray  # shape (docs, terms), rows unit-norm or all-zero


def _weighted(counts: Counter, vocabulary: dict[str, int], idf: np.ndarray) -> np.ndarray:
    vec = np.zeros(len(vocabulary))
    for term, count in counts.items():
        idx = vocabulary.get(term)
        if idx is not None:
            vec[idx] = count * idf[idx]
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def build_index(documents: list[ResponseDocument]) -> TfIdfIndex:
    """Index documents with a lexicographic vocabulary; order is preserved."""
    if not documents:
        raise ValidationError("no documents")
    doc_tokens = [tokenize(doc.text) for doc in documents]
    if all(not toks for toks in doc_tokens):
        raise ValidationError("all documents empty")
    vocabulary = {term: i for i, term in enumerate(sorted({t for toks in doc_tokens for t in toks}))}
    df = np.zeros(len(vocabulary))
    for toks in doc_tokens:
        for term in set(toks):
            df[vocabulary[term]] += 1
    idf = np.log((1.0 + len(documents)) / (1.0 + df)) + 1.0
    doc_vectors = np.stack([_weighted(Counter(toks), vocabulary, idf) for toks in doc_tokens])
    return TfIdfIndex(tuple(d.base_model_id for d in documents), vocabulary, idf, doc_vectors)


def vectorize(index: TfIdfIndex, text: str) -> np.ndarray:
    """Unit-norm tf-idf vector of ``text``; unknown terms are dropped."""
    return _weighted(Counter(tokenize(text)), index.vocabulary, index.idf)


def compute_sim(index: TfIdfIndex, text: str) -> np.ndarray:
    """Cosine of ``text`` against every document, in document order, each in [0, 1]."""
    sims = index.doc_vectors @ vectorize(index, text)
    return np.clip(sims, 0.0, 1.0)
