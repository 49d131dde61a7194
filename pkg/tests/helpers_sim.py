"""Shared builders for in-process synthetic runs (no HTTP)."""

from __future__ import annotations

from lmattrib.corpus import QueryCorpus
from lmattrib.interrogator import TranscriptRecord, TranscriptStore
from lmattrib.simnet import MarkovModel, SyntheticFamily, generate_response

EPOCH = "1970-01-01T00:00:00+00:00"


def store_for(models: list[MarkovModel], kind: str, corpus: QueryCorpus,
              max_tokens: int, seed: int) -> TranscriptStore:
    records = []
    for model in models:
        for q in corpus.queries:
            records.append(TranscriptRecord(
                model_id=model.model_id,
                model_kind=kind,
                query_id=q.id,
                query_text=q.text,
                response_text=generate_response(model, q.text, max_tokens, seed),
                latency_ms=0,
                timestamp=EPOCH,
            ))
    return TranscriptStore(sorted(records, key=lambda r: r.key))


def family_stores(family: SyntheticFamily, corpus: QueryCorpus, max_tokens: int,
                  seed: int) -> tuple[TranscriptStore, TranscriptStore]:
    return (store_for(family.bases, "base", corpus, max_tokens, seed),
            store_for(family.children, "finetuned", corpus, max_tokens, seed))
