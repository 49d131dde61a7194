"""HTTP interrogation client with retries and a transcript cache.

Every (model, query) pair becomes one transcript record, failures included:
an exhausted retry budget or an unusable response body yields a record with
``failed=True`` and an empty response rather than a dropped row, keeping the
downstream score grids rectangular. Responses are stored raw; set
``strip_prompt_prefix`` if an API echoes the prompt and you want it removed.

The wire protocol is ``POST {base_url}/generate`` with a JSON body
``{"prompt", "max_tokens", "seed"}`` returning ``{"text"}``; an auth token, if
present, is sent as a bearer Authorization header. Retries (timeouts and 5xx
only) back off exponentially from ``backoff_seconds``.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import ValidationError
from .seeds import content_hash

RETRYABLE_STATUS = range(500, 600)


@dataclass(frozen=True)
class ModelEndpoint:
    model_id: str
    kind: str  # "base" | "finetuned"
    base_url: str
    auth_token: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("base", "finetuned"):
            raise ValidationError(f"endpoint kind must be base or finetuned, got {self.kind!r}")


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_seconds: float = 0.25
    timeout_seconds: float = 10.0

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValidationError("attempts must be >= 1")


@dataclass(frozen=True)
class TranscriptRecord:
    model_id: str
    model_kind: str
    query_id: str
    query_text: str
    response_text: str
    latency_ms: int
    timestamp: str  # ISO 8601 UTC
    failed: bool = False
    fail_reason: str | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.model_id, self.query_id)


class TranscriptStore:
    """Transcript records indexed by (model_id, query_id)."""

    def __init__(self, records: list[TranscriptRecord] | None = None):
        self._records: list[TranscriptRecord] = []
        self._index: dict[tuple[str, str], TranscriptRecord] = {}
        for rec in records or []:
            self.add(rec)

    def add(self, record: TranscriptRecord) -> None:
        if record.key in self._index:
            raise ValidationError(f"duplicate transcript record for {record.key}")
        self._records.append(record)
        self._index[record.key] = record

    def get(self, model_id: str, query_id: str) -> TranscriptRecord | None:
        return self._index.get((model_id, query_id))

    @property
    def records(self) -> tuple[TranscriptRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def model_ids(self, kind: str | None = None) -> list[str]:
        ids = {r.model_id for r in self._records if kind is None or r.model_kind == kind}
        return sorted(ids)

    def sorted(self) -> "TranscriptStore":
        return TranscriptStore(sorted(self._records, key=lambda r: r.key))

    def content_fingerprint(self) -> str:
        """Hash of the sorted records, ignoring latency and timestamps."""
        rows = [
            [r.model_id, r.model_kind, r.query_id, r.query_text, r.response_text,
             r.failed, r.fail_reason]
            for r in sorted(self._records, key=lambda r: r.key)
        ]
        return content_hash(rows)


def save_store(store: TranscriptStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in store:
            row = {
                "model_id": r.model_id,
                "model_kind": r.model_kind,
                "query_id": r.query_id,
                "query": r.query_text,
                "response": r.response_text,
                "latency_ms": r.latency_ms,
                "ts": r.timestamp,
                "failed": r.failed,
            }
            if r.fail_reason is not None:
                row["fail_reason"] = r.fail_reason
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")


def load_store(path: str | Path) -> TranscriptStore:
    store = TranscriptStore()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                store.add(TranscriptRecord(
                    model_id=row["model_id"],
                    model_kind=row["model_kind"],
                    query_id=row["query_id"],
                    query_text=row["query"],
                    response_text=row["response"],
                    latency_ms=row["latency_ms"],
                    timestamp=row["ts"],
                    failed=row["failed"],
                    fail_reason=row.get("fail_reason"),
                ))
            except ValidationError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
    return store


class Interrogator:
    """Sends queries to model endpoints, reusing cached transcripts.

    A record already present in the cache for (model_id, query_id) is returned
    without touching the network, so warm re-runs cost zero requests.
    ``request_count`` tallies every HTTP attempt actually issued.
    """

    def __init__(self, policy: RetryPolicy = RetryPolicy(), max_tokens: int = 30,
                 generation_seed: int = 0, strip_prompt_prefix: bool = False,
                 cache: TranscriptStore | None = None):
        self.policy = policy
        self.max_tokens = max_tokens
        self.generation_seed = generation_seed
        self.strip_prompt_prefix = strip_prompt_prefix
        self.cache = cache if cache is not None else TranscriptStore()
        self.request_count = 0
        self._count_lock = threading.Lock()
        self._local = threading.local()

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def _bump(self) -> None:
        with self._count_lock:
            self.request_count += 1

    def interrogate(self, endpoint: ModelEndpoint, query) -> TranscriptRecord:
        cached = self.cache.get(endpoint.model_id, query.id)
        if cached is not None:
            return cached
        record = self._fetch(endpoint, query)
        self.cache.add(record)
        return record

    def _fetch(self, endpoint: ModelEndpoint, query) -> TranscriptRecord:
        url = endpoint.base_url.rstrip("/") + "/generate"
        headers = {}
        if endpoint.auth_token:
            headers["Authorization"] = f"Bearer {endpoint.auth_token}"
        body = {"prompt": query.text, "max_tokens": self.max_tokens,
                "seed": self.generation_seed}
        started = time.monotonic()
        failure = "unreachable"
        for attempt in range(self.policy.attempts):
            if attempt:
                time.sleep(self.policy.backoff_seconds * 2 ** (attempt - 1))
            self._bump()
            try:
                resp = self._session().post(url, json=body, headers=headers,
                                            timeout=self.policy.timeout_seconds)
            except (requests.Timeout, requests.ConnectionError) as exc:
                failure = f"network: {exc.__class__.__name__}"
                continue
            if resp.status_code in RETRYABLE_STATUS:
                failure = f"http {resp.status_code}"
                continue
            latency = int((time.monotonic() - started) * 1000)
            if resp.status_code != 200:
                return self._record(endpoint, query, "", latency,
                                    failed=True, reason=f"http {resp.status_code}")
            try:
                text = resp.json()["text"]
                if not isinstance(text, str):
                    raise TypeError("text is not a string")
            except (ValueError, KeyError, TypeError) as exc:
                return self._record(endpoint, query, "", latency,
                                    failed=True, reason=f"protocol: {exc}")
            if self.strip_prompt_prefix and text.startswith(query.text):
                text = text[len(query.text):].lstrip()
            return self._record(endpoint, query, text, latency)
        latency = int((time.monotonic() - started) * 1000)
        return self._record(endpoint, query, "", latency, failed=True, reason=failure)

    def _record(self, endpoint: ModelEndpoint, query, text: str, latency: int,
                failed: bool = False, reason: str | None = None) -> TranscriptRecord:
        return TranscriptRecord(
            model_id=endpoint.model_id,
            model_kind=endpoint.kind,
            query_id=query.id,
            query_text=query.text,
            response_text=text,
            latency_ms=latency,
            timestamp=datetime.now(timezone.utc).isoformat(),
            failed=failed,
            fail_reason=reason,
        )

    def interrogate_all(self, endpoints: list[ModelEndpoint], corpus,
                        parallelism: int = 1) -> TranscriptStore:
        """One record per (endpoint, query), sorted by (model_id, query_id).

        The result does not depend on ``parallelism`` or completion order;
        cached pairs are resolved up front so the request tally stays
        deterministic too.
        """
        if not endpoints:
            raise ValidationError("no endpoints")
        if corpus.num_queries == 0:
            raise ValidationError("empty corpus")
        if parallelism < 1:
            raise ValidationError("parallelism must be >= 1")
        seen = set()
        for e in endpoints:
            if e.model_id in seen:
                raise ValidationError(f"duplicate endpoint model_id {e.model_id!r}")
            seen.add(e.model_id)

        hits: list[TranscriptRecord] = []
        misses: list[tuple[ModelEndpoint, object]] = []
        for endpoint in endpoints:
            for query in corpus.queries:
                cached = self.cache.get(endpoint.model_id, query.id)
                if cached is not None:
                    hits.append(cached)
                else:
                    misses.append((endpoint, query))

        fetched: list[TranscriptRecord]
        if parallelism == 1 or len(misses) <= 1:
            fetched = [self._fetch(e, q) for e, q in misses]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                fetched = list(pool.map(lambda eq: self._fetch(*eq), misses))
        for record in fetched:
            self.cache.add(record)
        return TranscriptStore(sorted(hits + fetched, key=lambda r: r.key))


def load_endpoints(path: str | Path) -> list[ModelEndpoint]:
    """Read a JSON list of {model_id, kind, base_url[, auth_token]} objects."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        return [
            ModelEndpoint(e["model_id"], e["kind"], e["base_url"], e.get("auth_token"))
            for e in payload
        ]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed endpoints file: {exc}") from exc
