"""Deterministic synthetic model families with a mock generation server.

Stand-ins for real language models: order-n Markov chains whose transition
rows are symmetric-Dirichlet draws materialized lazily and deterministically
from (seed, context). Every base model samples its vocabulary from a shared
master lexicon, so bases overlap (ratio 0.5 by default) yet stay
distinguishable; this is the vocabulary/style overlap that response-similarity
attribution relies on.

Fine-tuned children are derived by mixing Dirichlet noise into the parent's
rows (weight epsilon) and re-biasing a seeded fraction of the vocabulary
toward a set of "domain" tokens; epsilon 0 reproduces the parent exactly.
Families carry ground truth, may contain orphans (children with no parent in
the base list), and can be served over HTTP with fully reproducible output.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .interrogator import ModelEndpoint
from .seeds import derive_seed
from .textmetrics import tokenize

DIRICHLET_ALPHA = 0.5
DEFAULT_ORDER = 2
DEFAULT_VOCAB_SIZE = 200
DEFAULT_OVERLAP = 0.5
DOMAIN_BOOST = 4.0
START_TOKEN = "\x02"  # internal context filler, never emitted

_SYLLABLES = (
    "ba be bi bo bu da de di do du fa fe fi fo fu ga ge gi go gu "
    "ka ke ki ko ku la le li lo lu ma me mi mo mu na ne ni no nu "
    "pa pe pi po pu ra re ri ro ru sa se si so su ta te ti to tu "
    "va ve vi vo vu za ze zi zo zu"
).split()


def master_lexicon(size: int) -> tuple[str, ...]:
    """First ``size`` words of the shared lexicon; stable across calls."""
    base = len(_SYLLABLES)
    words = []
    for i in range(size):
        digits = [i // base % base, i % base]
        if i >= base * base:
            digits.insert(0, i // (base * base) % base)
        words.append("".join(_SYLLABLES[d] for d in digits))
    return tuple(words)


@dataclass
class MarkovModel:
    """Markov chain over a token vocabulary with lazily generated rows.

    A model is either fresh (rows seeded from its own seed) or derived from a
    parent: ``row = (1-eps) * parent_row + eps * noise``, then contexts ending
    in a seeded source-token subset get their probability mass tilted toward
    the seeded domain-token subset by a factor growing with eps.
    """

    model_id: str
    vocab: tuple[str, ...]
    order: int
    seed: int
    parent: "MarkovModel | None" = None
    epsilon: float = 0.0
    domain_vocab_fraction: float = 0.0
    _token_index: dict = field(init=False, default_factory=dict, repr=False, compare=False)
    _cdf_cache: dict = field(init=False, default_factory=dict, repr=False, compare=False)
    _row_cache: dict = field(init=False, default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.vocab) < 2:
            raise ValidationError("vocab size must be >= 2")
        if self.order < 1:
            raise ValidationError("order must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("epsilon must be in [0, 1]")
        if not 0.0 <= self.domain_vocab_fraction <= 1.0:
            raise ValidationError("domain_vocab_fraction must be in [0, 1]")
        if self.parent is not None and self.parent.vocab != self.vocab:
            raise ValidationError("derived model must share its parent's vocabulary")
        self._token_index = {t: i for i, t in enumerate(self.vocab)}
        self._domain_sources: frozenset = frozenset()
        self._domain_mask = None
        if self.parent is not None and self.domain_vocab_fraction > 0.0:
            v = len(self.vocab)
            n_biased = round(self.domain_vocab_fraction * v)
            rng = np.random.default_rng(derive_seed(self.seed, "domain"))
            sources = rng.choice(v, size=n_biased, replace=False) if n_biased else []
            targets = rng.choice(v, size=max(1, n_biased), replace=False)
            self._domain_sources = frozenset(self.vocab[i] for i in sources)
            mask = np.zeros(v, dtype=bool)
            mask[targets] = True
            self._domain_mask = mask

    def row(self, context: tuple[str, ...]) -> np.ndarray:
        """Transition probabilities out of ``context``; sums to 1 within 1e-9."""
        cached = self._row_cache.get(context)
        if cached is None:
            cached = self._make_row(context)
            self._row_cache[context] = cached
        return cached

    def _make_row(self, context: tuple[str, ...]) -> np.ndarray:
        v = len(self.vocab)
        if self.parent is None:
            rng = np.random.default_rng(derive_seed(self.seed, "row", *context))
            return rng.dirichlet(np.full(v, DIRICHLET_ALPHA))
        base = self.parent.row(context)
        if self.epsilon == 0.0:
            return base
        rng = np.random.default_rng(derive_seed(self.seed, "noise", *context))
        noise = rng.dirichlet(np.full(v, DIRICHLET_ALPHA))
        row = (1.0 - self.epsilon) * base + self.epsilon * noise
        if context and context[-1] in self._domain_sources:
            row = row.copy()
            row[self._domain_mask] *= 1.0 + DOMAIN_BOOST * self.epsilon
            row /= row.sum()
        return row

    def _cdf(self, context: tuple[str, ...]) -> np.ndarray:
        cached = self._cdf_cache.get(context)
        if cached is None:
            cached = np.cumsum(self.row(context))
            self._cdf_cache[context] = cached
        return cached


def generate_base(seed: int, vocab_size: int = DEFAULT_VOCAB_SIZE, order: int = DEFAULT_ORDER,
                  overlap_ratio: float = DEFAULT_OVERLAP, model_id: str | None = None) -> MarkovModel:
    """Fresh base model on a seeded slice of the master lexicon."""
    if vocab_size < 2:
        raise ValidationError("vocab_size must be >= 2")
    if not 0.0 < overlap_ratio <= 1.0:
        raise ValidationError("overlap_ratio must be in (0, 1]")
    lexicon = master_lexicon(round(vocab_size / overlap_ratio))
    rng = np.random.default_rng(derive_seed(seed, "vocab"))
    picks = rng.choice(len(lexicon), size=vocab_size, replace=False)
    vocab = tuple(sorted(lexicon[i] for i in picks))
    return MarkovModel(model_id or f"model-{seed:x}", vocab, order, seed)


@dataclass(frozen=True)
class PerturbationConfig:
    """Drift knobs for deriving a fine-tuned child; epsilon 0 is a no-op."""

    epsilon: float
    domain_vocab_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("epsilon must be in [0, 1]")
        if not 0.0 <= self.domain_vocab_fraction <= 1.0:
            raise ValidationError("domain_vocab_fraction must be in [0, 1]")


def derive_finetuned(base: MarkovModel, cfg: PerturbationConfig,
                     model_id: str | None = None) -> MarkovModel:
    return MarkovModel(model_id or f"{base.model_id}-ft", base.vocab, base.order, cfg.seed,
                       parent=base, epsilon=cfg.epsilon,
                       domain_vocab_fraction=cfg.domain_vocab_fraction)


def generate_response(model: MarkovModel, prompt: str, max_tokens: int, seed: int) -> str:
    """Walk the chain for ``max_tokens`` steps; deterministic in all inputs.

    The context is seeded with the prompt's last in-vocab tokens (start
    padding when there are fewer than ``order``). The walk RNG depends on
    (seed, prompt) but not on the model id, so models with identical
    parameters produce identical text for the same request.
    """
    if max_tokens < 1:
        raise ValidationError("max_tokens must be >= 1")
    prompt_tokens = [t for t in tokenize(prompt) if t in model._token_index]
    context = tuple(([START_TOKEN] * model.order + prompt_tokens)[-model.order:])
    rng = np.random.default_rng(derive_seed(seed, "gen", prompt))
    out = []
    last = len(model.vocab) - 1
    for _ in range(max_tokens):
        cdf = model._cdf(context)
        idx = min(int(np.searchsorted(cdf, rng.random(), side="right")), last)
        token = model.vocab[idx]
        out.append(token)
        context = (context + (token,))[-model.order:]
    return " ".join(out)


# --------------------------------------------------------------------------
# Families
# --------------------------------------------------------------------------

@dataclass
class SyntheticFamily:
    """Bases plus derived children with known (possibly orphan) ground truth.

    ``ground_truth`` maps each child id to the base id it is credited to, or
    None for orphans. The credited base is usually the generative parent, but
    control families deliberately decouple the two.
    """

    bases: list[MarkovModel]
    children: list[MarkovModel]
    ground_truth: dict[str, str | None]

    def __post_init__(self) -> None:
        base_ids = {m.model_id for m in self.bases}
        child_ids = {m.model_id for m in self.children}
        if len(base_ids) != len(self.bases) or len(child_ids) != len(self.children):
            raise ValidationError("duplicate model ids in family")
        if base_ids & child_ids:
            raise ValidationError("base and child ids overlap")
        for child in self.children:
            if child.model_id not in self.ground_truth:
                raise ValidationError(f"ground truth missing for {child.model_id!r}")
        for child_id, parent_id in self.ground_truth.items():
            if child_id not in child_ids:
                raise ValidationError(f"ground truth names unknown child {child_id!r}")
            if parent_id is not None and parent_id not in base_ids:
                raise ValidationError(f"ground truth parent {parent_id!r} not in bases")
        self._by_id = {m.model_id: m for m in self.bases + self.children}

    def model(self, model_id: str) -> MarkovModel:
        return self._by_id[model_id]

    @property
    def orphan_ids(self) -> list[str]:
        return [c.model_id for c in self.children if self.ground_truth[c.model_id] is None]


@dataclass(frozen=True)
class FamilyLayout:
    """Structural recipe expanded into a concrete family by :func:`build_family`.

    ``default``:  one child per base for bases 0..n-3, a second child of
                   base 0 (shared parent), and one orphan.
    ``paired``:   exactly one child per base, no orphan.
    ``control``:  each child claims base i as ground truth but is an exact
                   copy of a uniformly random donor base, so every method
                   tracks the donor and scores at chance against the claimed
                   pairing.
    """

    name: str = "default"
    num_bases: int = 12
    vocab_size: int = DEFAULT_VOCAB_SIZE
    order: int = DEFAULT_ORDER
    overlap_ratio: float = DEFAULT_OVERLAP
    epsilon: float = 0.05
    domain_vocab_fraction: float = 0.1


def build_family(seed: int, layout: FamilyLayout) -> SyntheticFamily:
    if layout.num_bases < 2:
        raise ValidationError("need at least 2 bases")
    bases = [
        generate_base(derive_seed(seed, "base", i), layout.vocab_size, layout.order,
                      layout.overlap_ratio, model_id=f"base-{i:02d}")
        for i in range(layout.num_bases)
    ]

    def child_cfg(i: int, epsilon: float) -> PerturbationConfig:
        return PerturbationConfig(epsilon, layout.domain_vocab_fraction,
                                  derive_seed(seed, "child", i))

    children: list[MarkovModel] = []
    truth: dict[str, str | None] = {}
    if layout.name == "paired":
        for i, base in enumerate(bases):
            children.append(derive_finetuned(base, child_cfg(i, layout.epsilon), f"ft-{i:02d}"))
            truth[f"ft-{i:02d}"] = base.model_id
    elif layout.name == "default":
        n = layout.num_bases
        for i in range(n - 2):
            children.append(derive_finetuned(bases[i], child_cfg(i, layout.epsilon), f"ft-{i:02d}"))
            truth[f"ft-{i:02d}"] = bases[i].model_id
        shared = derive_finetuned(bases[0], child_cfg(n - 2, layout.epsilon), f"ft-{n - 2:02d}")
        children.append(shared)
        truth[shared.model_id] = bases[0].model_id
        orphan = generate_base(derive_seed(seed, "orphan", n - 1), layout.vocab_size,
                               layout.order, layout.overlap_ratio, model_id=f"ft-{n - 1:02d}")
        children.append(orphan)
        truth[orphan.model_id] = None
    elif layout.name == "control":
        rng = np.random.default_rng(derive_seed(seed, "donors"))
        donors = rng.integers(0, layout.num_bases, size=layout.num_bases)
        for i in range(layout.num_bases):
            children.append(derive_finetuned(bases[int(donors[i])], child_cfg(i, 0.0), f"ft-{i:02d}"))
            truth[f"ft-{i:02d}"] = bases[i].model_id
    else:
        raise ValidationError(f"unknown family layout {layout.name!r}")
    return SyntheticFamily(bases, children, truth)


def save_family(family: SyntheticFamily, path: str | Path) -> None:
    """Persist the family losslessly: seeds, perturbations, fresh vocabularies."""
    def model_spec(m: MarkovModel) -> dict:
        spec: dict = {"model_id": m.model_id, "seed": m.seed, "order": m.order}
        if m.parent is None:
            spec["vocab"] = list(m.vocab)
        else:
            spec["donor_id"] = m.parent.model_id
            spec["epsilon"] = m.epsilon
            spec["domain_vocab_fraction"] = m.domain_vocab_fraction
        return spec

    payload = {
        "bases": [model_spec(m) for m in family.bases],
        "children": [model_spec(m) for m in family.children],
        "ground_truth": family.ground_truth,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)


def load_family(path: str | Path) -> SyntheticFamily:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        by_id: dict[str, MarkovModel] = {}

        def restore(spec: dict) -> MarkovModel:
            if "donor_id" in spec:
                donor = by_id[spec["donor_id"]]
                cfg = PerturbationConfig(spec["epsilon"], spec["domain_vocab_fraction"],
                                         spec["seed"])
                model = derive_finetuned(donor, cfg, spec["model_id"])
            else:
                model = MarkovModel(spec["model_id"], tuple(spec["vocab"]), spec["order"],
                                    spec["seed"])
            by_id[model.model_id] = model
            return model

        bases = [restore(spec) for spec in payload["bases"]]
        children = [restore(spec) for spec in payload["children"]]
        return SyntheticFamily(bases, children, dict(payload["ground_truth"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed family spec: {exc}") from exc


# --------------------------------------------------------------------------
# Mock server
# --------------------------------------------------------------------------

_GENERATE_PATH = re.compile(r"^/models/([^/]+)/generate$")


class _FamilyHandler(BaseHTTPRequestHandler):
    server: "_FamilyHTTPServer"
    protocol_version = "HTTP/1.1"  # keep-alive; Content-Length is always sent

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802  (http.server API)
        if self.path == "/models":
            family = self.server.family
            descriptors = [{"model_id": m.model_id, "kind": "base"} for m in family.bases]
            descriptors += [{"model_id": m.model_id, "kind": "finetuned"} for m in family.children]
            self._send_json(200, {"models": descriptors})
        else:
            self._send_json(404, {"error": "not found"})

    def do_POST(self) -> None:  # noqa: N802
        match = _GENERATE_PATH.match(self.path)
        if not match:
            self._send_json(404, {"error": "not found"})
            return
        model_id = match.group(1)
        try:
            model = self.server.family.model(model_id)
        except KeyError:
            self._send_json(404, {"error": f"unknown model {model_id!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            prompt = body["prompt"]
            max_tokens = body["max_tokens"]
            seed = body["seed"]
            if not isinstance(prompt, str) or not isinstance(max_tokens, int) \
                    or isinstance(max_tokens, bool) or not isinstance(seed, int) \
                    or max_tokens < 1:
                raise ValueError("bad field types")
        except (ValueError, KeyError, TypeError):
            self._send_json(400, {"error": "malformed request body"})
            return
        self._send_json(200, {"text": generate_response(model, prompt, max_tokens, seed)})

    def log_message(self, *args) -> None:  # silence per-request stderr noise
        del args


class _FamilyHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], family: SyntheticFamily):
        super().__init__(address, _FamilyHandler)
        self.family = family


class FamilyServer:
    """Running HTTP server for a family; stop() releases the port."""

    def __init__(self, family: SyntheticFamily, host: str, port: int):
        self.family = family
        self._httpd = _FamilyHTTPServer((host, port), family)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def endpoint_for(self, model_id: str, kind: str) -> ModelEndpoint:
        return ModelEndpoint(model_id, kind, f"{self.base_url}/models/{model_id}")

    def endpoints(self, kind: str | None = None) -> list[ModelEndpoint]:
        out = []
        if kind in (None, "base"):
            out += [self.endpoint_for(m.model_id, "base") for m in self.family.bases]
        if kind in (None, "finetuned"):
            out += [self.endpoint_for(m.model_id, "finetuned") for m in self.family.children]
        return out

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)


def serve(family: SyntheticFamily, bind_address: tuple[str, int] = ("127.0.0.1", 0)) -> FamilyServer:
    """Start serving the family; port 0 picks a free one."""
    return FamilyServer(family, bind_address[0], bind_address[1])
