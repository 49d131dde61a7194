"""Command-line interface.

Subcommands: sample (build a corpus), serve (mock family server), interrogate
(endpoints + corpus -> transcripts), attribute (transcripts -> pairing report
with CSV/figure siblings), simulate (config -> experiment report), cv
(transcripts -> cross-validation accuracy). Exit codes: 0 success, 1
validation error, 2 I/O or network failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import requests

from .attribute import run_method, write_report
from .corpus import load_corpus, sample_queries, save_corpus
from .errors import ValidationError
from .harness import ExperimentConfig, run_cv, run_simulation
from .interrogator import (Interrogator, RetryPolicy, load_endpoints,
                           load_store, save_store)
from .simnet import load_family, serve


def _cmd_sample(args: argparse.Namespace) -> int:
    with open(args.pools, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValidationError("pools file must be a JSON object of dataset -> texts")
    pool = sorted(raw.items())
    corpus = sample_queries(pool, args.per_dataset, args.seed)
    save_corpus(corpus, args.out)
    print(f"wrote {corpus.num_queries} queries from {corpus.num_datasets} datasets to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    family = load_family(args.family)
    host, _, port = args.bind.partition(":")
    server = serve(family, (host or "127.0.0.1", int(port or 0)))
    print(f"serving {len(family.bases)} base + {len(family.children)} fine-tuned models "
          f"at {server.base_url}/models")
    try:
        if args.max_seconds is not None:
            time.sleep(args.max_seconds)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def _cmd_interrogate(args: argparse.Namespace) -> int:
    endpoints = load_endpoints(args.endpoints)
    corpus = load_corpus(args.corpus)
    cache = load_store(args.cache) if args.cache and Path(args.cache).exists() else None
    interrogator = Interrogator(
        policy=RetryPolicy(attempts=args.retries),
        max_tokens=args.max_tokens,
        generation_seed=args.seed,
        strip_prompt_prefix=args.strip_prompt_prefix,
        cache=cache,
    )
    store = interrogator.interrogate_all(endpoints, corpus, args.parallelism)
    save_store(store, args.out)
    failed = sum(1 for r in store if r.failed)
    print(f"wrote {len(store)} records ({failed} failed, "
          f"{interrogator.request_count} requests) to {args.out}")
    return 0


def _cmd_attribute(args: argparse.Namespace) -> int:
    from .reporting import render_attribution_figure, write_attribution_csv

    base_store = load_store(args.base_store)
    ft_store = load_store(args.ft_store)
    corpus = load_corpus(args.corpus)
    result = run_method(args.method, base_store, ft_store, corpus)
    out = Path(args.out)
    write_report(result, corpus, args.seed, out)
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    write_attribution_csv(result, csv_path)
    figures_dir = Path(args.figures) if args.figures else out.parent
    figure = render_attribution_figure(result, figures_dir / f"{out.stem}_{result.method}.png")
    print(f"wrote {out}, {csv_path}, {figure}")
    for ft_id in sorted(result.pairs):
        print(f"  {ft_id} -> {result.pairs[ft_id] or 'NONE'}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    from .reporting import render_simulation_figures, write_simulation_csv

    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(), "master_seed": args.seed})
    if args.parallelism is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(), "parallelism": args.parallelism})
    report = run_simulation(config)
    out = Path(args.out)
    report.save(out)
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    write_simulation_csv(report, csv_path)
    figures = render_simulation_figures(report, args.figures or out.parent)
    print(f"wrote {out}, {csv_path}, {', '.join(str(p) for p in figures)}")
    for method, agg in sorted(report.aggregates.items()):
        print(f"  {method}: mean accuracy {agg['mean_accuracy']:.3f} "
              f"[{agg['min_accuracy']:.3f}, {agg['max_accuracy']:.3f}]")
    if report.partial:
        print("  warning: some repetitions failed; see report for details")
    return 0


def _cmd_cv(args: argparse.Namespace) -> int:
    store = load_store(args.store)
    accuracy = run_cv(store, args.k, args.seed, args.backend)
    print(f"{args.backend} {args.k}-fold accuracy: {accuracy:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"backend": args.backend, "k": args.k, "seed": args.seed,
                       "accuracy": accuracy}, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmattrib",
                                     description="Attribute fine-tuned text generators "
                                                 "to their base models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a query corpus from dataset pools")
    p.add_argument("--pools", required=True, help="JSON file: dataset id -> list of texts")
    p.add_argument("--per-dataset", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("serve", help="serve a synthetic family over HTTP")
    p.add_argument("--family", required=True, help="family spec JSON")
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--max-seconds", type=float, default=None,
                   help="exit after this long instead of running until interrupted")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("interrogate", help="send every query to every endpoint")
    p.add_argument("--endpoints", required=True, help="JSON list of model endpoints")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-tokens", type=int, default=30)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--cache", default=None, help="transcript file reused as cache")
    p.add_argument("--strip-prompt-prefix", action="store_true")
    p.set_defaults(func=_cmd_interrogate)

    p = sub.add_parser("attribute", help="pair fine-tuned models with bases")
    p.add_argument("--method", required=True,
                   choices=["bleu", "ter", "vsm", "multiclass", "ova", "one_vs_all"])
    p.add_argument("--base-store", required=True)
    p.add_argument("--ft-store", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None)
    p.add_argument("--figures", default=None)
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("simulate", help="run a configured experiment end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--figures", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("cv", help="cross-validate classifiers on a transcript store")
    p.add_argument("--store", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default="multiclass", choices=["multiclass", "ova", "one_vs_all"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_cv)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, requests.RequestException) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
