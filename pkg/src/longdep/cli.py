"""Command-line entry point.

Subcommands cover the full workflow: train-ngram, score, select,
heatmap, bench. Configuration resolves as flags > config file >
built-in "reference" profile; every artifact carries the resolved
config's hash, and identical inputs reproduce identical bytes (run
metadata such as timestamps lives in .meta.json sidecars).

Exit codes: 0 success, 2 validation or usage error, 3 scorer endpoint
unreachable, 4 completed with per-document or per-cell failures,
130 interrupted (partial outputs are written and marked incomplete).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import re
import sys

from .backends import ExternalBackend, PplCache
from .bench import (
    OracleBackend,
    SynthSpec,
    bench_csv,
    bench_table,
    generate_testset,
    run_bench,
)
from .config import REFERENCE_PROFILE, RunConfig, resolve_config
from .corpus import TokenizerSpec, ingest, IngestStats, tokenized_corpus
from .errors import BackendUnreachable, ConfigError, LongdepError
from .heatmap import HeatmapSpec, render_heatmap
from .jsonio import (
    canonical_dumps,
    ensure_parent,
    read_json,
    write_canonical,
    write_meta_sidecar,
)
from .lds import PairScore, ScoreReport
from .ngram import NGramBackend, NGramModel, train_ngram
from .pipeline import DocumentOutcome, ScoringStats, build_manifest, score_corpus

SCORER_ENDPOINT_ENV = "LONGDEP_SCORER_ENDPOINT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNREACHABLE = 3
EXIT_PARTIAL = 4
EXIT_INTERRUPTED = 130

log = logging.getLogger("longdep")


def _tokenizer(kind: str) -> TokenizerSpec:
    return TokenizerSpec(kind=kind)


def _resolve_backend(spec_str: str, tokenizer: TokenizerSpec):
    """Backend selector: ngram:<model-file> or external[:<endpoint>],
    the endpoint falling back to $LONGDEP_SCORER_ENDPOINT."""
    if spec_str.startswith("ngram:"):
        path = spec_str[len("ngram:"):]
        if not os.path.exists(path):
            raise ConfigError(f"model file not found: {path}")
        return NGramBackend(NGramModel.load(path))
    if spec_str == "external" or spec_str.startswith("external:"):
        endpoint = spec_str[len("external:"):] if ":" in spec_str else ""
        endpoint = endpoint or os.environ.get(SCORER_ENDPOINT_ENV, "")
        if not endpoint:
            raise ConfigError(
                "no scorer endpoint: use --backend external:<endpoint> "
                f"or set {SCORER_ENDPOINT_ENV}"
            )
        backend = ExternalBackend(endpoint, tokenizer=tokenizer)
        backend.connect_check()
        return backend
    raise ConfigError(
        f"bad backend {spec_str!r}: expected ngram:<model-file> or external[:<endpoint>]"
    )


def _sidecar_name(doc_id: str) -> str:
    safe = re.sub(r"[^-._a-zA-Z0-9]", "_", doc_id)[:80]
    tag = hashlib.sha256(doc_id.encode("utf-8")).hexdigest()[:8]
    return f"{safe}-{tag}.json"


def _flags_dict(args: argparse.Namespace, keys: tuple[str, ...]) -> dict:
    return {k: getattr(args, k, None) for k in keys}


_SCORE_FLAG_KEYS = (
    "segment_len",
    "truncate_len",
    "tau",
    "alpha",
    "beta",
    "gamma",
    "mode",
    "sample_size",
    "dsp_variant",
    "seed",
    "workers",
    "fraction",
    "tokenizer",
    "input_format",
    "order",
    "k",
    "backend",
)


def _effective_config(args: argparse.Namespace) -> RunConfig:
    return resolve_config(
        _flags_dict(args, _SCORE_FLAG_KEYS), getattr(args, "config", None)
    )


def _show_config(rc: RunConfig) -> int:
    payload = {"profile": "reference", "config": rc.to_dict(), "hash": rc.fingerprint()}
    print(canonical_dumps(payload))
    return EXIT_OK


# -- subcommands -----------------------------------------------------------


def cmd_train_ngram(args: argparse.Namespace) -> int:
    rc = _effective_config(args)
    if not os.path.exists(args.input):
        raise ConfigError(f"input not found: {args.input}")
    stats = IngestStats()
    docs = tokenized_corpus(
        ingest(args.input, format=rc.input_format, stats=stats), _tokenizer(rc.tokenizer)
    )
    model = train_ngram(docs, order=rc.order, k=rc.k, tokenizer_kind=rc.tokenizer)
    ensure_parent(args.out)
    model.save(args.out)
    write_meta_sidecar(
        args.out,
        complete=True,
        extra={
            "documents": stats.yielded,
            "vocabulary": len(model.vocab),
            "order": model.order,
        },
    )
    print(f"trained order-{model.order} model on {stats.yielded} docs -> {args.out}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    rc = _effective_config(args)
    if args.show_config:
        return _show_config(rc)
    if not rc.backend:
        raise ConfigError("--backend is required (ngram:<model-file> or external[:<endpoint>])")
    if not args.input:
        raise ConfigError("--input is required")
    if not os.path.exists(args.input):
        raise ConfigError(f"input not found: {args.input}")
    tokenizer = _tokenizer(rc.tokenizer)
    backend = _resolve_backend(rc.backend, tokenizer)

    os.makedirs(args.out_dir, exist_ok=True)
    pairs_dir = os.path.join(args.out_dir, "pairs")
    if args.emit_pairs:
        os.makedirs(pairs_dir, exist_ok=True)
    reports_path = os.path.join(args.out_dir, "reports.jsonl")

    stats = ScoringStats()
    rows: list[dict] = []
    interrupted = False
    docs = ingest(args.input, format=rc.input_format)
    outcomes = score_corpus(
        docs,
        backend,
        rc.lds,
        tokenizer=tokenizer,
        workers=rc.workers,
        cache=PplCache(),
        stats=stats,
        keep_pairs=args.emit_pairs,
    )
    try:
        for outcome in outcomes:
            if outcome.report is not None:
                report = outcome.report
                rows.append({"status": "scored", **report.to_dict()})
                if args.emit_pairs:
                    sidecar = os.path.join(pairs_dir, _sidecar_name(report.doc_id))
                    write_canonical(sidecar, report.to_dict(include_pairs=True))
            else:
                rows.append(
                    {
                        "status": outcome.status,
                        "doc_id": outcome.doc_id,
                        "source": outcome.source,
                        "reason": outcome.reason,
                    }
                )
    except KeyboardInterrupt:
        interrupted = True
        outcomes.close()
    finally:
        with open(reports_path, "w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(canonical_dumps(row))
                handle.write("\n")
        write_meta_sidecar(
            reports_path,
            complete=not interrupted,
            extra={
                "config_hash": rc.fingerprint(),
                "scored": stats.scored,
                "excluded": stats.excluded,
                "failed": stats.failed,
            },
        )
    print(
        f"scored={stats.scored} excluded={stats.excluded} failed={stats.failed} "
        f"-> {reports_path}"
    )
    if interrupted:
        return EXIT_INTERRUPTED
    return EXIT_PARTIAL if stats.failed else EXIT_OK


def _load_outcome_rows(path: str) -> tuple[list[ScoreReport], list[DocumentOutcome]]:
    reports: list[ScoreReport] = []
    others: list[DocumentOutcome] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("status") == "scored":
                reports.append(
                    ScoreReport(
                        doc_id=row["doc_id"],
                        n_segments=row["n_segments"],
                        mode=row["mode"],
                        lds=row["lds"],
                        pair_count=row["pair_count"],
                        gated_count=row["gated_count"],
                        config_hash=row["config_hash"],
                        source=row.get("source", ""),
                    )
                )
            else:
                others.append(
                    DocumentOutcome(
                        doc_id=row["doc_id"],
                        source=row.get("source", ""),
                        status=row.get("status", "failed"),
                        reason=row.get("reason"),
                    )
                )
    return reports, others


def cmd_select(args: argparse.Namespace) -> int:
    rc = _effective_config(args)
    if args.show_config:
        return _show_config(rc)
    if not os.path.exists(args.reports):
        raise ConfigError(f"reports file not found: {args.reports}")
    reports, outcomes = _load_outcome_rows(args.reports)
    fraction = 1.0 if args.strategy == "full" else rc.fraction
    manifest = build_manifest(
        reports,
        outcomes,
        fraction,
        args.strategy,
        seed=rc.lds.seed,
        per_source=not args.global_ranking,
        passthrough_sources=frozenset(args.passthrough or ()),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    ids_path = os.path.join(args.out_dir, "retained_ids.txt")
    write_canonical(manifest_path, manifest.to_dict())
    with open(ids_path, "w", encoding="utf-8") as handle:
        for doc_id in manifest.retained_ids:
            handle.write(doc_id)
            handle.write("\n")
    write_meta_sidecar(
        manifest_path,
        complete=True,
        extra={"run_id": manifest.run_id, "retained": len(manifest.retained_ids)},
    )
    print(
        f"strategy={manifest.strategy} retained={len(manifest.retained_ids)}"
        f"/{sum(len(e.documents) for e in manifest.sources)} -> {manifest_path}"
    )
    return EXIT_OK


def cmd_heatmap(args: argparse.Namespace) -> int:
    if not os.path.exists(args.pairs):
        raise ConfigError(
            f"pair sidecar not found: {args.pairs}; run "
            "'longdep score --emit-pairs' to write per-document pair records"
        )
    data = read_json(args.pairs)
    pair_rows = data.get("pairs", [])
    if not pair_rows:
        raise ConfigError(f"sidecar {args.pairs!r} holds no pairs; nothing to render")
    pairs = [
        PairScore(
            target=row["target"],
            source=row["source"],
            dst=row["dst"],
            ddi=row["ddi"],
            dsp=row["dsp"],
            pairwise=row["pairwise"],
            gated=row["gated"],
        )
        for row in pair_rows
    ]
    spec = HeatmapSpec(
        doc_id=data["doc_id"],
        n_segments=data["n_segments"],
        scale=args.scale,
        value=args.value,
        cell_size=args.cell_size,
    )
    base = os.path.splitext(args.pairs)[0]
    image_path = args.out_image or base + ".ppm"
    csv_path = args.out_csv or base + ".csv"
    render_heatmap(pairs, spec, image_path, csv_path, data.get("config_hash", ""))
    print(f"wrote {image_path} and {csv_path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    rc = _effective_config(args)
    if args.show_config:
        return _show_config(rc)
    spec = SynthSpec(
        n_positive=args.n_positive,
        n_negative=args.n_negative,
        n_segments=args.n_segments,
        segment_len=args.bench_segment_len,
        seed=rc.lds.seed,
    )
    testset = generate_testset(spec)
    base_cfg = rc.lds.replace(
        segment_len=spec.segment_len, truncate_len=spec.doc_token_len
    )
    tokenizer = _tokenizer(rc.tokenizer)

    backends = []
    for token in args.backends.split(","):
        token = token.strip()
        if token == "ngram":
            model = train_ngram(testset.docs, order=rc.order, k=rc.k)
            backends.append(("ngram", lambda m=model: NGramBackend(m)))
        elif token == "oracle":
            backends.append(("oracle", lambda ts=testset: OracleBackend(ts.links)))
        elif token == "external" or token.startswith("external:"):
            endpoint = token[len("external:"):] if ":" in token else ""
            endpoint = endpoint or os.environ.get(SCORER_ENDPOINT_ENV, "")
            if not endpoint:
                raise ConfigError(
                    f"no scorer endpoint for {token!r}; set {SCORER_ENDPOINT_ENV}"
                )
            backends.append(
                ("external", lambda ep=endpoint: ExternalBackend(ep, tokenizer=tokenizer))
            )
        else:
            raise ConfigError(f"unknown bench backend {token!r}")

    sample_sizes = [int(t) for t in args.sample_sizes.split(",")]
    results = run_bench(testset, backends, sample_sizes, base_cfg, workers=rc.workers)
    print(bench_table(results), end="")
    if args.out:
        ensure_parent(args.out)
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(bench_csv(results))
        write_meta_sidecar(args.out, complete=True, extra={"config_hash": rc.fingerprint()})
        print(f"wrote {args.out}")
    return EXIT_PARTIAL if any(r.status != "ok" for r in results) else EXIT_OK


# -- parser ----------------------------------------------------------------


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file (flags override it)")
    sub.add_argument(
        "--show-config",
        action="store_true",
        help="print the resolved configuration and exit",
    )
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--tokenizer", choices=("whitespace", "byte"), default=None)
    sub.add_argument(
        "--input-format", dest="input_format", choices=("jsonl", "plain-dir"), default=None
    )
    sub.add_argument("--workers", type=int, default=None)


def _add_scoring_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--segment-len", dest="segment_len", type=int, default=None)
    sub.add_argument("--truncate-len", dest="truncate_len", type=int, default=None)
    sub.add_argument("--tau", type=float, default=None)
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--beta", type=float, default=None)
    sub.add_argument("--gamma", type=float, default=None)
    sub.add_argument("--mode", choices=("exact", "sampled"), default=None)
    sub.add_argument("--sample-size", dest="sample_size", type=int, default=None)
    sub.add_argument(
        "--dsp-variant",
        dest="dsp_variant",
        choices=("multiplicative", "additive", "none"),
        default=None,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longdep",
        description="Long-dependency scoring and selection for training corpora.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train-ngram", help="train the built-in scorer model")
    train.add_argument("--input", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--order", type=int, default=None)
    train.add_argument("--k", type=float, default=None)
    _add_config_flags(train)
    train.set_defaults(func=cmd_train_ngram, show_config=False)

    score = commands.add_parser("score", help="score a corpus")
    score.add_argument("--input", default="")
    score.add_argument("--out-dir", dest="out_dir", default="longdep-out")
    score.add_argument("--backend", default=None)
    score.add_argument(
        "--emit-pairs",
        action="store_true",
        help="write per-document pair sidecars (heatmap input)",
    )
    _add_config_flags(score)
    _add_scoring_flags(score)
    score.set_defaults(func=cmd_score)

    select = commands.add_parser("select", help="rank and select documents")
    select.add_argument("--reports", required=True)
    select.add_argument("--out-dir", dest="out_dir", default="longdep-out")
    select.add_argument("--strategy", choices=("prolong", "random", "full"), default="prolong")
    select.add_argument("--fraction", type=float, default=None)
    select.add_argument(
        "--global-ranking",
        dest="global_ranking",
        action="store_true",
        help="rank across sources instead of per source",
    )
    select.add_argument(
        "--passthrough",
        action="append",
        help="source retained whole regardless of strategy (repeatable)",
    )
    _add_config_flags(select)
    select.set_defaults(func=cmd_select)

    heat = commands.add_parser("heatmap", help="render a scored document's dst matrix")
    heat.add_argument("--pairs", required=True, help="pair sidecar from score --emit-pairs")
    heat.add_argument("--out-image", dest="out_image", default="")
    heat.add_argument("--out-csv", dest="out_csv", default="")
    heat.add_argument("--scale", choices=("linear", "signed-diverging"), default="linear")
    heat.add_argument("--value", choices=("dst", "pairwise"), default="dst")
    heat.add_argument("--cell-size", dest="cell_size", type=int, default=4)
    heat.set_defaults(func=cmd_heatmap)

    bench = commands.add_parser("bench", help="synthetic accuracy/throughput bench")
    bench.add_argument("--backends", default="ngram")
    bench.add_argument("--sample-sizes", dest="sample_sizes", default="500,5000")
    bench.add_argument("--n-positive", dest="n_positive", type=int, default=100)
    bench.add_argument("--n-negative", dest="n_negative", type=int, default=100)
    bench.add_argument("--n-segments", dest="n_segments", type=int, default=64)
    bench.add_argument(
        "--segment-len", dest="bench_segment_len", type=int, default=16
    )
    bench.add_argument("--order", type=int, default=None)
    bench.add_argument("--k", type=float, default=None)
    bench.add_argument("--out", default="")
    _add_config_flags(bench)
    bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except BackendUnreachable as exc:
        log.error("%s", exc)
        return EXIT_UNREACHABLE
    except (ConfigError, LongdepError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
