"""Corpus-level orchestration: parallel scoring, per-source ranking,
retention selection, and reproducible manifest emission.

Scoring fans out across a bounded worker pool; ranking and manifest
construction are single-threaded reductions over the completed results.
Per-document sampling seeds derive from (config seed, doc id), so
results are independent of worker count and completion order.
"""

from __future__ import annotations

import math
import statistics
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .backends import PerplexityBackend, PplCache
from .corpus import Document, TokenizerSpec, segment, tokenize
from .errors import (
    BackendError,
    BackendUnreachable,
    ConfigError,
    DocumentTooShort,
    ScoringError,
)
from .jsonio import fingerprint
from .lds import LdsConfig, ScoreReport, derive_seed, score_document

STRATEGIES = ("prolong", "random", "full")


@dataclass
class ScoringStats:
    scored: int = 0
    excluded: int = 0
    failed: int = 0


@dataclass(frozen=True)
class DocumentOutcome:
    """One corpus document's fate: scored, excluded before scoring, or
    failed during scoring."""

    doc_id: str
    source: str
    status: str
    report: ScoreReport | None = None
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "scored"


def _score_one(
    doc: Document,
    backend: PerplexityBackend,
    cfg: LdsConfig,
    tokenizer: TokenizerSpec,
    cache: PplCache | None,
    keep_pairs: bool,
) -> DocumentOutcome:
    try:
        tokenized = doc if doc.tokens is not None else tokenize(doc, tokenizer)
        grid = segment(tokenized, cfg.segment_len, cfg.truncate_len)
    except DocumentTooShort as exc:
        return DocumentOutcome(doc.id, doc.source, "excluded", reason=str(exc))
    try:
        report = score_document(
            backend,
            grid,
            cfg,
            seed=derive_seed(cfg.seed, doc.id),
            cache=cache,
            keep_pairs=keep_pairs,
        )
    except BackendUnreachable:
        raise
    except (BackendError, ScoringError) as exc:
        return DocumentOutcome(doc.id, doc.source, "failed", reason=str(exc))
    return DocumentOutcome(doc.id, doc.source, "scored", report=report)


def score_corpus(
    docs: Iterable[Document],
    backend: PerplexityBackend,
    cfg: LdsConfig,
    tokenizer: TokenizerSpec | None = None,
    workers: int = 1,
    cache: PplCache | None = None,
    stats: ScoringStats | None = None,
    keep_pairs: bool = False,
) -> Iterator[DocumentOutcome]:
    """Score a document stream, yielding one outcome per document in
    input order regardless of completion order.

    A document that is too short is excluded; a document whose scoring
    fails is marked failed; both leave the run alive. Only an unreachable
    backend is fatal. Per-pair records are dropped by default; corpus
    runs only need the document totals.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    tokenizer = tokenizer or TokenizerSpec()
    if stats is None:
        stats = ScoringStats()

    def record(outcome: DocumentOutcome) -> DocumentOutcome:
        if outcome.status == "scored":
            stats.scored += 1
        elif outcome.status == "excluded":
            stats.excluded += 1
        else:
            stats.failed += 1
        return outcome

    if workers == 1:
        for doc in docs:
            yield record(_score_one(doc, backend, cfg, tokenizer, cache, keep_pairs))
        return

    # Bounded in-flight window; results resequence to input order.
    window = workers * 4
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        doc_iter = iter(docs)
        exhausted = False
        while True:
            while not exhausted and len(pending) < window:
                try:
                    doc = next(doc_iter)
                except StopIteration:
                    exhausted = True
                    break
                pending.append(
                    pool.submit(_score_one, doc, backend, cfg, tokenizer, cache, keep_pairs)
                )
            if not pending:
                break
            yield record(pending.popleft().result())


def reports_only(outcomes: Iterable[DocumentOutcome]) -> list[ScoreReport]:
    return [o.report for o in outcomes if o.report is not None]


# -- selection ------------------------------------------------------------


@dataclass(frozen=True)
class RankedDoc:
    doc_id: str
    source: str
    lds: float
    rank: int
    retained: bool

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "lds": self.lds,
            "rank": self.rank,
            "retained": self.retained,
        }


@dataclass(frozen=True)
class SourceEntry:
    source: str
    retention_fraction: float
    documents: tuple[RankedDoc, ...]
    stats: dict = field(repr=False)

    @property
    def retained_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents if d.retained]


@dataclass(frozen=True)
class SelectionManifest:
    run_id: str
    strategy: str
    fraction: float
    seed: int
    per_source: bool
    config_hash: str
    sources: tuple[SourceEntry, ...]
    excluded: tuple[dict, ...]
    failed: tuple[dict, ...]
    stats: dict = field(repr=False)

    @property
    def retained_ids(self) -> list[str]:
        out: list[str] = []
        for entry in self.sources:
            out.extend(entry.retained_ids)
        return out

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "strategy": self.strategy,
            "fraction": self.fraction,
            "seed": self.seed,
            "per_source": self.per_source,
            "config_hash": self.config_hash,
            "sources": [
                {
                    "source": entry.source,
                    "retention_fraction": entry.retention_fraction,
                    "documents": [d.to_dict() for d in entry.documents],
                    "stats": entry.stats,
                }
                for entry in self.sources
            ],
            "excluded": list(self.excluded),
            "failed": list(self.failed),
            "stats": self.stats,
        }


def _arm_stats(values: Sequence[float]) -> dict:
    if not values:
        return {"count": 0, "mean": None, "median": None}
    return {
        "count": len(values),
        "mean": statistics.fmean(values),
        "median": statistics.median(values),
    }


def _random_member_ids(
    ranked: Sequence[tuple[str, float]], n_keep: int, seed: int, source: str
) -> set[str]:
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, source)))
    picks = rng.choice(len(ranked), size=n_keep, replace=False)
    return {ranked[int(ix)][0] for ix in picks}


def build_manifest(
    reports: Sequence[ScoreReport],
    outcomes: Sequence[DocumentOutcome],
    fraction: float,
    strategy: str,
    seed: int = 0,
    per_source: bool = True,
    passthrough_sources: frozenset[str] = frozenset(),
) -> SelectionManifest:
    """Rank scored documents and mark retention under one strategy.

    All three strategy arms (full, random, prolong) are summarized in the
    stats blocks for comparison; the chosen strategy decides the retained
    flags. Passthrough sources keep everything regardless of strategy.
    """
    if not reports:
        raise ConfigError("no scored documents to rank")
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    if strategy not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    hashes = {r.config_hash for r in reports}
    if len(hashes) > 1:
        raise ConfigError(f"reports span {len(hashes)} config hashes; scores incomparable")
    config_hash = next(iter(hashes))

    groups: dict[str, list[ScoreReport]] = {}
    for report in reports:
        source = report.source if per_source else "all"
        groups.setdefault(source, []).append(report)

    entries: list[SourceEntry] = []
    pooled: dict[str, list[float]] = {"full": [], "prolong": [], "random": []}
    for source in sorted(groups):
        group = groups[source]
        ranked = sorted(((r.doc_id, r.lds) for r in group), key=lambda t: (-t[1], t[0]))
        source_fraction = 1.0 if source in passthrough_sources else fraction
        if strategy == "full":
            source_fraction = 1.0
        n_keep = math.ceil(source_fraction * len(ranked))

        prolong_ids = {doc_id for doc_id, _ in ranked[:n_keep]}
        random_ids = _random_member_ids(ranked, n_keep, seed, source)
        arm_members = {
            "full": {doc_id for doc_id, _ in ranked},
            "prolong": prolong_ids,
            "random": random_ids,
        }
        retained_ids = arm_members["full" if source_fraction >= 1.0 else strategy]

        documents = tuple(
            RankedDoc(doc_id, source, lds_value, rank, doc_id in retained_ids)
            for rank, (doc_id, lds_value) in enumerate(ranked)
        )
        stats = {}
        for arm, members in arm_members.items():
            values = [lds_value for doc_id, lds_value in ranked if doc_id in members]
            stats[arm] = _arm_stats(values)
            pooled[arm].extend(values)
        entries.append(SourceEntry(source, source_fraction, documents, stats))

    excluded = tuple(
        {"doc_id": o.doc_id, "source": o.source, "reason": o.reason}
        for o in outcomes
        if o.status == "excluded"
    )
    failed = tuple(
        {"doc_id": o.doc_id, "source": o.source, "reason": o.reason}
        for o in outcomes
        if o.status == "failed"
    )
    run_id = fingerprint(
        {
            "strategy": strategy,
            "fraction": fraction,
            "seed": seed,
            "per_source": per_source,
            "config_hash": config_hash,
            "doc_ids": sorted(r.doc_id for r in reports),
        }
    )[:16]
    return SelectionManifest(
        run_id=run_id,
        strategy=strategy,
        fraction=fraction,
        seed=seed,
        per_source=per_source,
        config_hash=config_hash,
        sources=tuple(entries),
        excluded=excluded,
        failed=failed,
        stats={arm: _arm_stats(values) for arm, values in pooled.items()},
    )


def rank_and_select(
    reports: Sequence[ScoreReport],
    fraction: float,
    per_source: bool = True,
    outcomes: Sequence[DocumentOutcome] = (),
    seed: int = 0,
    passthrough_sources: frozenset[str] = frozenset(),
) -> SelectionManifest:
    """Top-fraction retention by LDS (descending, doc_id tie-break)."""
    return build_manifest(
        reports,
        outcomes,
        fraction,
        "prolong",
        seed=seed,
        per_source=per_source,
        passthrough_sources=passthrough_sources,
    )


def random_baseline(
    reports: Sequence[ScoreReport],
    fraction: float,
    seed: int,
    per_source: bool = True,
    outcomes: Sequence[DocumentOutcome] = (),
    passthrough_sources: frozenset[str] = frozenset(),
) -> SelectionManifest:
    """Uniform without-replacement retention at the same subset size."""
    return build_manifest(
        reports,
        outcomes,
        fraction,
        "random",
        seed=seed,
        per_source=per_source,
        passthrough_sources=passthrough_sources,
    )
