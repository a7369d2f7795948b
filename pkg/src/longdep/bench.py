"""Synthetic long-dependency test sets and the accuracy/throughput bench.

Positive documents plant cross-segment structure an order-n scorer can
detect at segment boundaries: an early segment ends with a bigram that,
in this document's own phrasing, strongly predicts the opening tokens of
a much later segment. Negative documents are either concatenations of
independent short texts (local structure only, at segment scale) or
locally coherent random walks (statistics repeat everywhere, so no
source segment is specifically informative).

Every generated document has exactly n_segments * segment_len tokens,
so length never leaks the label.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .backends import PplCache
from .corpus import Document
from .errors import BackendError, ConfigError
from .lds import LdsConfig, derive_seed
from .ngram import BackendCapabilities
from .pipeline import ScoringStats, reports_only, score_corpus

POSITIVE_KINDS = ("planted-key", "entity-chain")
NEGATIVE_KINDS = ("concat-shorts", "local-markov")


@dataclass(frozen=True)
class SynthSpec:
    n_positive: int = 100
    n_negative: int = 100
    n_segments: int = 256
    segment_len: int = 32
    background_vocab: int = 200
    min_links: int = 4
    max_links: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.n_positive < 1 or self.n_negative < 1:
            raise ConfigError("need at least one positive and one negative document")
        if self.n_segments < 8:
            raise ConfigError("n_segments must be >= 8")
        if self.segment_len < 8:
            raise ConfigError("segment_len must be >= 8")
        if self.background_vocab < 16:
            raise ConfigError("background_vocab must be >= 16")
        if not 1 <= self.min_links <= self.max_links:
            raise ConfigError("need 1 <= min_links <= max_links")

    @property
    def doc_token_len(self) -> int:
        return self.n_segments * self.segment_len


@dataclass(frozen=True)
class TestSet:
    spec: SynthSpec
    docs: tuple[Document, ...]
    labels: dict[str, int] = field(repr=False)
    links: frozenset = field(repr=False)

    @property
    def n_positive(self) -> int:
        return sum(self.labels.values())


def _background(rng: np.random.Generator, n: int, vocab: int) -> list[str]:
    return [f"w{v:03d}" for v in rng.integers(0, vocab, size=n)]


def _place_copies(
    tokens: list[str],
    phrase: Sequence[str],
    n_copies: int,
    rng: np.random.Generator,
    reserved: list[tuple[int, int]],
) -> None:
    """Scatter training-support copies of a phrase, avoiding any span
    already claimed by a planted boundary cell or another copy."""
    size = len(phrase)
    limit = len(tokens) - size
    for _ in range(n_copies):
        for _attempt in range(64):
            start = int(rng.integers(0, limit))
            span = (start, start + size)
            if all(span[1] <= lo or span[0] >= hi for lo, hi in reserved):
                tokens[span[0] : span[1]] = list(phrase)
                reserved.append(span)
                break


def _link_layout(
    spec: SynthSpec, rng: np.random.Generator
) -> list[tuple[list[int], list[int]]]:
    """(early segments, late segments) groups per link.

    A link is one recurring theme: its phrase closes several segments in
    the document's first quarter and reopens several segments in the
    second half, so many far (target, source) pairs carry the same
    dependency. Every segment can host only one planted cell, so the
    early and late slots are dealt out among the links without
    collision. How much of each region is used varies per document,
    which spreads the resulting scores instead of clustering them.
    """
    n = spec.n_segments
    n_links = int(rng.integers(spec.min_links, spec.max_links + 1))
    early_slots = rng.permutation(np.arange(0, n // 4))
    late_slots = rng.permutation(np.arange(n // 2, n))
    n_links = min(n_links, len(early_slots), len(late_slots))
    n_early = int(rng.integers(n_links, len(early_slots) + 1))
    n_late = int(rng.integers(n_links, len(late_slots) + 1))
    earlies: list[list[int]] = [[] for _ in range(n_links)]
    lates: list[list[int]] = [[] for _ in range(n_links)]
    for idx in range(n_early):
        earlies[idx % n_links].append(int(early_slots[idx]))
    for idx in range(n_late):
        lates[idx % n_links].append(int(late_slots[idx]))
    return [(sorted(e), sorted(l)) for e, l in zip(earlies, lates)]


def _gen_planted_key(
    doc_id: str, spec: SynthSpec, rng: np.random.Generator, links: set
) -> Document:
    """Several early segments end with (k1, k2); several far segments
    begin with (k3, k4); scattered copies of the four-token phrase give
    the scorer training support for P(k3 | k1, k2)."""
    L = spec.segment_len
    tokens = _background(rng, spec.doc_token_len, spec.background_vocab)
    reserved: list[tuple[int, int]] = []
    for li, (earlies, lates) in enumerate(_link_layout(spec, rng)):
        k1, k2, k3, k4 = (f"{doc_id}k{li}{s}" for s in "abcd")
        for late in lates:
            head = late * L
            tokens[head : head + 2] = [k3, k4]
            reserved.append((head, head + 2))
        for early in earlies:
            tail = early * L + L - 2
            tokens[tail : tail + 2] = [k1, k2]
            reserved.append((tail, tail + 2))
        _place_copies(tokens, (k1, k2, k3, k4), 4, rng, reserved)
        links.add(((k1, k2), k3))
    return Document(id=doc_id, source="planted-key", text="", tokens=tuple(tokens))


def _gen_entity_chain(
    doc_id: str, spec: SynthSpec, rng: np.random.Generator, links: set
) -> Document:
    """A cycling three-token mention (a b c a b c ...) runs through
    several early segments, each breaking off mid-cycle; several far
    segments resume the cycle, so context supplies exactly the missing
    continuation."""
    L = spec.segment_len
    tokens = _background(rng, spec.doc_token_len, spec.background_vocab)
    reserved: list[tuple[int, int]] = []
    for li, (earlies, lates) in enumerate(_link_layout(spec, rng)):
        ea, eb, ec = (f"{doc_id}e{li}{s}" for s in "abc")
        cycle = [ea, eb, ec, ea, eb, ec, ea, eb]
        for late in lates:
            head = late * L
            tokens[head : head + 4] = [ec, ea, eb, ec]
            reserved.append((head, head + 4))
        for early in earlies:
            tail = early * L + L - len(cycle)
            tokens[tail : tail + len(cycle)] = cycle
            reserved.append((tail, tail + len(cycle)))
        _place_copies(tokens, (ea, eb, ec, ea, eb, ec), 2, rng, reserved)
        links.add(((ea, eb), ec))
    return Document(id=doc_id, source="entity-chain", text="", tokens=tuple(tokens))


def _short_pool(spec: SynthSpec) -> list[list[str]]:
    # Sized so a without-replacement draw always covers one document.
    rng = np.random.Generator(np.random.PCG64(derive_seed(spec.seed, "short-pool")))
    L = spec.segment_len
    pool = []
    for _ in range(max(200, spec.n_segments * 2)):
        length = int(rng.integers((3 * L) // 2, 3 * L + 1))
        pool.append(_background(rng, length, spec.background_vocab))
    return pool


def _gen_concat_shorts(
    doc_id: str, spec: SynthSpec, rng: np.random.Generator, pool: list[list[str]]
) -> Document:
    """Independent short texts glued together. Each document draws its
    shorts without replacement, so nothing recurs at long range and only
    near-diagonal segment pairs relate."""
    size = spec.doc_token_len
    order = rng.permutation(len(pool))
    tokens: list[str] = []
    for ix in order:
        if len(tokens) >= size:
            break
        tokens.extend(pool[int(ix)])
    return Document(
        id=doc_id, source="concat-shorts", text="", tokens=tuple(tokens[:size])
    )


def _gen_local_markov(doc_id: str, spec: SynthSpec, rng: np.random.Generator) -> Document:
    """A sticky random walk over a narrow vocabulary window that drifts
    steadily along the document: adjacent segments overlap in wording,
    anything further apart shares none, so the text is locally coherent
    yet offers a far-away context nothing to predict."""
    window = 8
    size = spec.doc_token_len
    # The window advances one full width every two segments, so only
    # neighbouring segments share vocabulary.
    span = max(window, (size * window) // (2 * spec.segment_len))
    sticky = rng.random(size) < 0.6
    steps = rng.integers(1, 4, size=size) * rng.choice((-1, 1), size=size)
    offset = int(rng.integers(0, window))
    tokens = []
    for i in range(size):
        if not sticky[i]:
            offset = (offset + int(steps[i])) % window
        tokens.append(f"m{(i * span) // size + offset:04d}")
    return Document(id=doc_id, source="local-markov", text="", tokens=tuple(tokens))


def repeated_token_document(doc_id: str, n_tokens: int, token: str = "r") -> Document:
    """The degenerate pathology fixture: one token repeated throughout."""
    return Document(id=doc_id, source="repeated", text="", tokens=(token,) * n_tokens)


def generate_testset(
    spec: SynthSpec,
    positive_kinds: Sequence[str] = POSITIVE_KINDS,
    negative_kinds: Sequence[str] = NEGATIVE_KINDS,
) -> TestSet:
    """Deterministic labeled corpus; same spec and kinds, same bytes.

    Kinds cycle over the given sequences, so restricting a sequence to a
    single entry yields a homogeneous arm."""
    for kind in (*positive_kinds, *negative_kinds):
        if kind not in POSITIVE_KINDS + NEGATIVE_KINDS:
            raise ValueError(f"unknown document kind: {kind!r}")
    docs: list[Document] = []
    labels: dict[str, int] = {}
    links: set = set()
    pool = _short_pool(spec)
    for i in range(spec.n_positive):
        doc_id = f"pos-{i:04d}"
        rng = np.random.Generator(np.random.PCG64(derive_seed(spec.seed, doc_id)))
        kind = positive_kinds[i % len(positive_kinds)]
        if kind == "planted-key":
            doc = _gen_planted_key(doc_id, spec, rng, links)
        else:
            doc = _gen_entity_chain(doc_id, spec, rng, links)
        docs.append(doc)
        labels[doc_id] = 1
    for i in range(spec.n_negative):
        doc_id = f"neg-{i:04d}"
        rng = np.random.Generator(np.random.PCG64(derive_seed(spec.seed, doc_id)))
        kind = negative_kinds[i % len(negative_kinds)]
        if kind == "concat-shorts":
            doc = _gen_concat_shorts(doc_id, spec, rng, pool)
        else:
            doc = _gen_local_markov(doc_id, spec, rng)
        docs.append(doc)
        labels[doc_id] = 0
    return TestSet(spec=spec, docs=tuple(docs), labels=labels, links=frozenset(links))


class OracleBackend:
    """Label-reading upper bound: scores a conditional pair well exactly
    when the context's closing bigram is registered as predicting the
    target's opening token. Calibrates the bench's accuracy ceiling."""

    def __init__(self, links: frozenset, base_logprob: float = -2.0, boost_logprob: float = -0.5):
        self.links = links
        self.base_logprob = base_logprob
        self.boost_logprob = boost_logprob

    @property
    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(max_context_tokens=1 << 22, deterministic=True)

    def score(self, target, context=None):
        n = len(target)
        if context and len(context) >= 2 and ((context[-2], context[-1]), target[0]) in self.links:
            return (n * self.boost_logprob, n)
        return (n * self.base_logprob, n)


# -- bench ----------------------------------------------------------------


@dataclass(frozen=True)
class BenchResult:
    backend: str
    sample_size: int
    n_docs: int
    workers: int
    wall_time_s: float
    docs_per_second: float
    accuracy_at_k: float | None
    status: str = "ok"
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "sample_size": self.sample_size,
            "n_docs": self.n_docs,
            "workers": self.workers,
            "wall_time_s": self.wall_time_s,
            "docs_per_second": self.docs_per_second,
            "accuracy_at_k": self.accuracy_at_k,
            "status": self.status,
            "error": self.error,
        }


def accuracy_at_k(reports, labels: dict[str, int], k: int | None = None) -> float:
    """Fraction of positives in the top-k by score, k defaulting to the
    number of positives. Sort is deterministic: score desc, id asc."""
    if k is None:
        k = sum(labels.values())
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(reports, key=lambda r: (-r.lds, r.doc_id))
    top = ranked[:k]
    return sum(labels.get(r.doc_id, 0) for r in top) / k


def run_bench(
    testset: TestSet,
    backends: Sequence[tuple[str, Callable[[], object]]],
    sample_sizes: Sequence[int],
    base_cfg: LdsConfig | None = None,
    workers: int = 1,
) -> list[BenchResult]:
    """One cell per (backend, T): score every document in sampled mode,
    rank, and measure accuracy plus scoring throughput.

    Cells run sequentially so timings do not contend; each cell builds a
    fresh backend so caches never carry over. A failing cell is recorded
    and the remaining cells proceed.
    """
    base_cfg = base_cfg or LdsConfig(
        segment_len=testset.spec.segment_len,
        truncate_len=testset.spec.doc_token_len,
    )
    results: list[BenchResult] = []
    for label, factory in backends:
        for t in sample_sizes:
            cfg = base_cfg.replace(mode="sampled", sample_size=t)
            try:
                backend = factory()
                stats = ScoringStats()
                start = time.perf_counter()
                outcomes = list(
                    score_corpus(
                        testset.docs,
                        backend,
                        cfg,
                        workers=workers,
                        cache=PplCache(),
                        stats=stats,
                    )
                )
                wall = time.perf_counter() - start
                reports = reports_only(outcomes)
                if not reports:
                    raise BackendError("no documents scored")
                acc = accuracy_at_k(reports, testset.labels)
                results.append(
                    BenchResult(
                        backend=label,
                        sample_size=t,
                        n_docs=len(reports),
                        workers=workers,
                        wall_time_s=wall,
                        docs_per_second=len(reports) / wall if wall > 0 else float("inf"),
                        accuracy_at_k=acc,
                    )
                )
            except BackendError as exc:
                results.append(
                    BenchResult(
                        backend=label,
                        sample_size=t,
                        n_docs=0,
                        workers=workers,
                        wall_time_s=0.0,
                        docs_per_second=0.0,
                        accuracy_at_k=None,
                        status="failed",
                        error=str(exc),
                    )
                )
    return results


def bench_csv(results: Sequence[BenchResult]) -> str:
    lines = ["T,backend,docs_per_s,accuracy_at_k,status"]
    for r in results:
        acc = "" if r.accuracy_at_k is None else f"{r.accuracy_at_k:.4f}"
        lines.append(f"{r.sample_size},{r.backend},{r.docs_per_second:.4f},{acc},{r.status}")
    return "\n".join(lines) + "\n"


def bench_table(results: Sequence[BenchResult]) -> str:
    header = f"{'T':>8}  {'backend':<16} {'docs/s':>10} {'accuracy':>9}  status"
    lines = [header, "-" * len(header)]
    for r in results:
        acc = "-" if r.accuracy_at_k is None else f"{r.accuracy_at_k:.3f}"
        lines.append(
            f"{r.sample_size:>8}  {r.backend:<16} {r.docs_per_second:>10.3f} {acc:>9}  {r.status}"
        )
    return "\n".join(lines) + "\n"
