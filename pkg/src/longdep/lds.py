"""Long-dependency scoring.

A document is split into N fixed-length segments. For an ordered pair of
segments (target i, source j) with j < i, three quantities combine into a
pairwise score:

  dst  relative drop in target perplexity when the source is prepended:
         (ppl(i) - ppl(i | j)) / ppl(i)
  ddi  normalized segment distance: (i - j) / (N - 1)
  dsp  sharpness of the target's dependency profile: one minus the
         normalized entropy of a softmax over the target's dst row

Pairwise scores pass through an indicator gate (dst > tau) and sum into
the document score. ``exact`` mode evaluates every pair; ``sampled`` mode
evaluates a uniform without-replacement subset and is bit-identical to
exact whenever the requested sample covers all pairs.

Segment indices are 0-based everywhere, in code and in artifacts. Both
index conventions give the same arithmetic: distances and row sizes are
shift-invariant.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .backends import PerplexityBackend, PplCache, cached_unconditional, ppl_given
from .corpus import SegmentGrid
from .errors import BackendError, BackendUnreachable, ConfigError
from .jsonio import fingerprint

DSP_VARIANTS = ("multiplicative", "additive", "none")
MODES = ("exact", "sampled")


@dataclass(frozen=True)
class LdsConfig:
    """Scoring parameters. Defaults are the reference profile."""

    segment_len: int = 128
    truncate_len: int = 32768
    tau: float = 0.05
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    mode: str = "sampled"
    sample_size: int = 5000
    dsp_variant: str = "multiplicative"
    seed: int = 0

    def __post_init__(self):
        if self.segment_len < 1:
            raise ConfigError(f"segment_len must be >= 1, got {self.segment_len}")
        if self.truncate_len < 2 * self.segment_len:
            raise ConfigError(
                f"truncate_len must be >= 2 * segment_len, got {self.truncate_len}"
            )
        if not (math.isfinite(self.tau) and self.tau >= 0.0):
            raise ConfigError(f"tau must be finite and >= 0, got {self.tau}")
        for name in ("alpha", "beta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sample_size < 1:
            raise ConfigError(f"sample_size must be >= 1, got {self.sample_size}")
        if self.dsp_variant not in DSP_VARIANTS:
            raise ConfigError(
                f"dsp_variant must be one of {DSP_VARIANTS}, got {self.dsp_variant!r}"
            )

    def replace(self, **changes) -> "LdsConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "segment_len": self.segment_len,
            "truncate_len": self.truncate_len,
            "tau": self.tau,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "mode": self.mode,
            "sample_size": self.sample_size,
            "dsp_variant": self.dsp_variant,
            "seed": self.seed,
        }

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def dst(unconditional: float, conditional: float) -> float:
    """Relative perplexity drop. Positive when context helps; can be
    negative when context hurts. Bounded above by 1."""
    if not (unconditional > 0.0 and math.isfinite(unconditional)):
        raise ValueError(f"unconditional perplexity must be positive, got {unconditional}")
    if not (conditional > 0.0 and math.isfinite(conditional)):
        raise ValueError(f"conditional perplexity must be positive, got {conditional}")
    return (unconditional - conditional) / unconditional


def ddi(target: int, source: int, n_segments: int) -> float:
    """Normalized distance between segment positions, in (0, 1]."""
    if n_segments < 2:
        raise ValueError("a document has at least two segments")
    if not 0 <= source < target < n_segments:
        raise ValueError(f"need 0 <= source < target < {n_segments}, got ({target}, {source})")
    return (target - source) / (n_segments - 1)


def dsp(row: Sequence[float]) -> float:
    """Dependency sharpness of a target's dst row, in [0, 1].

    Softmax the row, take entropy in nats, normalize by log(m), subtract
    from 1. A uniform row gives 0; mass concentrated on one source gives
    values near 1. A single-element row carries no contrast to sharpen,
    so it scores 0.
    """
    m = len(row)
    if m == 0:
        raise ValueError("dst row must be non-empty")
    if m == 1:
        return 0.0
    peak = max(row)
    exps = [math.exp(v - peak) for v in row]
    z = sum(exps)
    entropy = 0.0
    for e in exps:
        p = e / z
        if p > 0.0:
            entropy -= p * math.log(p)
    value = (math.log(m) - entropy) / math.log(m)
    return min(1.0, max(0.0, value))


def lds_pair(dst_value: float, ddi_value: float, dsp_value: float, cfg: LdsConfig) -> float:
    """Combine the three per-pair quantities under the configured variant."""
    base = cfg.alpha * dst_value + cfg.beta * ddi_value
    if cfg.dsp_variant == "multiplicative":
        return base * dsp_value
    if cfg.dsp_variant == "additive":
        return base + cfg.gamma * dsp_value
    return base


def pair_count(n_segments: int) -> int:
    """Number of ordered (target, source) pairs with source < target."""
    return n_segments * (n_segments - 1) // 2


def _pair_from_linear(linear: int) -> tuple[int, int]:
    # Pairs enumerate target-major: linear = t*(t-1)/2 + s with s < t.
    t = (1 + math.isqrt(1 + 8 * linear)) // 2
    while t * (t - 1) // 2 > linear:
        t -= 1
    while (t + 1) * t // 2 <= linear:
        t += 1
    return t, linear - t * (t - 1) // 2


def derive_seed(base_seed: int, doc_id: str) -> int:
    """Per-document seed, stable across processes and worker counts."""
    digest = hashlib.sha256(f"{base_seed}\x1f{doc_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)


def sample_pairs(n_segments: int, sample_size: int, seed: int) -> tuple[tuple[int, int], ...]:
    """Uniform without-replacement sample of (target, source) pairs,
    returned in canonical order: target ascending, source ascending.

    A sample_size covering every pair returns exactly the full pair set.
    """
    if n_segments < 2:
        raise ValueError("a document has at least two segments")
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    total = pair_count(n_segments)
    if sample_size >= total:
        return tuple((t, s) for t in range(1, n_segments) for s in range(t))
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = rng.choice(total, size=sample_size, replace=False)
    chosen.sort()
    return tuple(_pair_from_linear(int(ix)) for ix in chosen)


class PairScore(NamedTuple):
    target: int
    source: int
    dst: float
    ddi: float
    dsp: float
    pairwise: float
    gated: bool

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "source": self.source,
            "dst": self.dst,
            "ddi": self.ddi,
            "dsp": self.dsp,
            "pairwise": self.pairwise,
            "gated": self.gated,
        }


@dataclass(frozen=True)
class ScoreReport:
    doc_id: str
    n_segments: int
    mode: str
    lds: float
    pair_count: int
    gated_count: int
    config_hash: str
    source: str = ""
    pairs: tuple[PairScore, ...] = field(default=(), repr=False)

    def to_dict(self, include_pairs: bool = False) -> dict:
        out = {
            "doc_id": self.doc_id,
            "source": self.source,
            "n_segments": self.n_segments,
            "mode": self.mode,
            "lds": self.lds,
            "pair_count": self.pair_count,
            "gated_count": self.gated_count,
            "config_hash": self.config_hash,
        }
        if include_pairs:
            out["pairs"] = [p.to_dict() for p in self.pairs]
        return out


def _group_rows(pairs: Iterable[tuple[int, int]]) -> dict[int, list[int]]:
    rows: dict[int, list[int]] = {}
    for target, source in pairs:
        rows.setdefault(target, []).append(source)
    for sources in rows.values():
        sources.sort()
    return rows


def _score_rows(
    backend: PerplexityBackend,
    grid: SegmentGrid,
    cfg: LdsConfig,
    rows: dict[int, list[int]],
    unconditional: Sequence[float],
    keep_pairs: bool,
) -> tuple[float, int, int, list[PairScore]]:
    """Shared accumulation path for both modes.

    Rows are walked target-ascending and sources source-ascending, so a
    sample that happens to cover all pairs performs the identical float
    operations, in the identical order, as an exact run. With
    keep_pairs=False the per-pair records are not materialized; the
    accumulated score is unaffected.
    """
    n = grid.n_segments
    total = 0.0
    gated_count = 0
    n_pairs = 0
    pair_scores: list[PairScore] = []
    for target in sorted(rows):
        sources = rows[target]
        target_seg = grid.segments[target]
        u = unconditional[target]
        dst_row: list[float] = []
        for source in sources:
            try:
                conditional = ppl_given(backend, target_seg, grid.segments[source])
            except BackendUnreachable:
                raise
            except BackendError as exc:
                raise BackendError(
                    f"conditional scoring failed at pair ({target}, {source}): {exc}",
                    retriable=exc.retriable,
                    segment_index=target,
                ) from exc
            dst_row.append(dst(u, conditional))
        dsp_value = dsp(dst_row)
        for source, dst_value in zip(sources, dst_row):
            ddi_value = ddi(target, source, n)
            pairwise = lds_pair(dst_value, ddi_value, dsp_value, cfg)
            gated = dst_value > cfg.tau
            if gated:
                total += pairwise
                gated_count += 1
            n_pairs += 1
            if keep_pairs:
                pair_scores.append(
                    PairScore(target, source, dst_value, ddi_value, dsp_value, pairwise, gated)
                )
    return total, gated_count, n_pairs, pair_scores


def lds_exact(
    backend: PerplexityBackend,
    grid: SegmentGrid,
    cfg: LdsConfig,
    cache: PplCache | None = None,
    keep_pairs: bool = True,
) -> ScoreReport:
    """Document score over every (target, source) pair."""
    unconditional = cached_unconditional(backend, grid, cache)
    rows = {t: list(range(t)) for t in range(1, grid.n_segments)}
    total, gated_count, n_pairs, pairs = _score_rows(
        backend, grid, cfg, rows, unconditional, keep_pairs
    )
    return ScoreReport(
        doc_id=grid.doc_id,
        n_segments=grid.n_segments,
        mode="exact",
        lds=total,
        pair_count=n_pairs,
        gated_count=gated_count,
        config_hash=cfg.fingerprint(),
        source=grid.source,
        pairs=tuple(pairs),
    )


def lds_sampled(
    backend: PerplexityBackend,
    grid: SegmentGrid,
    cfg: LdsConfig,
    seed: int | None = None,
    cache: PplCache | None = None,
    keep_pairs: bool = True,
) -> ScoreReport:
    """Document score over a uniform without-replacement pair sample.

    The sample is drawn from ``seed`` (default: the config seed); per
    document the pipeline derives a seed from (config seed, doc id) so
    results never depend on worker count or arrival order.
    """
    if seed is None:
        seed = cfg.seed
    pairs = sample_pairs(grid.n_segments, cfg.sample_size, seed)
    unconditional = cached_unconditional(backend, grid, cache)
    rows = _group_rows(pairs)
    total, gated_count, n_pairs, scored = _score_rows(
        backend, grid, cfg, rows, unconditional, keep_pairs
    )
    return ScoreReport(
        doc_id=grid.doc_id,
        n_segments=grid.n_segments,
        mode="sampled",
        lds=total,
        pair_count=n_pairs,
        gated_count=gated_count,
        config_hash=cfg.fingerprint(),
        source=grid.source,
        pairs=tuple(scored),
    )


def score_document(
    backend: PerplexityBackend,
    grid: SegmentGrid,
    cfg: LdsConfig,
    seed: int | None = None,
    cache: PplCache | None = None,
    keep_pairs: bool = True,
) -> ScoreReport:
    """Mode dispatch used by the pipeline."""
    if cfg.mode == "exact":
        return lds_exact(backend, grid, cfg, cache, keep_pairs=keep_pairs)
    return lds_sampled(backend, grid, cfg, seed=seed, cache=cache, keep_pairs=keep_pairs)
