"""Long-dependency scoring for training-corpus curation.

Splits documents into fixed-length segments, measures how much earlier
segments reduce the perplexity of later ones, and aggregates that into a
per-document score used to rank and select long-range-coherent training
data. Ships a built-in n-gram scorer, a wire protocol for external
scorers, a selection pipeline, heatmap rendering, and a synthetic bench.
"""

from .backends import (
    CacheEntry,
    CountingBackend,
    ExternalBackend,
    PerplexityBackend,
    PplCache,
    cached_unconditional,
    ppl,
    ppl_given,
)
from .bench import (
    BenchResult,
    OracleBackend,
    SynthSpec,
    TestSet,
    accuracy_at_k,
    generate_testset,
    repeated_token_document,
    run_bench,
)
from .config import REFERENCE_PROFILE, RunConfig, resolve_config
from .corpus import (
    Document,
    IngestStats,
    SegmentGrid,
    Token,
    TokenizerSpec,
    ingest,
    segment,
    tokenize,
)
from .errors import (
    BackendError,
    BackendUnreachable,
    ConfigError,
    DocumentTooShort,
    LongdepError,
    ScoringError,
)
from .heatmap import HeatmapSpec, matrix_from_pairs, read_dst_csv, render_heatmap
from .lds import (
    LdsConfig,
    PairScore,
    ScoreReport,
    ddi,
    derive_seed,
    dsp,
    dst,
    lds_exact,
    lds_pair,
    lds_sampled,
    pair_count,
    sample_pairs,
    score_document,
)
from .ngram import BackendCapabilities, NGramBackend, NGramModel, train_ngram
from .pipeline import (
    DocumentOutcome,
    ScoringStats,
    SelectionManifest,
    build_manifest,
    random_baseline,
    rank_and_select,
    reports_only,
    score_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "BackendCapabilities",
    "BackendError",
    "BackendUnreachable",
    "BenchResult",
    "CacheEntry",
    "ConfigError",
    "CountingBackend",
    "Document",
    "DocumentOutcome",
    "DocumentTooShort",
    "ExternalBackend",
    "HeatmapSpec",
    "IngestStats",
    "LdsConfig",
    "LongdepError",
    "NGramBackend",
    "NGramModel",
    "OracleBackend",
    "PairScore",
    "PerplexityBackend",
    "PplCache",
    "REFERENCE_PROFILE",
    "RunConfig",
    "ScoreReport",
    "ScoringError",
    "ScoringStats",
    "SegmentGrid",
    "SelectionManifest",
    "SynthSpec",
    "TestSet",
    "Token",
    "TokenizerSpec",
    "accuracy_at_k",
    "build_manifest",
    "cached_unconditional",
    "ddi",
    "derive_seed",
    "dsp",
    "dst",
    "generate_testset",
    "ingest",
    "lds_exact",
    "lds_pair",
    "lds_sampled",
    "matrix_from_pairs",
    "pair_count",
    "ppl",
    "ppl_given",
    "random_baseline",
    "rank_and_select",
    "read_dst_csv",
    "render_heatmap",
    "repeated_token_document",
    "reports_only",
    "resolve_config",
    "run_bench",
    "sample_pairs",
    "score_corpus",
    "score_document",
    "segment",
    "tokenize",
    "train_ngram",
]
