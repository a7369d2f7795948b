"""Document ingestion, tokenization, and fixed-length segmentation.

Documents come in as JSONL records or plain files, get tokenized by a
deterministic pipeline tokenizer, and are partitioned into a grid of
equal-length token segments that the scorer consumes. Token counts
everywhere in this package are pipeline-tokenizer counts; an external
scorer is free to re-tokenize internally.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

from .errors import DocumentTooShort

logger = logging.getLogger(__name__)

# Whitespace tokens are the split pieces themselves; byte tokens are ints
# in 0..255. The two kinds never collide as dict keys.
Token = Union[int, str]


@dataclass(frozen=True)
class Document:
    """One unit of corpus text. Immutable; safe to share across workers."""

    id: str
    source: str
    text: str
    tokens: tuple[Token, ...] | None = None

    def with_tokens(self, tokens: Sequence[Token]) -> "Document":
        return replace(self, tokens=tuple(tokens))


@dataclass(frozen=True)
class TokenizerSpec:
    """Deterministic tokenizer configuration.

    kind "whitespace" splits on runs of whitespace and falls back to raw
    UTF-8 bytes for texts that do not split (single-blob code, CJK).
    kind "byte" always yields the UTF-8 byte values. An optional frozen
    vocabulary maps tokens to integer ids; tokens outside it map to the
    reserved id ``len(vocabulary)``.
    """

    kind: str = "whitespace"
    vocabulary: Mapping[str, int] | None = None

    def __post_init__(self):
        if self.kind not in ("whitespace", "byte"):
            raise ValueError(f"unknown tokenizer kind {self.kind!r}")

    def tokenize(self, text: str) -> tuple[Token, ...]:
        if self.kind == "byte":
            toks: tuple[Token, ...] = tuple(text.encode("utf-8"))
        else:
            parts = text.split()
            if len(parts) >= 2:
                toks = tuple(parts)
            else:
                # No usable whitespace structure: byte-level fallback.
                toks = tuple(text.strip().encode("utf-8"))
        if self.vocabulary is not None:
            unk = len(self.vocabulary)
            toks = tuple(self.vocabulary.get(t, unk) for t in toks)  # type: ignore[arg-type]
        return toks

    def detokenize(self, tokens: Sequence[Token]) -> str:
        """Best-effort inverse used when shipping segments to an external
        scorer as text."""
        if self.vocabulary is not None:
            inverse = {v: k for k, v in self.vocabulary.items()}
            tokens = [inverse.get(t, "<unk>") for t in tokens]  # type: ignore[index]
        if tokens and all(isinstance(t, int) for t in tokens):
            return bytes(tokens).decode("utf-8", errors="replace")  # type: ignore[arg-type]
        return " ".join(str(t) for t in tokens)


def tokenize(doc: Document, spec: TokenizerSpec) -> Document:
    """Return a copy of ``doc`` with tokens filled in."""
    return doc.with_tokens(spec.tokenize(doc.text))


@dataclass(frozen=True)
class SegmentGrid:
    """A document partitioned into N segments of exactly ``segment_len``
    tokens each. The trailing remainder shorter than one segment is
    discarded, never padded."""

    doc_id: str
    segment_len: int
    segments: tuple[tuple[Token, ...], ...]
    source: str = ""

    @property
    def n_segments(self) -> int:
        return len(self.segments)


def segment(doc: Document, segment_len: int, truncate_len: int) -> SegmentGrid:
    """Truncate ``doc`` to ``truncate_len`` tokens and split into segments.

    Raises DocumentTooShort when fewer than two whole segments fit; such
    documents are excluded from scoring and recorded in the manifest.
    """
    if doc.tokens is None or not doc.tokens:
        raise ValueError(f"document {doc.id!r} has no tokens; tokenize first")
    if segment_len < 1:
        raise ValueError("segment_len must be >= 1")
    if truncate_len < 2 * segment_len:
        raise ValueError("truncate_len must be at least 2 * segment_len")

    kept = doc.tokens[:truncate_len]
    n = len(kept) // segment_len
    if n < 2:
        raise DocumentTooShort(doc.id, len(doc.tokens), segment_len)
    segments = tuple(
        tuple(kept[i * segment_len : (i + 1) * segment_len]) for i in range(n)
    )
    return SegmentGrid(
        doc_id=doc.id, segment_len=segment_len, segments=segments, source=doc.source
    )


@dataclass
class IngestStats:
    """Diagnostic counters for one ingestion run."""

    read: int = 0
    yielded: int = 0
    skipped_malformed: int = 0
    skipped_duplicate_id: int = 0


def ingest(
    path: str | os.PathLike,
    format: str = "jsonl",
    stats: IngestStats | None = None,
) -> Iterator[Document]:
    """Stream documents from ``path`` in input order.

    jsonl: one object per line with required string fields id and text;
    source is optional and defaults to the file's stem. Malformed lines
    (bad JSON, missing/empty fields, duplicate ids) are skipped and
    counted, never fatal. An unreadable path is fatal.

    plain-dir: every regular file under ``path`` is one document, id is
    the path relative to the root, source defaults to the file's stem.
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input path does not exist: {p}")
    if stats is None:
        stats = IngestStats()

    if format == "jsonl":
        yield from _ingest_jsonl(p, stats)
    elif format == "plain-dir":
        yield from _ingest_plain_dir(p, stats)
    else:
        raise ValueError(f"unknown ingest format {format!r}")


def _ingest_jsonl(path: Path, stats: IngestStats) -> Iterator[Document]:
    default_source = path.stem
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            stats.read += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                stats.skipped_malformed += 1
                logger.debug("%s:%d: bad JSON, skipped", path, lineno)
                continue
            doc = _record_to_document(record, default_source)
            if doc is None:
                stats.skipped_malformed += 1
                logger.debug("%s:%d: missing id/text, skipped", path, lineno)
                continue
            if doc.id in seen_ids:
                stats.skipped_duplicate_id += 1
                logger.debug("%s:%d: duplicate id %r, skipped", path, lineno, doc.id)
                continue
            seen_ids.add(doc.id)
            stats.yielded += 1
            yield doc


def _record_to_document(record: object, default_source: str) -> Document | None:
    if not isinstance(record, dict):
        return None
    doc_id = record.get("id")
    text = record.get("text")
    if doc_id is None or text is None or not isinstance(text, str):
        return None
    doc_id = str(doc_id)
    if not doc_id:
        return None
    source = record.get("source")
    if not isinstance(source, str) or not source:
        source = default_source
    return Document(id=doc_id, source=source, text=text)


def _ingest_plain_dir(root: Path, stats: IngestStats) -> Iterator[Document]:
    if not root.is_dir():
        raise NotADirectoryError(f"plain-dir input must be a directory: {root}")
    for file in sorted(root.rglob("*")):
        if not file.is_file():
            continue
        stats.read += 1
        try:
            text = file.read_text(encoding="utf-8", errors="replace")
        except OSError:
            stats.skipped_malformed += 1
            continue
        stats.yielded += 1
        yield Document(
            id=str(file.relative_to(root)),
            source=file.stem,
            text=text,
        )


def tokenized_corpus(
    docs: Iterable[Document], spec: TokenizerSpec
) -> Iterator[Document]:
    """Tokenize a document stream, leaving already-tokenized docs alone."""
    for doc in docs:
        yield doc if doc.tokens is not None else tokenize(doc, spec)
