"""Splits clean documents into chunks, either recursively on a separator
hierarchy or on embedding-similarity boundaries between sentences."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from retrieval_bench.transformations.text_normalizers import CleanDocument
from retrieval_bench.util.text_utils import split_sentences

# Descended in order; a piece that is still too long after the last one is
# cut every max_chars characters.
SEPARATORS = ("\n\n", "\n", ". ", " ")

Span = Tuple[int, int]
EmbedFunction = Callable[[List[str]], np.ndarray]


class ChunkingError(Exception):
    """Raised when a document cannot be chunked, e.g. its sentences could not
    be embedded."""

    pass


@dataclass(frozen=True)
class Chunk:
    """A contiguous, trimmed segment of a clean document."""

    chunk_id: str
    doc_id: str
    seq: int
    text: str
    span_start: int
    span_end: int
    strategy: str

    @property
    def span(self) -> Span:
        """(start_char, end_char) offsets into the clean document"""
        return self.span_start, self.span_end


@dataclass(frozen=True)
class ChunkValidationReport:
    """Result of validate_chunks. violation is None when passed."""

    passed: bool
    violation: Optional[str] = None
    detail: str = ""


def make_chunk_id(doc_id: str, seq: int) -> str:
    """doc_id + ":" + zero-padded seq"""
    return f"{doc_id}:{seq:05d}"


def _trim(text: str, span: Span) -> Optional[Span]:
    """Shrink a span to exclude boundary whitespace. None if nothing is
    left."""
    start, end = span
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return (start, end) if end > start else None


def _split_on(text: str, start: int, end: int, separator: str) -> List[Span]:
    """Spans of text[start:end] split after each separator occurrence. The
    separator stays attached to the piece before it."""
    pieces = []
    piece_start = start
    position = text.find(separator, start, end)
    while position != -1:
        piece_end = position + len(separator)
        pieces.append((piece_start, piece_end))
        piece_start = piece_end
        position = text.find(separator, piece_start, end)
    if piece_start < end:
        pieces.append((piece_start, end))
    return pieces


def _recursive_spans(
    text: str, start: int, end: int, max_chars: int, level: int = 0
) -> List[Span]:
    """Trimmed spans of length <= max_chars covering the non-whitespace
    content of text[start:end]"""
    trimmed = _trim(text, (start, end))
    if trimmed is None:
        return []
    start, end = trimmed
    if end - start <= max_chars:
        return [(start, end)]
    if level >= len(SEPARATORS):
        cuts = [
            _trim(text, (cut, min(cut + max_chars, end)))
            for cut in range(start, end, max_chars)
        ]
        return [cut for cut in cuts if cut is not None]
    # Whitespace-only pieces never form a chunk
    pieces = [
        piece
        for piece in (
            _trim(text, span)
            for span in _split_on(text, start, end, SEPARATORS[level])
        )
        if piece is not None
    ]
    if len(pieces) <= 1:
        return _recursive_spans(text, start, end, max_chars, level + 1)

    spans = []
    current = None
    for piece_start, piece_end in pieces:
        if piece_end - piece_start > max_chars:
            if current is not None:
                spans.append(current)
                current = None
            spans.extend(
                _recursive_spans(
                    text, piece_start, piece_end, max_chars, level + 1
                )
            )
        elif current is None:
            current = (piece_start, piece_end)
        elif piece_end - current[0] <= max_chars:
            current = (current[0], piece_end)
        else:
            spans.append(current)
            current = (piece_start, piece_end)
    if current is not None:
        spans.append(current)
    return spans


def _spans_to_chunks(
    doc: CleanDocument, spans: Sequence[Span], strategy: str
) -> List[Chunk]:
    """Trim spans, drop empty ones and number the rest"""
    chunks = []
    for span in spans:
        trimmed = _trim(doc.text, span)
        if trimmed is None:
            continue
        seq = len(chunks)
        chunks.append(
            Chunk(
                chunk_id=make_chunk_id(doc.doc_id, seq),
                doc_id=doc.doc_id,
                seq=seq,
                text=doc.text[trimmed[0] : trimmed[1]],
                span_start=trimmed[0],
                span_end=trimmed[1],
                strategy=strategy,
            )
        )
    return chunks


def recursive_chunk(doc: CleanDocument, max_chars: int) -> List[Chunk]:
    """
    Split a document on paragraph breaks, line breaks, sentence ends and
    word boundaries, descending only for pieces longer than max_chars, and
    greedily merge adjacent pieces while the merge fits. Lengths are
    measured without leading and trailing whitespace, so a smaller
    max_chars never gives fewer chunks.
    Args:
        doc (CleanDocument): Normalized document.
        max_chars (int): Upper bound on chunk length. Inner whitespace
          counts.

    Returns:
        List[Chunk]: Chunks in document order. Empty for an empty document.
    """
    if max_chars < 1:
        raise ValueError(f"max_chars must be positive, got {max_chars}")
    spans = _recursive_spans(doc.text, 0, len(doc.text), max_chars)
    return _spans_to_chunks(doc, spans, f"recursive-{max_chars}")


def _sentence_units(text: str, max_chars: int) -> List[Span]:
    """Sentence spans, with sentences longer than max_chars split
    recursively"""
    units = []
    for start, end in split_sentences(text):
        if end - start <= max_chars:
            units.append((start, end))
            continue
        units.extend(_recursive_spans(text, start, end, max_chars))
    return units


def semantic_chunk(
    doc: CleanDocument,
    embed: EmbedFunction,
    similarity_threshold: float = 0.5,
    min_sentences: int = 2,
    max_chars: int = 2000,
) -> List[Chunk]:
    """
    Accumulate sentences into chunks and start a new chunk where the next
    sentence drifts away from the current one.
    Args:
        doc (CleanDocument): Normalized document.
        embed (EmbedFunction): Maps a list of texts to a matrix of unit
          vectors, one row per text.
        similarity_threshold (float): A boundary is placed when the cosine
          between the mean embedding of the current chunk's sentences and the
          next sentence falls below this value, provided the current chunk
          already has min_sentences sentences.
        min_sentences (int): Minimum sentences before a similarity boundary.
        max_chars (int): A boundary is forced when adding the next sentence
          would make the chunk longer than this.

    Returns:
        List[Chunk]: Chunks in document order.

    Raises:
        ChunkingError: If the sentences cannot be embedded.
    """
    units = _sentence_units(doc.text, max_chars)
    strategy = f"semantic-{similarity_threshold:g}"
    if not units:
        return []
    try:
        embeddings = np.asarray(
            embed([doc.text[s:e] for s, e in units]), dtype=np.float64
        )
    except Exception as e:
        raise ChunkingError(
            f"Unable to embed the {len(units)} sentences of document "
            f"{doc.doc_id}: {e}"
        ) from e
    if embeddings.shape[0] != len(units):
        raise ChunkingError(
            f"Embedder returned {embeddings.shape[0]} vectors for "
            f"{len(units)} sentences of document {doc.doc_id}"
        )

    spans = []
    chunk_start, chunk_end = units[0]
    n_sentences = 1
    accumulated = embeddings[0].copy()
    for i in range(1, len(units)):
        start, end = units[i]
        if end - chunk_start > max_chars:
            boundary = True
        else:
            norm = np.linalg.norm(accumulated)
            centroid = accumulated / norm if norm > 0 else accumulated
            similarity = float(np.dot(centroid, embeddings[i]))
            boundary = (
                similarity < similarity_threshold
                and n_sentences >= min_sentences
            )
        if boundary:
            spans.append((chunk_start, chunk_end))
            chunk_start, chunk_end = start, end
            n_sentences = 1
            accumulated = embeddings[i].copy()
        else:
            chunk_end = end
            n_sentences += 1
            accumulated += embeddings[i]
    spans.append((chunk_start, chunk_end))
    logging.debug(
        f"Document {doc.doc_id}: {len(units)} sentences in {len(spans)} "
        f"semantic chunks"
    )
    return _spans_to_chunks(doc, spans, strategy)


def validate_chunks(
    chunks: Sequence[Chunk],
    doc: CleanDocument,
    max_chars: Optional[int] = None,
) -> ChunkValidationReport:
    """
    Check that chunks are a well formed segmentation of doc.
    Args:
        chunks (Sequence[Chunk]): Chunks produced from doc.
        doc (CleanDocument): Source document.
        max_chars (Optional[int]): Checked when given.

    Returns:
        ChunkValidationReport: Fails with the first violation found, one of
        "empty", "unsorted", "overlap", "oversize", "text_mismatch",
        "coverage".
    """
    previous_end = 0
    covered = np.zeros(len(doc.text), dtype=bool)
    for position, chunk in enumerate(chunks):
        start, end = chunk.span
        if not chunk.text:
            return ChunkValidationReport(
                False, "empty", f"{chunk.chunk_id} has no text"
            )
        if (
            chunk.seq != position
            or start >= end
            or start < 0
            or end > len(doc.text)
        ):
            return ChunkValidationReport(
                False,
                "unsorted",
                f"{chunk.chunk_id} at position {position} has seq "
                f"{chunk.seq} and span {chunk.span}",
            )
        if start < previous_end:
            return ChunkValidationReport(
                False,
                "overlap",
                f"{chunk.chunk_id} starts at {start} before the previous "
                f"chunk ends at {previous_end}",
            )
        if max_chars is not None and end - start > max_chars:
            return ChunkValidationReport(
                False,
                "oversize",
                f"{chunk.chunk_id} is {end - start} chars, limit {max_chars}",
            )
        if chunk.text.strip() != doc.text[start:end].strip():
            return ChunkValidationReport(
                False,
                "text_mismatch",
                f"{chunk.chunk_id} text differs from the document at "
                f"{chunk.span}",
            )
        covered[start:end] = True
        previous_end = end
    for position, character in enumerate(doc.text):
        if not covered[position] and not character.isspace():
            return ChunkValidationReport(
                False,
                "coverage",
                f"Character {position} of {doc.doc_id} is not in any chunk",
            )
    return ChunkValidationReport(True)
