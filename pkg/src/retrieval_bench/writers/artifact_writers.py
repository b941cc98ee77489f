"""Module for writing stage artifacts to the output directory."""
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

from retrieval_bench.transformations.chunkers import Chunk
from retrieval_bench.transformations.question_generators import (
    QueryChunkPair,
)
from retrieval_bench.transformations.text_normalizers import CleanDocument


class ArtifactWriters:
    """This class contains the methods to write stage artifacts. Every file
    is utf-8 with LF line endings, so identical inputs give identical
    bytes."""

    @staticmethod
    def write_jsonl(file_path: Path, records: Iterable[dict]) -> Path:
        """
        One json object per line.
        Args:
            file_path (Path): Destination.
            records (Iterable[dict]): Objects in output order.

        Returns:
            Path: file_path.
        """
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            for record in records:
                f.write(json.dumps(record, ensure_ascii=False))
                f.write("\n")
                count += 1
        logging.debug(f"Wrote {count} records to {file_path}")
        return file_path

    @staticmethod
    def write_documents(
        file_path: Path, documents: Sequence[CleanDocument]
    ) -> Path:
        """documents.jsonl: doc_id, text, redaction_count"""
        return ArtifactWriters.write_jsonl(
            file_path, (asdict(doc) for doc in documents)
        )

    @staticmethod
    def write_chunks(file_path: Path, chunks: Sequence[Chunk]) -> Path:
        """chunks.jsonl: chunk_id, doc_id, seq, text, span_start, span_end,
        strategy"""
        return ArtifactWriters.write_jsonl(
            file_path, (asdict(chunk) for chunk in chunks)
        )

    @staticmethod
    def write_pairs(
        file_path: Path, pairs: Sequence[QueryChunkPair]
    ) -> Path:
        """pairs.jsonl: query_id, chunk_id, query_text, generator, filtered,
        filter_reason"""
        return ArtifactWriters.write_jsonl(
            file_path, (asdict(pair) for pair in pairs)
        )
