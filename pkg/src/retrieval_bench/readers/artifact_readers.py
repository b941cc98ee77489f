"""Module for reading the artifacts a stage leaves in the output
directory."""
import json
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List

from retrieval_bench.transformations.chunkers import Chunk
from retrieval_bench.transformations.question_generators import (
    QueryChunkPair,
)
from retrieval_bench.transformations.text_normalizers import CleanDocument


class DataIntegrityError(Exception):
    """Raised when an artifact is malformed or references a chunk that
    doesn't exist."""

    pass


class ArtifactFiles(Enum):
    """File names inside output_dir"""

    documents = "documents.jsonl"
    chunks = "chunks.jsonl"
    pairs = "pairs.jsonl"
    vectors = "vectors.bin"
    vector_ids = "vectors.ids"
    index = "index.rbi"
    report_json = "report.json"
    report_md = "report.md"
    report_csv = "report.csv"
    manifest = "manifest.json"


class ArtifactReaders:
    """This class contains the methods to load stage artifacts."""

    OVERRIDE_DECISIONS = ("keep", "drop")

    @staticmethod
    def read_jsonl(file_path: Path) -> Iterator[dict]:
        """
        Yield one object per non-blank line.
        Args:
            file_path (Path): A utf-8 jsonl file.

        Returns:
            Iterator[dict]

        Raises:
            DataIntegrityError: On a line that isn't a json object.
        """
        with open(file_path, encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise DataIntegrityError(
                        f"{file_path}:{line_number} is not valid json: {e}"
                    ) from e
                if not isinstance(record, dict):
                    raise DataIntegrityError(
                        f"{file_path}:{line_number} is not a json object"
                    )
                yield record

    @staticmethod
    def _build(cls, record: dict, file_path: Path):
        """Dataclass from a record, with a readable error"""
        try:
            return cls(**record)
        except TypeError as e:
            raise DataIntegrityError(
                f"{file_path} has a malformed {cls.__name__} record: {e}"
            ) from e

    @staticmethod
    def load_documents(file_path: Path) -> List[CleanDocument]:
        """Documents written by the ingest stage"""
        return [
            ArtifactReaders._build(CleanDocument, record, file_path)
            for record in ArtifactReaders.read_jsonl(file_path)
        ]

    @staticmethod
    def load_chunks(file_path: Path) -> List[Chunk]:
        """Chunks written by the chunk stage"""
        return [
            ArtifactReaders._build(Chunk, record, file_path)
            for record in ArtifactReaders.read_jsonl(file_path)
        ]

    @staticmethod
    def load_pairs(file_path: Path) -> List[QueryChunkPair]:
        """Query-chunk pairs written by the genqa stage"""
        return [
            ArtifactReaders._build(QueryChunkPair, record, file_path)
            for record in ArtifactReaders.read_jsonl(file_path)
        ]

    @staticmethod
    def load_overrides(file_path: Path) -> Dict[str, str]:
        """
        Manual review decisions.
        Args:
            file_path (Path): jsonl lines {"query_id": ..., "decision":
              "keep" | "drop"}. A later line wins over an earlier one.

        Returns:
            Dict[str, str]: query_id -> decision.
        """
        overrides = {}
        for record in ArtifactReaders.read_jsonl(file_path):
            query_id = record.get("query_id")
            decision = record.get("decision")
            if (
                not isinstance(query_id, str)
                or decision not in ArtifactReaders.OVERRIDE_DECISIONS
            ):
                raise DataIntegrityError(
                    f"Bad override in {file_path}: {record}"
                )
            overrides[query_id] = decision
        return overrides

    @staticmethod
    def check_pairs_reference_chunks(
        pairs: List[QueryChunkPair], chunks: List[Chunk]
    ) -> None:
        """Every pair has to point at a known chunk, one pair per chunk"""
        chunk_ids = {chunk.chunk_id for chunk in chunks}
        dangling = [p.chunk_id for p in pairs if p.chunk_id not in chunk_ids]
        if dangling:
            raise DataIntegrityError(
                f"Pairs reference unknown chunks: {dangling[:5]}"
            )
        if len({p.chunk_id for p in pairs}) != len(pairs):
            raise DataIntegrityError("More than one pair for a chunk")
