"""Module for loading raw transcript documents from a corpus directory."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

LOGGER = logging.getLogger(__name__)
LOGGER.setLevel(logging.INFO)


@dataclass(frozen=True)
class RawDocument:
    """A transcript as read from disk. doc_id is the posix path relative to
    the corpus directory."""

    doc_id: str
    source_path: str
    text: str
    metadata: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class FileError:
    """A file that was skipped while loading."""

    source_path: str
    reason: str


class TranscriptReader:
    """Loads every allow-listed text file under a corpus directory."""

    DEFAULT_EXTENSIONS = (".txt",)

    def __init__(
        self,
        include_exts: Optional[Iterable[str]] = None,
        max_workers: int = 1,
    ) -> None:
        """
        Constructor for TranscriptReader.
        Parameters
        ----------
        include_exts : Optional[Iterable[str]]
          File extensions to load, compared case-insensitively. Defaults to
          DEFAULT_EXTENSIONS.
        max_workers : int
          Number of threads used to read files. Output order does not depend
          on it.
        """
        exts = include_exts or self.DEFAULT_EXTENSIONS
        self.include_exts = tuple(
            (e if e.startswith(".") else "." + e).lower() for e in exts
        )
        self.max_workers = max(1, max_workers)
        self.errors: List[FileError] = []

    def _list_files(self, corpus_dir: Path) -> List[Tuple[str, Path]]:
        """(doc_id, path) pairs sorted by doc_id"""
        files = [
            (p.relative_to(corpus_dir).as_posix(), p)
            for p in corpus_dir.rglob("*")
            if p.is_file() and p.suffix.lower() in self.include_exts
        ]
        return sorted(files, key=lambda item: item[0])

    @staticmethod
    def _read_one(doc_id: str, path: Path):
        """Returns a RawDocument or a FileError"""
        try:
            raw_bytes = path.read_bytes()
        except OSError as e:
            return FileError(source_path=str(path), reason=f"unreadable: {e}")
        try:
            text = raw_bytes.decode("utf-8")
        except UnicodeDecodeError as e:
            return FileError(
                source_path=str(path), reason=f"not valid utf-8: {e.reason}"
            )
        metadata = {
            "file_name": path.name,
            "extension": path.suffix.lower(),
            "size_bytes": str(len(raw_bytes)),
        }
        return RawDocument(
            doc_id=doc_id,
            source_path=str(path),
            text=text,
            metadata=metadata,
        )

    def load_documents(self, dir_path: Path) -> List[RawDocument]:
        """
        Load the corpus. Files that cannot be decoded are skipped and
        recorded in self.errors.
        Parameters
        ----------
        dir_path : Path
          Corpus directory.

        Returns
        -------
        List[RawDocument]
          One document per file, in lexicographic doc_id order.

        Raises
        ------
        FileNotFoundError
          If dir_path does not exist.
        NotADirectoryError
          If dir_path is not a directory.
        """
        corpus_dir = Path(dir_path)
        if not corpus_dir.exists():
            raise FileNotFoundError(f"Corpus directory {corpus_dir} not found")
        if not corpus_dir.is_dir():
            raise NotADirectoryError(f"{corpus_dir} is not a directory")
        self.errors = []
        files = self._list_files(corpus_dir)
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            results = list(
                executor.map(lambda item: self._read_one(*item), files)
            )
        documents = []
        for result in results:
            if isinstance(result, FileError):
                LOGGER.warning(
                    f"Skipping {result.source_path}: {result.reason}"
                )
                self.errors.append(result)
            else:
                documents.append(result)
        LOGGER.info(
            f"Loaded {len(documents)} documents from {corpus_dir} "
            f"({len(self.errors)} skipped)"
        )
        return documents
