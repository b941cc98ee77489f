"""Shared pieces of the vector indexes: the hit type, input validation and
the ranking rule every index uses."""

from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

UNIT_NORM_TOLERANCE = 1e-4


class IndexBuildError(ValueError):
    """Raised when vectors and ids can't be indexed together."""

    pass


@dataclass(frozen=True)
class SearchHit:
    """One ranked result. Higher score is better; rank is 1-based."""

    chunk_id: str
    score: float
    rank: int


def inner_products(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """
    Row-wise inner products. Each row is reduced by the same loop no matter
    how many rows are passed, so identical rows always get identical scores
    and every index agrees with the exact scan bit for bit.
    Args:
        matrix (np.ndarray): float64, shape (n, dim).
        query (np.ndarray): float64, shape (dim,).

    Returns:
        np.ndarray: float64, shape (n,).
    """
    return np.einsum("ij,j->i", matrix, query)


def validate_build_input(
    vectors, ids: Sequence[str], dim: Optional[int] = None
) -> np.ndarray:
    """
    Check vectors and ids before a build.
    Args:
        vectors: 2-D array or list of 1-D arrays, one per id.
        ids (Sequence[str]): Unique chunk ids.
        dim (Optional[int]): Dimension of an empty index.

    Returns:
        np.ndarray: float32 matrix of shape (len(ids), dim).

    Raises:
        IndexBuildError: On a count, dimension, uniqueness or norm problem.
    """
    if len(ids) == 0:
        if dim is None:
            shape = np.shape(vectors)
            dim = shape[1] if len(shape) == 2 else 0
        return np.empty((0, dim), dtype=np.float32)
    try:
        matrix = np.asarray(vectors, dtype=np.float32)
    except ValueError as e:
        raise IndexBuildError(f"Vectors have mixed dimensions: {e}") from e
    if matrix.ndim != 2:
        raise IndexBuildError(
            f"Expected one vector per id, got an array of shape {matrix.shape}"
        )
    if matrix.shape[0] != len(ids):
        raise IndexBuildError(
            f"{matrix.shape[0]} vectors but {len(ids)} ids were given"
        )
    if dim is not None and matrix.shape[1] != dim:
        raise IndexBuildError(
            f"Vectors are {matrix.shape[1]}-d but the index is {dim}-d"
        )
    if len(set(ids)) != len(ids):
        duplicates = sorted(i for i, n in Counter(ids).items() if n > 1)
        raise IndexBuildError(f"Duplicate ids: {duplicates[:5]}")
    if not np.all(np.isfinite(matrix)):
        raise IndexBuildError("Vectors contain non-finite values")
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE):
        raise IndexBuildError("All vectors must be unit-norm")
    return np.ascontiguousarray(matrix)


class BuiltIndex(ABC):
    """An immutable index over unit vectors. Safe for concurrent searches."""

    # Written into snapshots
    KIND_CODE = -1

    def __init__(self, kind, vectors: np.ndarray, ids: Sequence[str]):
        """
        Parameters
        ----------
        kind : IndexKind
          The configuration the index was built from.
        vectors : np.ndarray
          float32 matrix, already validated.
        ids : Sequence[str]
          Chunk ids in row order.
        """
        self.kind = kind
        self.vectors = vectors
        self.ids = list(ids)
        self.dim = int(vectors.shape[1])
        self.count = int(vectors.shape[0])
        self._matrix = vectors.astype(np.float64)
        order = sorted(range(self.count), key=self.ids.__getitem__)
        self._id_rank = np.empty(self.count, dtype=np.int64)
        self._id_rank[order] = np.arange(self.count)

    @property
    @abstractmethod
    def label(self) -> str:
        """Index name shown in report tables"""

    @abstractmethod
    def search(
        self, query: np.ndarray, k: int, **overrides
    ) -> List[SearchHit]:
        """Top-k hits for a unit query vector"""

    def describe(self) -> dict:
        """Build facts recorded in the report's config snapshot"""
        return {"kind": self.kind.kind, "dim": self.dim, "count": self.count}

    def _check_query(self, query: np.ndarray, k: int) -> np.ndarray:
        """Query as a float64 vector. Raises ValueError on bad input."""
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        vector = np.asarray(query, dtype=np.float64).ravel()
        # An empty index built from lists has no known dimension
        if self.count and vector.shape[0] != self.dim:
            raise ValueError(
                f"Query is {vector.shape[0]}-d but the index is {self.dim}-d"
            )
        return vector

    def _rank_hits(
        self, rows: np.ndarray, scores: np.ndarray, k: int
    ) -> List[SearchHit]:
        """Order candidates by descending score, then ascending chunk_id,
        and keep the first k."""
        rows = np.asarray(rows, dtype=np.int64)
        order = np.lexsort((self._id_rank[rows], -scores))[:k]
        return [
            SearchHit(
                chunk_id=self.ids[rows[i]],
                score=float(scores[i]),
                rank=rank,
            )
            for rank, i in enumerate(order, start=1)
        ]
