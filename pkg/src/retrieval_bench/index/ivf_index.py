"""Inverted file index: spherical k-means cells scanned exhaustively at query
time."""

import logging
from typing import List, Optional, Sequence

import numpy as np

from retrieval_bench.config_loader.run_configuration import IvfFlatIndexKind
from retrieval_bench.index.base import (
    BuiltIndex,
    SearchHit,
    inner_products,
    validate_build_input,
)
from retrieval_bench.util.seed_utils import SEED_MASK

KMEANS_MAX_ITERATIONS = 20
KMEANS_TOLERANCE = 1e-4
# Desk-scale corpora can't fill nlist=1024 cells; keep about 8 per cell
MIN_VECTORS_PER_LIST = 8


def effective_nlist(nlist: int, count: int) -> int:
    """min(nlist, max(1, count // 8)), or 0 for an empty index"""
    if count == 0:
        return 0
    return min(nlist, max(1, count // MIN_VECTORS_PER_LIST))


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Unit rows; zero rows are left alone"""
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=matrix.copy(), where=norms > 0)


def kmeans_plus_plus(
    matrix: np.ndarray, n_clusters: int, rng: np.random.Generator
) -> np.ndarray:
    """
    k-means++ seeding on unit vectors, using squared euclidean distance
    2 - 2 * inner product.
    Args:
        matrix (np.ndarray): float64 unit rows.
        n_clusters (int): Number of centroids to pick.
        rng (np.random.Generator): Seeded generator.

    Returns:
        np.ndarray: float64 matrix of shape (n_clusters, dim).
    """
    count = matrix.shape[0]
    chosen = [int(rng.integers(count))]
    closest = np.maximum(0.0, 2.0 - 2.0 * (matrix @ matrix[chosen[0]]))
    for _ in range(1, n_clusters):
        total = closest.sum()
        if total > 0:
            pick = int(rng.choice(count, p=closest / total))
        else:
            # Every vector sits on a centroid already
            pick = int(rng.integers(count))
        chosen.append(pick)
        distances = np.maximum(0.0, 2.0 - 2.0 * (matrix @ matrix[pick]))
        np.minimum(closest, distances, out=closest)
    return matrix[chosen].copy()


def spherical_kmeans(
    matrix: np.ndarray, n_clusters: int, seed: int
) -> np.ndarray:
    """
    Lloyd iterations with centroids renormalized to the unit sphere. Stops
    after KMEANS_MAX_ITERATIONS or when no centroid moves more than
    KMEANS_TOLERANCE. A centroid that loses all its vectors keeps its
    previous position.
    Args:
        matrix (np.ndarray): float64 unit rows.
        n_clusters (int): Number of centroids.
        seed (int): Seed for the k-means++ initialization.

    Returns:
        np.ndarray: float32 unit centroids.
    """
    rng = np.random.default_rng(seed & SEED_MASK)
    centroids = kmeans_plus_plus(matrix, n_clusters, rng)
    for iteration in range(KMEANS_MAX_ITERATIONS):
        assignment = np.argmax(matrix @ centroids.T, axis=1)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignment, matrix)
        members = np.bincount(assignment, minlength=n_clusters)
        updated = centroids.copy()
        filled = members > 0
        updated[filled] = _normalize_rows(sums[filled])
        movement = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if movement < KMEANS_TOLERANCE:
            logging.debug(f"k-means converged after {iteration + 1} rounds")
            break
    return centroids.astype(np.float32)


class IvfFlatIndex(BuiltIndex):
    """Vectors partitioned into k-means cells. A query scans the nprobe cells
    whose centroids are most similar to it."""

    KIND_CODE = 2

    def __init__(
        self,
        kind: IvfFlatIndexKind,
        vectors: np.ndarray,
        ids: Sequence[str],
        centroids: np.ndarray,
        posting_lists: List[np.ndarray],
        seed: int,
    ) -> None:
        """
        Parameters
        ----------
        kind : IvfFlatIndexKind
          nlist and nprobe.
        vectors : np.ndarray
          float32 matrix, already validated.
        ids : Sequence[str]
          Chunk ids in row order.
        centroids : np.ndarray
          float32 matrix, one row per cell.
        posting_lists : List[np.ndarray]
          Rows assigned to each cell, ascending.
        seed : int
          Seed of the k-means initialization.
        """
        super().__init__(kind, vectors, ids)
        self.centroids = centroids
        self.posting_lists = posting_lists
        self.seed = seed
        self._centroid_matrix = centroids.astype(np.float64)

    @property
    def effective_nlist(self) -> int:
        """Number of cells actually built"""
        return int(self.centroids.shape[0])

    @property
    def effective_nprobe(self) -> int:
        """nprobe clamped to the number of cells"""
        return min(self.kind.nprobe, self.effective_nlist)

    @property
    def label(self) -> str:
        """Index name shown in report tables"""
        return "IVF-Flat"

    def describe(self) -> dict:
        """Build facts recorded in the report's config snapshot"""
        facts = super().describe()
        facts.update(
            {
                "nlist": self.kind.nlist,
                "nprobe": self.kind.nprobe,
                "effective_nlist": self.effective_nlist,
                "effective_nprobe": self.effective_nprobe,
                "training": "full corpus",
                "seed": self.seed,
            }
        )
        return facts

    @classmethod
    def build(
        cls,
        vectors,
        ids: Sequence[str],
        kind: Optional[IvfFlatIndexKind] = None,
        seed: int = 0,
    ) -> "IvfFlatIndex":
        """
        Train centroids on every vector and fill the posting lists.
        Parameters
        ----------
        vectors
          Unit vectors, one per id.
        ids : Sequence[str]
          Unique chunk ids.
        kind : Optional[IvfFlatIndexKind]
          Defaults to IvfFlatIndexKind() (nlist=1024, nprobe=8).
        seed : int
          Seed of the k-means initialization. Defaults to 0.

        Returns
        -------
        IvfFlatIndex
        """
        kind = kind or IvfFlatIndexKind()
        matrix = validate_build_input(vectors, ids)
        n_lists = effective_nlist(kind.nlist, len(ids))
        if n_lists == 0:
            return cls(
                kind,
                matrix,
                ids,
                np.empty((0, matrix.shape[1]), dtype=np.float32),
                [],
                seed,
            )
        if n_lists < kind.nlist:
            logging.info(
                f"Clamped nlist from {kind.nlist} to {n_lists} for "
                f"{len(ids)} vectors"
            )
        matrix64 = matrix.astype(np.float64)
        centroids = spherical_kmeans(matrix64, n_lists, seed)
        assignment = np.argmax(
            matrix64 @ centroids.astype(np.float64).T, axis=1
        )
        posting_lists = [
            np.flatnonzero(assignment == cell).astype(np.int64)
            for cell in range(n_lists)
        ]
        return cls(kind, matrix, ids, centroids, posting_lists, seed)

    def search(
        self, query: np.ndarray, k: int, nprobe: Optional[int] = None
    ) -> List[SearchHit]:
        """
        Scan the cells nearest to the query. When those cells hold fewer
        than min(k, count) vectors, the next nearest cells are scanned too.
        Parameters
        ----------
        query : np.ndarray
          Unit vector of the index dimension.
        k : int
          Number of hits.
        nprobe : Optional[int]
          Overrides kind.nprobe for this query. Clamped to the number of
          cells.

        Returns
        -------
        List[SearchHit]
        """
        vector = self._check_query(query, k)
        if self.count == 0:
            return []
        nprobe = self.kind.nprobe if nprobe is None else nprobe
        if nprobe < 1:
            raise ValueError(f"nprobe must be positive, got {nprobe}")
        nprobe = min(nprobe, self.effective_nlist)
        centroid_scores = inner_products(self._centroid_matrix, vector)
        cell_order = np.lexsort(
            (np.arange(self.effective_nlist), -centroid_scores)
        )
        needed = min(k, self.count)
        scanned = []
        n_candidates = 0
        for position, cell in enumerate(cell_order):
            if position >= nprobe and n_candidates >= needed:
                break
            scanned.append(self.posting_lists[cell])
            n_candidates += len(self.posting_lists[cell])
        rows = np.concatenate(scanned)
        scores = inner_products(self._matrix[rows], vector)
        return self._rank_hits(rows, scores, k)
