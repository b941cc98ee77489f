"""Entry points for building, searching and measuring indexes."""

from typing import List, Sequence, Union

import numpy as np

from retrieval_bench.config_loader.run_configuration import (
    FlatExactIndexKind,
    HnswIndexKind,
    IvfFlatIndexKind,
)
from retrieval_bench.index.base import BuiltIndex, SearchHit
from retrieval_bench.index.flat_index import FlatExactIndex
from retrieval_bench.index.hnsw_index import HnswIndex
from retrieval_bench.index.ivf_index import IvfFlatIndex

IndexKindConfig = Union[FlatExactIndexKind, HnswIndexKind, IvfFlatIndexKind]


def build_index(
    vectors, ids: Sequence[str], kind: IndexKindConfig, seed: int = 0
) -> BuiltIndex:
    """
    Build the index a kind describes. Deterministic given seed.
    Args:
        vectors: Unit vectors, one per id.
        ids (Sequence[str]): Unique chunk ids.
        kind (IndexKindConfig): Which index, with its parameters.
        seed (int): Seed for HNSW levels and k-means initialization.

    Returns:
        BuiltIndex
    """
    if isinstance(kind, HnswIndexKind):
        return HnswIndex.build(vectors, ids, kind, seed)
    if isinstance(kind, IvfFlatIndexKind):
        return IvfFlatIndex.build(vectors, ids, kind, seed)
    return FlatExactIndex.build(vectors, ids, kind)


def search(
    index: BuiltIndex, query: np.ndarray, k: int, **overrides
) -> List[SearchHit]:
    """Top-k hits of a query against any built index. overrides are ef
    for HNSW and nprobe for IVF."""
    return index.search(query, k, **overrides)


def recall_vs_exact(
    index: BuiltIndex,
    oracle: FlatExactIndex,
    queries: Sequence[np.ndarray],
    k: int,
    **overrides,
) -> float:
    """
    Mean over queries of |approximate top-k & exact top-k| / k. When the
    index holds fewer than k vectors the denominator is the vector count.
    Args:
        index (BuiltIndex): Index under test.
        oracle (FlatExactIndex): Exact index over the same vectors and ids.
        queries (Sequence[np.ndarray]): Unit query vectors.
        k (int): Cutoff.
        **overrides: Passed to index.search, e.g. ef=64 or nprobe=2.

    Returns:
        float: Recall in [0, 1].

    Raises:
        ValueError: If the two indexes don't hold the same data.
    """
    if (
        index.ids != oracle.ids
        or index.vectors.shape != oracle.vectors.shape
        or not np.array_equal(index.vectors, oracle.vectors)
    ):
        raise ValueError("Index and oracle were built over different data")
    if len(queries) == 0:
        raise ValueError("recall needs at least one query")
    denominator = min(k, oracle.count)
    if denominator == 0:
        return 1.0
    total = 0.0
    for query in queries:
        approximate = {
            hit.chunk_id for hit in index.search(query, k, **overrides)
        }
        exact = {hit.chunk_id for hit in oracle.search(query, k)}
        total += len(approximate & exact) / denominator
    return total / len(queries)
