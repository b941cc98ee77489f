"""Top-K accuracy and NDCG@K for datasets with exactly one relevant chunk
per query."""

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from retrieval_bench.index.base import SearchHit


@dataclass(frozen=True)
class PerQueryResult:
    """Where the ground-truth chunk landed for one query. rank_of_truth is
    1-based and None when the chunk wasn't returned."""

    query_id: str
    gt_chunk_id: str
    rank_of_truth: Optional[int] = None


def rank_of_truth(
    hits: Sequence[SearchHit], gt_chunk_id: str
) -> Optional[int]:
    """Rank of the first hit carrying gt_chunk_id, None if absent"""
    for position, hit in enumerate(hits, start=1):
        if hit.chunk_id == gt_chunk_id:
            return position
    return None


def _ranks(results: Sequence[PerQueryResult]) -> np.ndarray:
    """Ranks as floats, absent ranks as inf"""
    if len(results) == 0:
        raise ValueError("Metrics are undefined for an empty result set")
    return np.array(
        [
            np.inf if r.rank_of_truth is None else float(r.rank_of_truth)
            for r in results
        ],
        dtype=np.float64,
    )


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")


def topk_accuracy(results: Sequence[PerQueryResult], k: int) -> float:
    """
    Share of queries whose ground-truth chunk ranks within the top k.
    Args:
        results (Sequence[PerQueryResult]): Non-empty.
        k (int): Cutoff.

    Returns:
        float: Accuracy in [0, 1].
    """
    _check_k(k)
    ranks = _ranks(results)
    return float(np.mean(ranks <= k))


def ndcg_at_k(results: Sequence[PerQueryResult], k: int) -> float:
    """
    Mean NDCG@k. With a single relevant item the ideal DCG is 1, so a query
    scores 1 / log2(rank + 1) when its chunk ranks within k and 0 otherwise.
    Args:
        results (Sequence[PerQueryResult]): Non-empty.
        k (int): Cutoff.

    Returns:
        float: NDCG in [0, 1], never above topk_accuracy at the same k.
    """
    _check_k(k)
    ranks = _ranks(results)
    gains = np.zeros_like(ranks)
    within = ranks <= k
    gains[within] = 1.0 / np.log2(ranks[within] + 1.0)
    return float(np.mean(gains))


def metrics_at_k(
    results: Sequence[PerQueryResult], k_values: Iterable[int]
) -> Dict[str, Dict[int, float]]:
    """Both metrics for every k, keyed "acc_at_k" and "ndcg_at_k"."""
    k_values = sorted(set(k_values))
    return {
        "acc_at_k": {k: topk_accuracy(results, k) for k in k_values},
        "ndcg_at_k": {k: ndcg_at_k(results, k) for k in k_values},
    }
