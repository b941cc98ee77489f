"""Runs every retained query through the retrieval pipeline and aggregates
the metrics into an EvalReport."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from retrieval_bench.evaluation.metrics import (
    PerQueryResult,
    metrics_at_k,
    rank_of_truth,
)
from retrieval_bench.index.base import BuiltIndex, SearchHit
from retrieval_bench.transformations.embedders import Embedder
from retrieval_bench.transformations.question_generators import (
    QueryChunkPair,
)
from retrieval_bench.transformations.rerankers import (
    IdentityReranker,
    Reranker,
)
from retrieval_bench.util.http_utils import ProviderError

# More excluded queries than this marks the run failed
MAX_EXCLUDED_SHARE = 0.01


class ReportLabels(BaseModel):
    """Row labels of the report table"""

    model: str
    index: str
    chunking: str
    reranker: str


class DatasetCounts(BaseModel):
    """Question counts after filtering and overrides"""

    generated: int = 0
    filtered: int = 0
    retained: int = 0


class EvalReport(BaseModel):
    """Aggregated metrics of one run plus everything needed to reproduce
    it. timing is the only field that differs between identical runs."""

    k_values: List[int]
    acc_at_k: Dict[int, float]
    ndcg_at_k: Dict[int, float]
    n_queries: int
    n_excluded: int = 0
    excluded_queries: List[str] = []
    failed: bool = False
    labels: ReportLabels
    dataset_summary: DatasetCounts = DatasetCounts()
    config_snapshot: Dict[str, Any] = {}
    timing: Dict[str, float] = Field(default_factory=dict)

    def invariant_violations(self) -> List[str]:
        """Empty when 0 <= ndcg <= acc <= 1 for every k and both maps are
        non-decreasing in k."""
        problems = []
        previous_acc, previous_ndcg = 0.0, 0.0
        for k in self.k_values:
            acc, ndcg = self.acc_at_k[k], self.ndcg_at_k[k]
            if not 0.0 <= ndcg <= acc <= 1.0:
                problems.append(f"k={k}: ndcg {ndcg} / acc {acc} out of order")
            if acc < previous_acc or ndcg < previous_ndcg:
                problems.append(f"k={k}: metrics decrease with k")
            previous_acc, previous_ndcg = acc, ndcg
        return problems


@dataclass
class RetrievalPipeline:
    """Embed a query, search the index and rerank the leading hits.

    depth is how many hits are kept for ranking; rerank_top_n hits are
    fetched when that is larger so the reranker sees its full window.
    """

    embedder: Embedder
    index: BuiltIndex
    texts: Dict[str, str]
    depth: int
    reranker: Reranker = field(default_factory=IdentityReranker)
    rerank_top_n: int = 10
    chunking_label: str = ""

    def labels(self) -> ReportLabels:
        """Table labels for this pipeline"""
        return ReportLabels(
            model=self.embedder.label,
            index=self.index.label,
            chunking=self.chunking_label,
            reranker=self.reranker.label,
        )

    def embed_queries(
        self, query_texts: Sequence[str]
    ) -> List[Optional[np.ndarray]]:
        """
        One vector per query, None where the embedder failed. Tries one
        bulk call first and falls back to single queries to isolate
        failures.
        """
        if not query_texts:
            return []
        try:
            return list(self.embedder.embed_batch(list(query_texts)))
        except ProviderError as e:
            logging.warning(
                f"Bulk query embedding failed, retrying one by one: {e}"
            )
        vectors: List[Optional[np.ndarray]] = []
        for text in query_texts:
            try:
                vectors.append(self.embedder.embed_batch([text])[0])
            except ProviderError as e:
                logging.warning(f"Query {text!r} could not be embedded: {e}")
                vectors.append(None)
        return vectors

    def retrieve(
        self, query_text: str, vector: np.ndarray
    ) -> List[SearchHit]:
        """Ranked hits for an embedded query"""
        if self.index.count == 0:
            return []
        hits = self.index.search(vector, max(self.depth, self.rerank_top_n))
        reranked = self.reranker.rerank_top_n(
            query_text, hits, self.texts, self.rerank_top_n
        )
        return reranked[: self.depth]


def _evaluate_query(
    pipeline: RetrievalPipeline,
    pair: QueryChunkPair,
    vector: Optional[np.ndarray],
) -> Tuple[PerQueryResult, bool]:
    """Result for one query and whether it was evaluated"""
    if vector is None:
        return PerQueryResult(pair.query_id, pair.chunk_id), False
    try:
        hits = pipeline.retrieve(pair.query_text, vector)
    except ProviderError as e:
        logging.warning(f"Query {pair.query_id} excluded: {e}")
        return PerQueryResult(pair.query_id, pair.chunk_id), False
    return (
        PerQueryResult(
            query_id=pair.query_id,
            gt_chunk_id=pair.chunk_id,
            rank_of_truth=rank_of_truth(hits, pair.chunk_id),
        ),
        True,
    )


def evaluate_run(
    pipeline: RetrievalPipeline,
    dataset: Sequence[QueryChunkPair],
    k_values: Sequence[int],
    workers: int = 1,
    config_snapshot: Optional[Dict[str, Any]] = None,
    dataset_summary: Optional[DatasetCounts] = None,
) -> EvalReport:
    """
    Evaluate every query of the dataset.
    Args:
        pipeline (RetrievalPipeline): Configured retrieval.
        dataset (Sequence[QueryChunkPair]): Retained pairs only.
        k_values (Sequence[int]): Cutoffs.
        workers (int): Queries searched concurrently. Aggregates don't
          depend on it.
        config_snapshot (Optional[Dict[str, Any]]): Stored in the report.
        dataset_summary (Optional[DatasetCounts]): Stored in the report.

    Returns:
        EvalReport: Queries that failed at a provider are excluded and
        counted. The report is marked failed when more than 1% of them were
        excluded.
    """
    if len(dataset) == 0:
        raise ValueError("Can't evaluate an empty dataset")
    if any(pair.filtered for pair in dataset):
        raise ValueError("Filtered pairs can't be evaluated")
    k_values = sorted(set(k_values))
    vectors = pipeline.embed_queries([pair.query_text for pair in dataset])
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        outcomes = list(
            executor.map(
                lambda args: _evaluate_query(pipeline, *args),
                zip(dataset, vectors),
            )
        )
    evaluated = [result for result, ok in outcomes if ok]
    excluded = [result.query_id for result, ok in outcomes if not ok]
    failed = len(excluded) > MAX_EXCLUDED_SHARE * len(dataset)
    if evaluated:
        metrics = metrics_at_k(evaluated, k_values)
    else:
        metrics = {
            "acc_at_k": {k: 0.0 for k in k_values},
            "ndcg_at_k": {k: 0.0 for k in k_values},
        }
    if failed:
        logging.error(
            f"{len(excluded)} of {len(dataset)} queries were excluded; the "
            f"run is marked failed"
        )
    return EvalReport(
        k_values=k_values,
        acc_at_k=metrics["acc_at_k"],
        ndcg_at_k=metrics["ndcg_at_k"],
        n_queries=len(evaluated),
        n_excluded=len(excluded),
        excluded_queries=excluded,
        failed=failed,
        labels=pipeline.labels(),
        dataset_summary=dataset_summary or DatasetCounts(),
        config_snapshot=config_snapshot or {},
    )
