"""Second-stage rescoring of the first hits of a search."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Union

from retrieval_bench.config_loader.run_configuration import (
    ConfigurationError,
    LexicalOverlap,
    NoReranker,
    RemoteCrossEncoder,
)
from retrieval_bench.index.base import SearchHit
from retrieval_bench.readers.artifact_readers import DataIntegrityError
from retrieval_bench.util.http_utils import JsonServiceClient, ProviderError
from retrieval_bench.util.text_utils import content_tokens, tokenize


def lexical_score(query: str, passage: str) -> float:
    """
    Share of the query's distinct content tokens that also occur in the
    passage. Stopwords are ignored unless the query has nothing else, so
    lexical_score(q, q) is 1.0 for any non-empty q.
    Args:
        query (str)
        passage (str)

    Returns:
        float: Score in [0, 1], 0 when the query has no tokens.
    """
    query_tokens = set(content_tokens(query)) or set(tokenize(query))
    if not query_tokens:
        return 0.0
    passage_tokens = set(tokenize(passage))
    return len(query_tokens & passage_tokens) / len(query_tokens)


class Reranker(ABC):
    """Scores (query, passage) pairs; higher is more relevant."""

    @property
    @abstractmethod
    def label(self) -> str:
        """Reranker name shown in report tables"""

    @abstractmethod
    def score(self, query: str, passages: List[str]) -> List[float]:
        """One finite score per passage"""

    def rerank_top_n(
        self,
        query: str,
        hits: Sequence[SearchHit],
        texts: Dict[str, str],
        top_n: int = 10,
    ) -> List[SearchHit]:
        """
        Rescore the first top_n hits and reorder them by descending score,
        ties by ascending chunk_id. Later hits keep their order and scores and
        follow the reranked block. Ranks are renumbered from 1.
        Parameters
        ----------
        query : str
          Query text.
        hits : Sequence[SearchHit]
          Ranked first-stage hits.
        texts : Dict[str, str]
          chunk_id -> chunk text, must cover every hit.
        top_n : int
          How many leading hits to rescore. Defaults to 10.

        Returns
        -------
        List[SearchHit]
          The same chunk_ids, possibly reordered.

        Raises
        ------
        DataIntegrityError
          If a hit's text is missing.
        """
        if top_n < 1:
            raise ValueError(f"top_n must be positive, got {top_n}")
        missing = [hit.chunk_id for hit in hits if hit.chunk_id not in texts]
        if missing:
            raise DataIntegrityError(
                f"No text for chunks {missing[:5]} returned by the search"
            )
        head = list(hits[:top_n])
        tail = list(hits[top_n:])
        if not head:
            return []
        scores = self.score(query, [texts[hit.chunk_id] for hit in head])
        if len(scores) != len(head) or not all(
            math.isfinite(s) for s in scores
        ):
            raise ProviderError(
                f"{self.label} returned invalid scores for query {query!r}",
                failed_items=[query],
            )
        rescored = sorted(
            (replace(hit, score=float(s)) for hit, s in zip(head, scores)),
            key=lambda hit: (-hit.score, hit.chunk_id),
        )
        return [
            replace(hit, rank=rank)
            for rank, hit in enumerate(rescored + tail, start=1)
        ]


class IdentityReranker(Reranker):
    """Reranking disabled; hits pass through untouched."""

    @property
    def label(self) -> str:
        """Reranker name shown in report tables"""
        return "None"

    def score(self, query: str, passages: List[str]) -> List[float]:
        """Not used; kept so the class is a complete Reranker"""
        return [0.0] * len(passages)

    def rerank_top_n(
        self,
        query: str,
        hits: Sequence[SearchHit],
        texts: Dict[str, str],
        top_n: int = 10,
    ) -> List[SearchHit]:
        """Returns hits unchanged"""
        return list(hits)


class LexicalOverlapReranker(Reranker):
    """Deterministic stand-in for a cross-encoder."""

    @property
    def label(self) -> str:
        """Reranker name shown in report tables"""
        return "Lexical overlap"

    def score(self, query: str, passages: List[str]) -> List[float]:
        """lexical_score for every passage"""
        return [lexical_score(query, passage) for passage in passages]


class RemoteCrossEncoderReranker(Reranker):
    """Client for a reranking service speaking
    {"model", "query", "documents"} -> {"scores"}, one request per query."""

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        timeout_ms: int = 30000,
        api_token: Optional[str] = None,
    ) -> None:
        """
        Parameters
        ----------
        endpoint : str
          Url the requests are posted to.
        model_name : str
          Sent as "model" and shown in reports.
        timeout_ms : int
          Per request timeout. Defaults to 30000.
        api_token : Optional[str]
          Bearer token, if the service needs one.
        """
        self.model_name = model_name
        self._client = JsonServiceClient(
            endpoint=endpoint, timeout_ms=timeout_ms, api_token=api_token
        )

    @property
    def label(self) -> str:
        """Reranker name shown in report tables"""
        return self.model_name

    def score(self, query: str, passages: List[str]) -> List[float]:
        """Scores aligned with passages by position"""
        try:
            response = self._client.post_json(
                {
                    "model": self.model_name,
                    "query": query,
                    "documents": passages,
                }
            )
        except ProviderError as e:
            logging.warning(f"Reranking failed for query {query!r}: {e}")
            raise ProviderError(
                f"Reranking failed for query {query!r}: {e}",
                failed_items=[query],
            ) from e
        scores = response.get("scores") if isinstance(response, dict) else None
        if not isinstance(scores, list):
            raise ProviderError(
                f"Malformed rerank response for query {query!r}",
                failed_items=[query],
            )
        return [float(s) for s in scores]


def create_reranker(
    config: Union[NoReranker, RemoteCrossEncoder, LexicalOverlap],
    api_token: Optional[str] = None,
) -> Reranker:
    """
    Build the reranker a configuration describes.
    Args:
        config: Reranker configuration.
        api_token (Optional[str]): Bearer token for remote services.

    Returns:
        Reranker
    """
    if isinstance(config, LexicalOverlap):
        return LexicalOverlapReranker()
    if isinstance(config, RemoteCrossEncoder):
        if not config.endpoint:
            raise ConfigurationError(
                f"No endpoint configured for reranker {config.model_name}"
            )
        return RemoteCrossEncoderReranker(
            endpoint=config.endpoint,
            model_name=config.model_name,
            timeout_ms=config.timeout_ms,
            api_token=api_token,
        )
    return IdentityReranker()


def rerank_top_n(
    kind: Union[NoReranker, RemoteCrossEncoder, LexicalOverlap],
    query: str,
    hits: Sequence[SearchHit],
    texts: Dict[str, str],
    top_n: int = 10,
) -> List[SearchHit]:
    """One-shot convenience: build the reranker and rerank hits."""
    return create_reranker(kind).rerank_top_n(query, hits, texts, top_n)
