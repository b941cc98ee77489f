"""Exact inner product scan. The oracle every approximate index is measured
against."""

from typing import List, Sequence

import numpy as np

from retrieval_bench.config_loader.run_configuration import FlatExactIndexKind
from retrieval_bench.index.base import (
    BuiltIndex,
    SearchHit,
    inner_products,
    validate_build_input,
)


class FlatExactIndex(BuiltIndex):
    """Stores the matrix verbatim and scores every row on each query."""

    KIND_CODE = 0

    @classmethod
    def build(
        cls, vectors, ids: Sequence[str], kind: FlatExactIndexKind = None
    ) -> "FlatExactIndex":
        """
        Build an exact index.
        Parameters
        ----------
        vectors
          Unit vectors, one per id.
        ids : Sequence[str]
          Unique chunk ids.
        kind : FlatExactIndexKind
          Defaults to FlatExactIndexKind().

        Returns
        -------
        FlatExactIndex
        """
        matrix = validate_build_input(vectors, ids)
        return cls(kind or FlatExactIndexKind(), matrix, ids)

    @property
    def label(self) -> str:
        """Index name shown in report tables"""
        return "Flat"

    def search(
        self, query: np.ndarray, k: int, **overrides
    ) -> List[SearchHit]:
        """
        Exact top-k by inner product, ties broken by ascending chunk_id.
        Parameters
        ----------
        query : np.ndarray
          Unit vector of the index dimension.
        k : int
          Number of hits. Fewer are returned when the index is smaller.

        Returns
        -------
        List[SearchHit]
        """
        vector = self._check_query(query, k)
        if self.count == 0:
            return []
        scores = inner_products(self._matrix, vector)
        return self._rank_hits(np.arange(self.count), scores, k)
