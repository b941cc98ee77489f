"""Hierarchical navigable small world graph over unit vectors, scored by
inner product."""

import heapq
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from retrieval_bench.config_loader.run_configuration import HnswIndexKind
from retrieval_bench.index.base import (
    BuiltIndex,
    SearchHit,
    inner_products,
    validate_build_input,
)
from retrieval_bench.util.seed_utils import SEED_MASK

LOGGER = logging.getLogger(__name__)
LOGGER.setLevel(logging.INFO)

# (similarity, node)
Scored = Tuple[float, int]


def draw_level(seed: int, node: int, m: int) -> int:
    """
    Level of a node, floor(-ln(U) * mL) with mL = 1 / ln(M). U comes from a
    generator seeded by (seed, node), so levels don't depend on insertion
    history.
    Args:
        seed (int): Build seed.
        node (int): Insertion index.
        m (int): Max neighbors per node on upper layers.

    Returns:
        int: Top layer of the node.
    """
    rng = np.random.default_rng([seed & SEED_MASK, node])
    # 1 - U lies in (0, 1], so the log is finite
    return int(math.floor(-math.log(1.0 - rng.random()) / math.log(m)))


class HnswIndex(BuiltIndex):
    """Layered proximity graph. Layer 0 holds every node with up to 2*M
    neighbors, upper layers hold exponentially fewer nodes with up to M."""

    KIND_CODE = 1

    def __init__(
        self,
        kind: HnswIndexKind,
        vectors: np.ndarray,
        ids: Sequence[str],
        levels: Sequence[int],
        graphs: List[Dict[int, List[int]]],
        entry_point: int,
        seed: int,
    ) -> None:
        """
        Parameters
        ----------
        kind : HnswIndexKind
          Graph parameters.
        vectors : np.ndarray
          float32 matrix, already validated.
        ids : Sequence[str]
          Chunk ids in row order.
        levels : Sequence[int]
          Top layer of each node.
        graphs : List[Dict[int, List[int]]]
          Per layer, the adjacency list of every node on that layer.
        entry_point : int
          Node on the top layer where searches start. -1 when empty.
        seed : int
          Seed the levels were drawn from.
        """
        super().__init__(kind, vectors, ids)
        self.levels = list(levels)
        self.graphs = graphs
        self.entry_point = entry_point
        self.seed = seed

    @property
    def max_level(self) -> int:
        """Top layer of the graph, -1 when empty"""
        return len(self.graphs) - 1

    @property
    def label(self) -> str:
        """Index name shown in report tables"""
        return "HNSW"

    def describe(self) -> dict:
        """Build facts recorded in the report's config snapshot"""
        facts = super().describe()
        facts.update(
            {
                "m": self.kind.m,
                "ef_construction": self.kind.ef_construction,
                "ef_search": self.kind.ef_search,
                "max_level": self.max_level,
                "seed": self.seed,
            }
        )
        return facts

    @classmethod
    def build(
        cls,
        vectors,
        ids: Sequence[str],
        kind: Optional[HnswIndexKind] = None,
        seed: int = 0,
    ) -> "HnswIndex":
        """
        Insert the vectors one at a time, in row order.
        Parameters
        ----------
        vectors
          Unit vectors, one per id.
        ids : Sequence[str]
          Unique chunk ids.
        kind : Optional[HnswIndexKind]
          Defaults to HnswIndexKind() (M=32, ef_construction=128,
          ef_search=128).
        seed : int
          Seed for the level draws. Defaults to 0.

        Returns
        -------
        HnswIndex
        """
        kind = kind or HnswIndexKind()
        matrix = validate_build_input(vectors, ids)
        levels = [draw_level(seed, node, kind.m) for node in range(len(ids))]
        index = cls(kind, matrix, ids, levels, [], -1, seed)
        for node, level in enumerate(levels):
            index._insert(node, level)
        LOGGER.debug(
            f"Built HNSW over {index.count} vectors with "
            f"{index.max_level + 1} layers"
        )
        return index

    def _similarity(self, node: int, query: np.ndarray) -> float:
        """Inner product of one node with the query"""
        return float(inner_products(self._matrix[node : node + 1], query)[0])

    def _search_layer(
        self,
        query: np.ndarray,
        entries: List[Scored],
        layer: int,
        ef: int,
    ) -> List[Scored]:
        """
        Best-first search on one layer, keeping the ef most similar nodes.
        Returns (similarity, node) pairs, most similar first, ties by node.
        """
        graph = self.graphs[layer]
        visited = {node for _, node in entries}
        # Max-heap on similarity via negation
        candidates = [(-sim, node) for sim, node in entries]
        heapq.heapify(candidates)
        # Min-heap, the root is the worst result kept
        results = list(entries)
        heapq.heapify(results)
        while len(results) > ef:
            heapq.heappop(results)
        while candidates:
            neg_sim, current = heapq.heappop(candidates)
            if len(results) >= ef and -neg_sim < results[0][0]:
                break
            neighbors = [n for n in graph[current] if n not in visited]
            if not neighbors:
                continue
            visited.update(neighbors)
            sims = inner_products(self._matrix[neighbors], query).tolist()
            for neighbor, sim in zip(neighbors, sims):
                if len(results) < ef or sim > results[0][0]:
                    heapq.heappush(candidates, (-sim, neighbor))
                    heapq.heappush(results, (sim, neighbor))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted(results, key=lambda item: (-item[0], item[1]))

    def _select_neighbors(
        self, ranked: List[Scored], max_size: int
    ) -> List[int]:
        """
        Pruning heuristic: walk candidates from most to least similar to the
        base node and keep one only if it is not more similar to an already
        kept neighbor than to the base node.
        """
        if len(ranked) <= max_size:
            return [node for _, node in ranked]
        nodes = [node for _, node in ranked]
        rows = self._matrix[nodes]
        gram = (rows @ rows.T).tolist()
        selected: List[int] = []
        for position, (sim, _) in enumerate(ranked):
            if len(selected) >= max_size:
                break
            row = gram[position]
            if any(row[kept] > sim for kept in selected):
                continue
            selected.append(position)
        return [nodes[position] for position in selected]

    def _insert(self, node: int, level: int) -> None:
        """Link one node into every layer up to its level"""
        if self.entry_point == -1:
            self.graphs.extend({node: []} for _ in range(level + 1))
            self.entry_point = node
            return
        query = self._matrix[node]
        top = self.max_level
        start = self.entry_point
        entries = [(self._similarity(start, query), start)]
        for layer in range(top, level, -1):
            entries = self._search_layer(query, entries, layer, 1)[:1]
        for layer in range(min(level, top), -1, -1):
            found = self._search_layer(
                query, entries, layer, self.kind.ef_construction
            )
            neighbors = self._select_neighbors(found, self.kind.m)
            graph = self.graphs[layer]
            graph[node] = neighbors
            cap = 2 * self.kind.m if layer == 0 else self.kind.m
            for neighbor in neighbors:
                links = graph[neighbor]
                if len(links) < cap:
                    links.append(node)
                    continue
                pool = links + [node]
                sims = inner_products(
                    self._matrix[pool], self._matrix[neighbor]
                ).tolist()
                ranked = sorted(
                    zip(sims, pool), key=lambda item: (-item[0], item[1])
                )
                graph[neighbor] = self._select_neighbors(ranked, cap)
            entries = found
        if level > top:
            self.graphs.extend({node: []} for _ in range(top + 1, level + 1))
            self.entry_point = node

    def search(
        self, query: np.ndarray, k: int, ef: Optional[int] = None
    ) -> List[SearchHit]:
        """
        Greedy descent to layer 0, then an ef-bounded best-first search.
        Parameters
        ----------
        query : np.ndarray
          Unit vector of the index dimension.
        k : int
          Number of hits.
        ef : Optional[int]
          Overrides kind.ef_search for this query. Must be >= k.

        Returns
        -------
        List[SearchHit]
          min(k, count) hits.
        """
        vector = self._check_query(query, k)
        ef = ef if ef is not None else self.kind.ef_search
        if ef < k:
            raise ValueError(f"ef_search ({ef}) must be >= k ({k})")
        if self.count == 0:
            return []
        start = self.entry_point
        entries = [(self._similarity(start, vector), start)]
        for layer in range(self.max_level, 0, -1):
            entries = self._search_layer(vector, entries, layer, 1)[:1]
        found = self._search_layer(vector, entries, 0, ef)
        rows = np.array([node for _, node in found], dtype=np.int64)
        needed = min(k, self.count)
        if len(rows) < needed:
            rows = self._fill_unreachable(vector, rows, needed)
        scores = inner_products(self._matrix[rows], vector)
        return self._rank_hits(rows, scores, k)

    def _fill_unreachable(
        self, query: np.ndarray, rows: np.ndarray, needed: int
    ) -> np.ndarray:
        """Pruning can leave nodes the search can't reach. Top up with the
        best of them so a search always returns min(k, count) hits."""
        missing = np.setdiff1d(np.arange(self.count), rows)
        scores = inner_products(self._matrix[missing], query)
        order = np.lexsort((self._id_rank[missing], -scores))
        extra = missing[order[: needed - len(rows)]]
        return np.concatenate([rows, extra])
