"""Embedding providers. Every vector handed downstream is L2-normalized
here, so indexes can treat inner product as cosine similarity."""

import hashlib
import logging
from abc import ABC, abstractmethod
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from retrieval_bench.config_loader.run_configuration import (
    ConfigurationError,
    HashProjectionConfig,
    RemoteEmbedderConfig,
)
from retrieval_bench.util.http_utils import JsonServiceClient, ProviderError
from retrieval_bench.util.seed_utils import SEED_MASK, derive_seed
from retrieval_bench.util.text_utils import content_tokens

EMBEDDER_SUB_SEED = "embedder.hash"


def l2_normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """
    Scale every row to unit length.
    Args:
        matrix (np.ndarray): 2-D array of finite values.

    Returns:
        np.ndarray: float32 array with unit rows.

    Raises:
        ValueError: If a row is all zeros or holds non-finite values.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("Embeddings contain non-finite values")
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("Can't normalize an all-zero embedding")
    return (matrix / norms).astype(np.float32)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """
    Cosine of two unit vectors, i.e. their inner product clamped to [-1, 1].
    Args:
        a (np.ndarray): Unit vector.
        b (np.ndarray): Unit vector of the same dimension.

    Returns:
        float
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"Dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


class Embedder(ABC):
    """Maps texts to unit vectors of a fixed dimension. Instances are
    immutable after construction and safe to share across threads."""

    def __init__(self, dim: int) -> None:
        """
        Parameters
        ----------
        dim : int
          Output dimension.
        """
        self.dim = dim

    @property
    @abstractmethod
    def label(self) -> str:
        """Model name shown in report tables"""

    @abstractmethod
    def _embed(self, texts: List[str]) -> np.ndarray:
        """Unnormalized embeddings, one row per text"""

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        """
        Embed texts in input order.
        Parameters
        ----------
        texts : Sequence[str]

        Returns
        -------
        np.ndarray
          float32 matrix of shape (len(texts), dim) with unit rows.
        """
        texts = list(texts)
        if not texts:
            return np.empty((0, self.dim), dtype=np.float32)
        return l2_normalize_rows(self._embed(texts))


class HashProjectionEmbedder(Embedder):
    """Seeded bag-of-words random projection. Every distinct non-stopword
    token gets a pseudorandom unit vector derived from hash(seed, token);
    a text's embedding is the term-frequency weighted sum. Word order is
    ignored."""

    def __init__(self, dim: int = 64, seed: int = 0) -> None:
        """
        Parameters
        ----------
        dim : int
          Output dimension. Defaults to 64.
        seed : int
          Seed mixed into every token hash. Defaults to 0.
        """
        super().__init__(dim)
        self.seed = seed
        self._token_vectors: Dict[str, np.ndarray] = {}

    @property
    def label(self) -> str:
        """Model name shown in report tables"""
        return f"hash-projection ({self.dim}-d)"

    def token_vector(self, token: str) -> np.ndarray:
        """Pseudorandom unit vector for a token. The empty token gives the
        fallback vector."""
        vector = self._token_vectors.get(token)
        if vector is None:
            key = f"{self.seed & SEED_MASK}:{token}".encode("utf-8")
            digest = hashlib.blake2b(key, digest_size=16).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vector = rng.standard_normal(self.dim)
            vector /= np.linalg.norm(vector)
            self._token_vectors[token] = vector
        return vector

    def hash_embed(self, text: str) -> np.ndarray:
        """
        Embed one text.
        Parameters
        ----------
        text : str

        Returns
        -------
        np.ndarray
          float64 unit vector.
        """
        counts = Counter(content_tokens(text))
        if not counts:
            return self.token_vector("").copy()
        total = np.zeros(self.dim, dtype=np.float64)
        # Sorted so the float sum doesn't depend on word order
        for token in sorted(counts):
            total += counts[token] * self.token_vector(token)
        norm = np.linalg.norm(total)
        if norm == 0:
            return self.token_vector("").copy()
        return total / norm

    def _embed(self, texts: List[str]) -> np.ndarray:
        """Rows are computed independently, so batching never changes
        them"""
        return np.vstack([self.hash_embed(text) for text in texts])


class RemoteEmbedder(Embedder):
    """Client for an embedding service speaking
    {"model": str, "input": [str]} -> {"data": [{"index", "embedding"}]}."""

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        dim: int,
        batch_size: int = 32,
        timeout_ms: int = 30000,
        max_in_flight: int = 4,
        api_token: Optional[str] = None,
        progress_bar: bool = False,
    ) -> None:
        """
        Parameters
        ----------
        endpoint : str
          Url the batches are posted to.
        model_name : str
          Sent as "model".
        dim : int
          Expected embedding dimension. Any other dimension is fatal.
        batch_size : int
          Texts per request. Defaults to 32.
        timeout_ms : int
          Per request timeout. Defaults to 30000.
        max_in_flight : int
          Concurrent requests. Defaults to 4.
        api_token : Optional[str]
          Bearer token, if the service needs one.
        progress_bar : bool
          Show a tqdm bar over batches. Defaults to False.
        """
        super().__init__(dim)
        self.model_name = model_name
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.progress_bar = progress_bar
        self._client = JsonServiceClient(
            endpoint=endpoint, timeout_ms=timeout_ms, api_token=api_token
        )

    @property
    def label(self) -> str:
        """Model name shown in report tables"""
        return f"{self.model_name} ({self.dim}-d)"

    def _embed_one_batch(self, texts: List[str]) -> np.ndarray:
        """Post one batch and reassemble the rows by "index"."""
        response = self._client.post_json(
            {"model": self.model_name, "input": texts}
        )
        try:
            data = sorted(response["data"], key=lambda item: item["index"])
            rows = [item["embedding"] for item in data]
        except (KeyError, TypeError) as e:
            raise ProviderError(f"Malformed embedding response: {e}") from e
        if len(rows) != len(texts):
            raise ProviderError(
                f"Expected {len(texts)} embeddings, got {len(rows)}"
            )
        for row in rows:
            if len(row) != self.dim:
                raise ConfigurationError(
                    f"Model {self.model_name} returned {len(row)}-d "
                    f"embeddings but the configuration says {self.dim}"
                )
        return np.asarray(rows, dtype=np.float64)

    def _try_batch(
        self, texts: List[str]
    ) -> Union[np.ndarray, ProviderError]:
        """Returns the error instead of raising so other batches finish"""
        try:
            return self._embed_one_batch(texts)
        except ProviderError as e:
            return e

    def _embed(self, texts: List[str]) -> np.ndarray:
        """Batches are posted concurrently and reassembled in input order"""
        batches = [
            texts[i : i + self.batch_size]
            for i in range(0, len(texts), self.batch_size)
        ]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as executor:
            results = list(
                tqdm(
                    executor.map(self._try_batch, batches),
                    total=len(batches),
                    desc="Embedding batches",
                    disable=not self.progress_bar,
                )
            )
        failed = [
            i
            for i, result in enumerate(results)
            if isinstance(result, Exception)
        ]
        if failed:
            logging.error(
                f"{len(failed)} of {len(batches)} embedding batches failed: "
                f"{failed}"
            )
            raise ProviderError(
                f"Embedding batches {failed} failed: {results[failed[0]]}",
                failed_items=failed,
            )
        return np.vstack(results)


def create_embedder(
    config: Union[RemoteEmbedderConfig, HashProjectionConfig],
    run_seed: int = 0,
    api_token: Optional[str] = None,
    progress_bar: bool = False,
) -> Embedder:
    """
    Build the embedder a configuration describes.
    Args:
        config: Embedder configuration.
        run_seed (int): Used to derive the hash seed when config.seed is
          blank.
        api_token (Optional[str]): Bearer token for remote services.
        progress_bar (bool): Show progress for remote batches.

    Returns:
        Embedder
    """
    if isinstance(config, HashProjectionConfig):
        seed = (
            config.seed
            if config.seed is not None
            else derive_seed(run_seed, EMBEDDER_SUB_SEED)
        )
        return HashProjectionEmbedder(dim=config.dim, seed=seed)
    if not config.endpoint:
        raise ConfigurationError(
            f"No endpoint configured for embedding model {config.model_name}"
        )
    return RemoteEmbedder(
        endpoint=config.endpoint,
        model_name=config.model_name,
        dim=config.dim,
        batch_size=config.batch_size,
        timeout_ms=config.timeout_ms,
        max_in_flight=config.max_in_flight,
        api_token=api_token,
        progress_bar=progress_bar,
    )


def embed_batch(
    config: Union[RemoteEmbedderConfig, HashProjectionConfig],
    texts: Sequence[str],
) -> np.ndarray:
    """One-shot convenience: build the embedder and embed texts."""
    return create_embedder(config).embed_batch(texts)
