"""Tests methods in rerankers module"""
import random
import unittest
from unittest import mock
from unittest.mock import MagicMock

from retrieval_bench.config_loader.run_configuration import (
    ConfigurationError,
    LexicalOverlap,
    NoReranker,
    RemoteCrossEncoder,
)
from retrieval_bench.index.base import SearchHit
from retrieval_bench.readers.artifact_readers import DataIntegrityError
from retrieval_bench.transformations.rerankers import (
    IdentityReranker,
    LexicalOverlapReranker,
    RemoteCrossEncoderReranker,
    create_reranker,
    lexical_score,
    rerank_top_n,
)
from retrieval_bench.util.http_utils import ProviderError


def _hits(chunk_ids):
    """Hits ranked in the given order with descending scores"""
    return [
        SearchHit(chunk_id=c, score=1.0 - 0.01 * i, rank=i + 1)
        for i, c in enumerate(chunk_ids)
    ]


class TestLexicalScore(unittest.TestCase):
    """Tests lexical_score"""

    def test_examples(self):
        """Tests self overlap, disjoint text and the parking example"""
        self.assertEqual(1.0, lexical_score("library hours", "library hours"))
        self.assertEqual(0.0, lexical_score("a b", "c d"))
        self.assertEqual(
            1.0, lexical_score("parking ordinance", "parking ordinance vote")
        )
        self.assertEqual(
            0.0, lexical_score("parking ordinance", "library hours")
        )
        self.assertEqual(0.5, lexical_score("parking ordinance", "Parking!"))

    def test_empty_query(self):
        """Tests that a query without tokens scores 0"""
        self.assertEqual(0.0, lexical_score("?!", "anything"))

    def test_stopwords(self):
        """Tests that stopwords are ignored unless the query has nothing
        else"""
        self.assertEqual(
            0.0,
            lexical_score("What is the parking plan?", "What is the budget"),
        )
        self.assertEqual(
            0.5, lexical_score("What about parking and budget?", "budget")
        )
        self.assertEqual(1.0, lexical_score("the", "the end"))
        self.assertEqual(1.0, lexical_score("what is it", "what is it"))


class TestRerankTopN(unittest.TestCase):
    """Tests rerank_top_n"""

    TEXTS = {
        "c1": "library hours",
        "c2": "parking ordinance vote",
        "c3": "parking permits",
        "c4": "ordinance parking",
        "c5": "budget",
    }

    def test_identity(self):
        """Tests that kind none returns the hits unchanged"""
        hits = _hits(["c3", "c1", "c2"])
        self.assertEqual(
            hits, rerank_top_n(NoReranker(), "x", hits, self.TEXTS, 2)
        )

    def test_lexical_example(self):
        """Tests that the parking candidate moves ahead of the library
        one"""
        reranked = rerank_top_n(
            LexicalOverlap(),
            "parking ordinance",
            _hits(["c1", "c2"]),
            self.TEXTS,
        )
        self.assertEqual(["c2", "c1"], [h.chunk_id for h in reranked])
        self.assertEqual([1, 2], [h.rank for h in reranked])
        self.assertEqual([1.0, 0.0], [h.score for h in reranked])

    def test_ties_by_chunk_id_and_tail_kept(self):
        """Tests that equal scores order by chunk_id and hits past top_n
        keep their order and scores"""
        hits = _hits(["c4", "c1", "c2", "c5", "c3"])
        reranked = LexicalOverlapReranker().rerank_top_n(
            "parking ordinance", hits, self.TEXTS, top_n=3
        )
        self.assertEqual(
            ["c2", "c4", "c1", "c5", "c3"], [h.chunk_id for h in reranked]
        )
        self.assertEqual([1, 2, 3, 4, 5], [h.rank for h in reranked])
        self.assertEqual(hits[3].score, reranked[3].score)
        self.assertEqual(hits[4].score, reranked[4].score)

    def test_permutation_of_random_lists(self):
        """Tests that reranking the top 10 of 10 hits only permutes
        them"""
        rng = random.Random(5)
        words = ["parking", "budget", "zoning", "library", "vote", "park"]
        for _ in range(200):
            texts = {
                f"c{i}": " ".join(rng.choices(words, k=4)) for i in range(10)
            }
            chunk_ids = list(texts)
            rng.shuffle(chunk_ids)
            reranked = LexicalOverlapReranker().rerank_top_n(
                " ".join(rng.choices(words, k=2)), _hits(chunk_ids), texts
            )
            self.assertEqual(
                sorted(chunk_ids), sorted(h.chunk_id for h in reranked)
            )

    def test_rerank_twice(self):
        """Tests that reranking reranked hits changes nothing"""
        reranker = LexicalOverlapReranker()
        once = reranker.rerank_top_n(
            "parking ordinance", _hits(["c5", "c1", "c3", "c2"]), self.TEXTS
        )
        self.assertEqual(
            once, reranker.rerank_top_n("parking ordinance", once, self.TEXTS)
        )

    def test_missing_text(self):
        """Tests that a hit without text is a data integrity error"""
        with self.assertRaises(DataIntegrityError):
            LexicalOverlapReranker().rerank_top_n(
                "q", _hits(["c1", "nope"]), self.TEXTS
            )

    def test_empty_and_bad_top_n(self):
        """Tests empty hit lists and a non-positive top_n"""
        reranker = LexicalOverlapReranker()
        self.assertEqual([], reranker.rerank_top_n("q", [], self.TEXTS))
        with self.assertRaises(ValueError):
            reranker.rerank_top_n("q", _hits(["c1"]), self.TEXTS, top_n=0)

    def test_labels(self):
        """Tests the report labels"""
        self.assertEqual("None", IdentityReranker().label)
        self.assertEqual("Lexical overlap", LexicalOverlapReranker().label)


class TestRemoteCrossEncoderReranker(unittest.TestCase):
    """Tests methods in RemoteCrossEncoderReranker class"""

    TEXTS = {"c1": "first", "c2": "second", "c3": "third"}

    @mock.patch(
        "retrieval_bench.util.http_utils.JsonServiceClient.post_json"
    )
    def test_scores_reorder(self, mock_post: MagicMock):
        """Tests the request shape and reordering by returned scores"""
        mock_post.return_value = {"scores": [0.1, 0.9, 0.5]}
        reranker = RemoteCrossEncoderReranker("http://rerank", "bge-rr")
        reranked = reranker.rerank_top_n(
            "which?", _hits(["c1", "c2", "c3"]), self.TEXTS
        )
        self.assertEqual(["c2", "c3", "c1"], [h.chunk_id for h in reranked])
        mock_post.assert_called_once_with(
            {
                "model": "bge-rr",
                "query": "which?",
                "documents": ["first", "second", "third"],
            }
        )
        self.assertEqual("bge-rr", reranker.label)

    @mock.patch("logging.warning")
    @mock.patch(
        "retrieval_bench.util.http_utils.JsonServiceClient.post_json"
    )
    def test_failure_names_query(
        self, mock_post: MagicMock, mock_warn: MagicMock
    ):
        """Tests that a provider failure identifies the query"""
        mock_post.side_effect = ProviderError("timeout")
        reranker = RemoteCrossEncoderReranker("http://rerank", "bge-rr")
        with self.assertRaises(ProviderError) as e:
            reranker.rerank_top_n("which?", _hits(["c1"]), self.TEXTS)
        self.assertEqual(["which?"], e.exception.failed_items)
        mock_warn.assert_called_once()

    @mock.patch(
        "retrieval_bench.util.http_utils.JsonServiceClient.post_json"
    )
    def test_wrong_score_count(self, mock_post: MagicMock):
        """Tests that a short or malformed score list is rejected"""
        reranker = RemoteCrossEncoderReranker("http://rerank", "bge-rr")
        mock_post.return_value = {"scores": [0.3]}
        with self.assertRaises(ProviderError):
            reranker.rerank_top_n("q", _hits(["c1", "c2"]), self.TEXTS)
        mock_post.return_value = {"ranking": []}
        with self.assertRaises(ProviderError):
            reranker.rerank_top_n("q", _hits(["c1", "c2"]), self.TEXTS)

    def test_create_reranker(self):
        """Tests every kind and the missing endpoint error"""
        self.assertIsInstance(create_reranker(NoReranker()), IdentityReranker)
        self.assertIsInstance(
            create_reranker(LexicalOverlap()), LexicalOverlapReranker
        )
        remote = create_reranker(
            RemoteCrossEncoder(endpoint="http://rerank", model_name="m")
        )
        self.assertIsInstance(remote, RemoteCrossEncoderReranker)
        with self.assertRaises(ConfigurationError):
            create_reranker(RemoteCrossEncoder(model_name="m"))


if __name__ == "__main__":
    unittest.main()
