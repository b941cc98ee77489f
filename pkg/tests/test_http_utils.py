"""Tests methods in http_utils module"""
import unittest
from unittest import mock
from unittest.mock import MagicMock

import requests

from retrieval_bench.util.http_utils import (
    MAX_ATTEMPTS,
    JsonServiceClient,
    ProviderError,
)


def _response(status_code: int, payload=None) -> MagicMock:
    """A requests.Response stand-in"""
    response = MagicMock()
    response.status_code = status_code
    response.json.return_value = payload
    if status_code >= 400:
        response.raise_for_status.side_effect = requests.exceptions.HTTPError(
            f"{status_code} error"
        )
    return response


class TestJsonServiceClient(unittest.TestCase):
    """Tests methods in JsonServiceClient class."""

    @mock.patch("time.sleep")
    @mock.patch("requests.Session.post")
    def test_post_json_success(
        self, mock_post: MagicMock, mock_sleep: MagicMock
    ):
        """
        Tests that a json payload is posted once and the decoded response
        returned.
        Parameters
        ----------
        mock_post : MagicMock
        mock_sleep : MagicMock
        """
        mock_post.return_value = _response(200, {"ok": True})
        client = JsonServiceClient(
            "http://provider/embed", timeout_ms=1500, api_token="tkn"
        )
        self.assertEqual({"ok": True}, client.post_json({"input": ["a"]}))
        mock_post.assert_called_once_with(
            "http://provider/embed", json={"input": ["a"]}, timeout=1.5
        )
        session = client._session()
        self.assertEqual("Bearer tkn", session.headers["Authorization"])
        self.assertFalse(mock_sleep.called)

    @mock.patch("logging.warning")
    @mock.patch("time.sleep")
    @mock.patch("requests.Session.post")
    def test_retries_then_succeeds(
        self,
        mock_post: MagicMock,
        mock_sleep: MagicMock,
        mock_warn: MagicMock,
    ):
        """Tests that 503 and a connection error are retried with a
        doubling backoff"""
        mock_post.side_effect = [
            _response(503),
            requests.exceptions.ConnectionError("reset"),
            _response(200, {"scores": [1.0]}),
        ]
        client = JsonServiceClient("http://provider/rerank")
        self.assertEqual({"scores": [1.0]}, client.post_json({}))
        self.assertEqual(3, mock_post.call_count)
        mock_sleep.assert_has_calls([mock.call(0.25), mock.call(0.5)])
        self.assertEqual(2, mock_warn.call_count)

    @mock.patch("logging.warning")
    @mock.patch("time.sleep")
    @mock.patch("requests.Session.post")
    def test_gives_up_after_max_attempts(
        self,
        mock_post: MagicMock,
        mock_sleep: MagicMock,
        mock_warn: MagicMock,
    ):
        """Tests that ProviderError is raised once every attempt failed"""
        mock_post.return_value = _response(429)
        client = JsonServiceClient("http://provider/embed")
        with self.assertRaises(ProviderError) as e:
            client.post_json({})
        self.assertIn("HTTP 429", str(e.exception))
        self.assertEqual(MAX_ATTEMPTS, mock_post.call_count)
        self.assertEqual(MAX_ATTEMPTS - 1, mock_sleep.call_count)

    @mock.patch("time.sleep")
    @mock.patch("requests.Session.post")
    def test_client_error_not_retried(
        self, mock_post: MagicMock, mock_sleep: MagicMock
    ):
        """Tests that a 400 fails immediately"""
        mock_post.return_value = _response(400)
        client = JsonServiceClient("http://provider/embed")
        with self.assertRaises(ProviderError):
            client.post_json({})
        self.assertEqual(1, mock_post.call_count)
        self.assertFalse(mock_sleep.called)

    @mock.patch("time.sleep")
    @mock.patch("requests.Session.post")
    def test_invalid_json(self, mock_post: MagicMock, mock_sleep: MagicMock):
        """Tests that a non-json body is a ProviderError"""
        response = _response(200)
        response.json.side_effect = requests.exceptions.JSONDecodeError(
            "Expecting value", "", 0
        )
        mock_post.return_value = response
        client = JsonServiceClient("http://provider/embed")
        with self.assertRaises(ProviderError):
            client.post_json({})
        self.assertEqual(1, mock_post.call_count)

    def test_provider_error_failed_items(self):
        """Tests that failed_items defaults to an empty list"""
        self.assertEqual([], ProviderError("x").failed_items)
        self.assertEqual(
            [2], ProviderError("x", failed_items=[2]).failed_items
        )


if __name__ == "__main__":
    unittest.main()
