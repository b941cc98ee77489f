"""Small JSON-over-HTTP client shared by the remote embedder, reranker and
question generator."""

import logging
import threading
import time
from typing import Optional

import requests

MAX_ATTEMPTS = 3
INITIAL_BACKOFF_SECONDS = 0.25
RETRY_STATUS_CODES = frozenset([429, 500, 502, 503, 504])


class ProviderError(Exception):
    """Raised when a remote provider keeps failing after all retries."""

    def __init__(self, message: str, failed_items: Optional[list] = None):
        super().__init__(message)
        self.failed_items = failed_items or []


class JsonServiceClient:
    """Posts JSON payloads to one endpoint with bounded retries. Each thread
    gets its own requests.Session so the client can be shared by a worker
    pool."""

    def __init__(
        self,
        endpoint: str,
        timeout_ms: int = 30000,
        api_token: Optional[str] = None,
    ) -> None:
        """
        Constructor for JsonServiceClient.
        Parameters
        ----------
        endpoint : str
          Full url that requests are posted to.
        timeout_ms : int
          Per request timeout in milliseconds. Defaults to 30000.
        api_token : Optional[str]
          Sent as a bearer token if set.
        """
        self.endpoint = endpoint
        self.timeout_ms = timeout_ms
        self._api_token = api_token
        self._local = threading.local()

    def _session(self) -> requests.Session:
        """Session for the calling thread"""
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            session.headers.update({"Content-Type": "application/json"})
            if self._api_token:
                session.headers.update(
                    {"Authorization": f"Bearer {self._api_token}"}
                )
            self._local.session = session
        return session

    def post_json(self, payload: dict) -> dict:
        """
        Posts the payload. Connection errors, timeouts, 429 and 5xx responses
        are retried up to MAX_ATTEMPTS total attempts, sleeping 250 ms, then
        500 ms between attempts.
        Parameters
        ----------
        payload : dict

        Returns
        -------
        dict
          The decoded json response.

        Raises
        ------
        ProviderError
          If the last attempt fails or the response is not json.
        """
        backoff = INITIAL_BACKOFF_SECONDS
        last_error = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                response = self._session().post(
                    self.endpoint,
                    json=payload,
                    timeout=self.timeout_ms / 1000.0,
                )
                if response.status_code in RETRY_STATUS_CODES:
                    last_error = f"HTTP {response.status_code}"
                else:
                    response.raise_for_status()
                    return response.json()
            except requests.exceptions.JSONDecodeError as e:
                raise ProviderError(
                    f"Invalid json from {self.endpoint}: {e}"
                ) from e
            except requests.exceptions.HTTPError as e:
                # 4xx other than 429 will not get better on retry
                raise ProviderError(
                    f"Request to {self.endpoint} rejected: {e}"
                ) from e
            except requests.exceptions.RequestException as e:
                last_error = repr(e)
            logging.warning(
                f"Attempt {attempt} of {MAX_ATTEMPTS} to {self.endpoint} "
                f"failed: {last_error}"
            )
            if attempt < MAX_ATTEMPTS:
                time.sleep(backoff)
                backoff *= 2
        raise ProviderError(
            f"Request to {self.endpoint} failed after {MAX_ATTEMPTS} "
            f"attempts: {last_error}"
        )
