"""Resolves remote provider endpoints and api tokens that a run configuration
leaves blank."""

import json
import logging
import os
from abc import ABC, abstractmethod
from enum import Enum
from typing import Iterable, List, Optional

import boto3
from botocore.exceptions import BotoCoreError, ClientError


class EnvVarKeys(Enum):
    """Environment variables a user can set. For example, in a bash shell:
    RETRIEVALBENCH_ENDPOINTS='{"embedding_endpoint":"http://host/embed"}'
    then ProviderEndpoints().embedding_endpoint is "http://host/embed".
    """

    RETRIEVALBENCH_ENDPOINTS = "RETRIEVALBENCH_ENDPOINTS"
    RETRIEVALBENCH_SECRETS = "RETRIEVALBENCH_SECRETS"
    RETRIEVALBENCH_SEED = "RETRIEVALBENCH_SEED"
    RETRIEVALBENCH_WORKERS = "RETRIEVALBENCH_WORKERS"
    LOG_LEVEL = "LOG_LEVEL"


class ProviderConfigResolver(ABC):
    """Fills unset public attributes from a json environment variable and
    then from aws."""

    @abstractmethod
    def _download_params_from_aws(self) -> Optional[dict]:
        """Child classes define where in aws the values are kept"""

    def _config_names(self) -> List[str]:
        """Public, non-callable attributes to resolve"""
        return [
            attr
            for attr in dir(self)
            if not attr.startswith("_")
            and not callable(getattr(self, attr))
        ]

    def _missing(self, names: Iterable[str]) -> List[str]:
        """Names still unset"""
        return [name for name in names if getattr(self, name) is None]

    def _fill_from(self, params: Optional[dict]) -> None:
        """Set any unset attribute that params has a value for"""
        if not params:
            return
        for name in self._missing(self._config_names()):
            if params.get(name) is not None:
                setattr(self, name, params[name])

    def _resolve(
        self, env_var_name: str, required: Optional[Iterable[str]]
    ) -> None:
        """
        Resolve from the env var, then from aws if anything required is
        still unset.
        Parameters
        ----------
        env_var_name : str
          Environment variable holding a json object.
        required : Optional[Iterable[str]]
          Attributes the caller needs. Defaults to all of them. aws isn't
          contacted when these are already set.
        """
        env_string = os.getenv(env_var_name)
        if env_string:
            try:
                self._fill_from(json.loads(env_string))
            except json.JSONDecodeError as e:
                logging.warning(f"{env_var_name} isn't valid json: {e}")
        required = (
            self._config_names() if required is None else list(required)
        )
        if self._missing(required):
            self._fill_from(self._download_params_from_aws())
        still_missing = self._missing(required)
        if still_missing:
            logging.warning(
                f"Not all providers are configured: {still_missing}"
            )


class ProviderEndpoints(ProviderConfigResolver):
    """Urls of the remote embedding, reranking and question services."""

    _DEFAULT_PARAMETER_STORE_KEY_NAME = "/retrieval_bench/endpoints"
    _ENV_VAR_NAME = EnvVarKeys.RETRIEVALBENCH_ENDPOINTS.value

    def __init__(
        self,
        param_store: Optional[str] = _DEFAULT_PARAMETER_STORE_KEY_NAME,
        embedding_endpoint: Optional[str] = None,
        reranker_endpoint: Optional[str] = None,
        llm_endpoint: Optional[str] = None,
        required: Optional[Iterable[str]] = None,
    ) -> None:
        """
        Parameters
        ----------
        param_store : Optional[str]
          Name of the aws parameter that might hold a json object of
          endpoints.
        embedding_endpoint : Optional[str]
          Embedding service url.
        reranker_endpoint : Optional[str]
          Reranking service url.
        llm_endpoint : Optional[str]
          Chat-completion service url.
        required : Optional[Iterable[str]]
          Endpoints the run needs. Defaults to all three.
        """
        self.__param_store = param_store
        self.embedding_endpoint = embedding_endpoint
        self.reranker_endpoint = reranker_endpoint
        self.llm_endpoint = llm_endpoint
        self._resolve(self._ENV_VAR_NAME, required)

    def _download_params_from_aws(self) -> Optional[dict]:
        """Endpoints json from the ssm parameter store"""
        try:
            ssm_client = boto3.client("ssm")
        except BotoCoreError as e:
            logging.warning(f"Unable to create an ssm client: {e}")
            return None
        try:
            response = ssm_client.get_parameter(Name=self.__param_store)
            params = json.loads(response["Parameter"]["Value"])
        except ClientError as e:
            logging.warning(
                f"Unable to retrieve endpoints from aws: {e.response}"
            )
            params = None
        except BotoCoreError as e:
            logging.warning(f"Unable to retrieve endpoints from aws: {e}")
            params = None
        finally:
            ssm_client.close()
        return params


class ProviderSecrets(ProviderConfigResolver):
    """Bearer token sent to the remote providers."""

    _DEFAULT_SECRETS_NAME = "/retrieval_bench/secrets"
    _ENV_VAR_NAME = EnvVarKeys.RETRIEVALBENCH_SECRETS.value

    def __init__(
        self,
        secrets_name: Optional[str] = _DEFAULT_SECRETS_NAME,
        provider_api_token: Optional[str] = None,
    ) -> None:
        """
        Parameters
        ----------
        secrets_name : Optional[str]
          Name of the aws secret that might hold the token.
        provider_api_token : Optional[str]
          The token.
        """
        self.__secrets_name = secrets_name
        self.provider_api_token = provider_api_token
        self._resolve(self._ENV_VAR_NAME, None)

    def _download_params_from_aws(self) -> Optional[dict]:
        """Secrets json from aws secrets manager"""
        try:
            sm_client = boto3.client("secretsmanager")
        except BotoCoreError as e:
            logging.warning(f"Unable to create a secrets client: {e}")
            return None
        try:
            response = sm_client.get_secret_value(SecretId=self.__secrets_name)
            secrets = json.loads(response["SecretString"])
        except ClientError as e:
            logging.warning(
                f"Unable to retrieve secrets from aws: {e.response}"
            )
            secrets = None
        except BotoCoreError as e:
            logging.warning(f"Unable to retrieve secrets from aws: {e}")
            secrets = None
        finally:
            sm_client.close()
        return secrets
