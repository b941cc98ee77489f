"""Loads benchmark run configurations: yaml file, then environment variables,
then command line flags."""

import argparse
import itertools
import logging
import os
from typing import List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from retrieval_bench.config_loader.base_config import EnvVarKeys
from retrieval_bench.config_loader.run_configuration import (
    ChunkingStrategy,
    ConfigurationError,
    EmbedderConfig,
    IndexKind,
    RerankerKind,
    RunConfig,
)


class FlagParser(argparse.ArgumentParser):
    """Reports bad flags as ConfigurationError instead of exiting, so exit
    code 2 stays reserved for missed thresholds."""

    def error(self, message: str):
        """Called by argparse on unknown flags and invalid values"""
        raise ConfigurationError(f"Invalid command line: {message}")


class RunConfigurationLoader:
    """Class to handle loading a single run configuration"""

    INDEX_FLAGS = {
        "m": "hnsw",
        "ef_construction": "hnsw",
        "ef": "hnsw",
        "nlist": "ivf",
        "nprobe": "ivf",
    }

    def _remove_none(self, data):
        """Remove keys whose value is None, so blank yaml values fall back to
        the defaults."""
        if isinstance(data, dict):
            return {
                k: self._remove_none(v)
                for k, v in data.items()
                if v is not None
            }
        if isinstance(data, list):
            return [self._remove_none(v) for v in data]
        return data

    @staticmethod
    def _read_yaml(conf_src: Optional[str]) -> dict:
        """The yaml document at conf_src, or an empty dict"""
        if conf_src is None:
            return {}
        try:
            with open(conf_src) as f:
                raw_config = yaml.load(f, Loader=yaml.SafeLoader)
        except FileNotFoundError as e:
            raise ConfigurationError(
                f"Configuration file {conf_src} not found"
            ) from e
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Can't parse {conf_src}: {e}") from e
        if raw_config is None:
            return {}
        if not isinstance(raw_config, dict):
            raise ConfigurationError(f"{conf_src} must hold a mapping")
        return raw_config

    @staticmethod
    def _env_int(name: str) -> Optional[int]:
        """Integer environment variable, None when unset"""
        value = os.getenv(name)
        if value is None or value == "":
            return None
        try:
            return int(value)
        except ValueError as e:
            raise ConfigurationError(
                f"{name} must be an integer, got {value!r}"
            ) from e

    def __resolve_env(self, configs: dict) -> None:
        """Environment variables override the file"""
        seed = self._env_int(EnvVarKeys.RETRIEVALBENCH_SEED.value)
        if seed is not None:
            configs["seed"] = seed
        workers = self._env_int(EnvVarKeys.RETRIEVALBENCH_WORKERS.value)
        if workers is not None:
            configs["workers"] = workers

    @staticmethod
    def __resolve_logging(configs: dict) -> None:
        """LOG_LEVEL overrides the configured level"""
        logging_configs = configs.setdefault("logging", {})
        if os.getenv(EnvVarKeys.LOG_LEVEL.value):
            logging_configs["level"] = os.getenv(EnvVarKeys.LOG_LEVEL.value)

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        """Flags shared by every subcommand"""
        parser.add_argument(
            "-c", "--conf-file-location", required=False, type=str
        )
        parser.add_argument("--corpus-dir", required=False, type=str)
        parser.add_argument("--output-dir", required=False, type=str)
        parser.add_argument(
            "--index", required=False, choices=["flat", "hnsw", "ivf"]
        )
        parser.add_argument("--m", required=False, type=int)
        parser.add_argument("--ef-construction", required=False, type=int)
        parser.add_argument("--ef", required=False, type=int)
        parser.add_argument("--nlist", required=False, type=int)
        parser.add_argument("--nprobe", required=False, type=int)
        parser.add_argument("--seed", required=False, type=int)
        parser.add_argument(
            "--reranker",
            required=False,
            choices=["none", "remote", "lexical"],
        )
        parser.add_argument("--rerank-top-n", required=False, type=int)
        parser.add_argument("--reranker-endpoint", required=False, type=str)
        parser.add_argument("--reranker-model", required=False, type=str)
        parser.add_argument("--workers", required=False, type=int)

    def __resolve_index_flags(
        self, configs: dict, args: argparse.Namespace
    ) -> None:
        """--index replaces the index block; parameter flags edit it"""
        if args.index is not None:
            current = configs.get("index") or {}
            if current.get("kind") != args.index:
                configs["index"] = {"kind": args.index}
        index_configs = configs.setdefault("index", {"kind": "hnsw"})
        index_configs.setdefault("kind", "hnsw")
        for flag, kind in self.INDEX_FLAGS.items():
            value = getattr(args, flag)
            if value is None:
                continue
            if index_configs["kind"] != kind:
                raise ConfigurationError(
                    f"--{flag.replace('_', '-')} only applies to a {kind} "
                    f"index, not {index_configs['kind']}"
                )
            key = "ef_search" if flag == "ef" else flag
            index_configs[key] = value

    @staticmethod
    def __resolve_reranker_flags(
        configs: dict, args: argparse.Namespace
    ) -> None:
        """--reranker replaces the reranker block; endpoint and model flags
        edit a remote one"""
        if args.reranker is not None:
            current = configs.get("reranker") or {}
            if current.get("kind") != args.reranker:
                configs["reranker"] = {"kind": args.reranker}
        reranker_configs = configs.setdefault("reranker", {"kind": "none"})
        for flag in ("reranker_endpoint", "reranker_model"):
            value = getattr(args, flag)
            if value is None:
                continue
            if reranker_configs.get("kind") != "remote":
                raise ConfigurationError(
                    f"--{flag.replace('_', '-')} needs a remote reranker"
                )
            key = "endpoint" if flag == "reranker_endpoint" else "model_name"
            reranker_configs[key] = value
        if args.rerank_top_n is not None:
            configs["rerank_top_n"] = args.rerank_top_n

    def resolve_raw(
        self, args: argparse.Namespace, raw_config: Optional[dict] = None
    ) -> dict:
        """Merged configuration dict before validation. raw_config replaces
        the conf file when given."""
        if raw_config is None:
            raw_config = self._read_yaml(args.conf_file_location)
        configs = self._remove_none(raw_config)
        self.__resolve_env(configs)
        self.__resolve_logging(configs)
        if args.corpus_dir is not None:
            configs["corpus_dir"] = args.corpus_dir
        if args.output_dir is not None:
            configs["output_dir"] = args.output_dir
        if args.seed is not None:
            configs["seed"] = args.seed
        if args.workers is not None:
            configs["workers"] = args.workers
        self.__resolve_index_flags(configs, args)
        self.__resolve_reranker_flags(configs, args)
        return configs

    @staticmethod
    def validate(configs: dict) -> RunConfig:
        """Typed configuration. Raises ConfigurationError."""
        try:
            return RunConfig.model_validate(configs)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid run configuration: {e}") from e

    def load_configs(self, sys_args: List[str]) -> RunConfig:
        """Parse flags and build the RunConfig"""
        parser = FlagParser()
        self.add_arguments(parser)
        args = parser.parse_args(sys_args)
        return self.validate(self.resolve_raw(args))


class MatrixAxes(BaseModel):
    """Values swept by a matrix run. A missing axis keeps the base value."""

    model_config = ConfigDict(extra="forbid")

    chunking: Optional[List[ChunkingStrategy]] = None
    embedder: Optional[List[EmbedderConfig]] = None
    index: Optional[List[IndexKind]] = None
    reranker: Optional[List[RerankerKind]] = None


class MatrixPlan(BaseModel):
    """The base configuration and one RunConfig per combination"""

    base: RunConfig
    runs: List[RunConfig]


class MatrixConfigurationLoader(RunConfigurationLoader):
    """Loads a matrix file: a run configuration under "base" plus "axes"."""

    AXES = ("chunking", "embedder", "index", "reranker")

    @staticmethod
    def run_dir_name(position: int) -> str:
        """run_001, run_002, ..."""
        return f"run_{position:03d}"

    def expand(self, base: RunConfig, axes: MatrixAxes) -> List[RunConfig]:
        """
        Cross product of the axes in chunking, embedder, index, reranker
        order, each run writing to output_dir/run_NNN.
        Args:
            base (RunConfig): Shared settings.
            axes (MatrixAxes): Swept values.

        Returns:
            List[RunConfig]
        """
        values = [
            getattr(axes, axis) or [getattr(base, axis)] for axis in self.AXES
        ]
        runs = []
        for position, combination in enumerate(
            itertools.product(*values), start=1
        ):
            updates = dict(zip(self.AXES, combination))
            updates["output_dir"] = base.output_dir / self.run_dir_name(
                position
            )
            runs.append(
                RunConfig.model_validate({**base.model_dump(), **updates})
            )
        logging.info(f"Matrix expanded to {len(runs)} runs")
        return runs

    def load_configs(self, sys_args: List[str]) -> MatrixPlan:
        """Parse flags, apply them to the base and expand the axes"""
        parser = FlagParser()
        self.add_arguments(parser)
        args = parser.parse_args(sys_args)
        raw_matrix = self._read_yaml(args.conf_file_location)
        unknown = sorted(set(raw_matrix) - {"base", "axes"})
        if unknown:
            raise ConfigurationError(f"Unknown matrix keys: {unknown}")
        base = self.validate(
            self.resolve_raw(args, raw_config=raw_matrix.get("base") or {})
        )
        try:
            axes = MatrixAxes.model_validate(
                self._remove_none(raw_matrix.get("axes") or {})
            )
        except ValidationError as e:
            raise ConfigurationError(f"Invalid matrix axes: {e}") from e
        return MatrixPlan(base=base, runs=self.expand(base, axes))
