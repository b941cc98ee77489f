"""Tests methods in run_configuration_loader module"""
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import yaml

from retrieval_bench.config_loader.run_configuration import (
    ConfigurationError,
    FlatExactIndexKind,
    HashProjectionConfig,
    HnswIndexKind,
    IvfFlatIndexKind,
    LexicalOverlap,
    LoggingConfig,
    NoReranker,
    RecursiveChunking,
    RemoteCrossEncoder,
    RunConfig,
    SemanticChunking,
)
from retrieval_bench.config_loader.run_configuration_loader import (
    MatrixConfigurationLoader,
    RunConfigurationLoader,
)

TEST_DIR = Path(os.path.dirname(os.path.realpath(__file__)))
CONFIGS_DIR = TEST_DIR / "resources" / "test_configs"
RUN_CONFIGS = str(CONFIGS_DIR / "run_configs.yml")
MATRIX_CONFIGS = str(CONFIGS_DIR / "matrix_configs.yml")


class TestRunConfigurationLoader(unittest.TestCase):
    """Tests methods in RunConfigurationLoader class"""

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_conf_file(self):
        """Tests the typed configuration built from the yml file"""
        configs = RunConfigurationLoader().load_configs(["-c", RUN_CONFIGS])
        self.assertEqual(Path("tests/resources/corpus"), configs.corpus_dir)
        self.assertEqual(Path("some_output_dir"), configs.output_dir)
        self.assertEqual(RecursiveChunking(max_chars=512), configs.chunking)
        self.assertEqual(HashProjectionConfig(dim=64), configs.embedder)
        self.assertEqual(
            HnswIndexKind(m=8, ef_construction=32, ef_search=32),
            configs.index,
        )
        self.assertEqual(LexicalOverlap(), configs.reranker)
        self.assertIsNone(configs.overrides_file)
        self.assertEqual([3, 5, 10], configs.k_values)
        self.assertEqual({3: 0.2}, configs.thresholds)
        self.assertEqual(["json", "md"], configs.report_formats)
        self.assertEqual(7, configs.seed)
        self.assertEqual(2, configs.workers)
        self.assertEqual("WARNING", configs.logging.level)
        self.assertIsNone(configs.logging.file)

    @mock.patch.dict(
        os.environ,
        {
            "RETRIEVALBENCH_SEED": "11",
            "RETRIEVALBENCH_WORKERS": "3",
            "LOG_LEVEL": "DEBUG",
        },
        clear=True,
    )
    def test_env_vars_then_flags(self):
        """Tests that env vars override the file and flags override both"""
        loader = RunConfigurationLoader()
        configs = loader.load_configs(["-c", RUN_CONFIGS])
        self.assertEqual(11, configs.seed)
        self.assertEqual(3, configs.workers)
        self.assertEqual("DEBUG", configs.logging.level)
        configs = loader.load_configs(
            ["-c", RUN_CONFIGS, "--seed", "12", "--workers", "1"]
        )
        self.assertEqual(12, configs.seed)
        self.assertEqual(1, configs.workers)

    @mock.patch.dict(os.environ, {"RETRIEVALBENCH_WORKERS": "many"})
    def test_bad_env_var(self):
        """Tests that a non-integer env var is a configuration error"""
        with self.assertRaises(ConfigurationError):
            RunConfigurationLoader().load_configs(["-c", RUN_CONFIGS])

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_index_flags(self):
        """Tests --index and the index parameter flags"""
        loader = RunConfigurationLoader()
        configs = loader.load_configs(["-c", RUN_CONFIGS, "--m", "16"])
        self.assertEqual(
            HnswIndexKind(m=16, ef_construction=32, ef_search=32),
            configs.index,
        )
        configs = loader.load_configs(["-c", RUN_CONFIGS, "--ef", "64"])
        self.assertEqual(64, configs.index.ef_search)
        configs = loader.load_configs(["-c", RUN_CONFIGS, "--index", "flat"])
        self.assertEqual(FlatExactIndexKind(), configs.index)
        configs = loader.load_configs(
            ["-c", RUN_CONFIGS, "--index", "ivf", "--nlist", "8"]
        )
        self.assertEqual(IvfFlatIndexKind(nlist=8, nprobe=8), configs.index)
        with self.assertRaises(ConfigurationError):
            loader.load_configs(
                ["-c", RUN_CONFIGS, "--index", "flat", "--m", "4"]
            )

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_reranker_flags(self):
        """Tests --reranker, the remote reranker flags and --rerank-top-n"""
        loader = RunConfigurationLoader()
        configs = loader.load_configs(
            [
                "-c",
                RUN_CONFIGS,
                "--reranker",
                "remote",
                "--reranker-model",
                "bge-reranker",
                "--reranker-endpoint",
                "http://rerank",
                "--rerank-top-n",
                "20",
            ]
        )
        self.assertEqual(
            RemoteCrossEncoder(
                endpoint="http://rerank", model_name="bge-reranker"
            ),
            configs.reranker,
        )
        self.assertEqual(20, configs.rerank_top_n)
        configs = loader.load_configs(
            ["-c", RUN_CONFIGS, "--reranker", "none"]
        )
        self.assertEqual(NoReranker(), configs.reranker)
        with self.assertRaises(ConfigurationError):
            loader.load_configs(
                ["-c", RUN_CONFIGS, "--reranker-endpoint", "http://rerank"]
            )

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_flags_only(self):
        """Tests that a conf file is optional"""
        configs = RunConfigurationLoader().load_configs(
            ["--corpus-dir", "some_corpus", "--output-dir", "out"]
        )
        self.assertEqual(
            RunConfig(corpus_dir=Path("some_corpus"), output_dir=Path("out")),
            configs,
        )

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_dump_and_reload(self):
        """Tests that a configuration written back out as yml or json loads
        to an equal configuration"""
        loader = RunConfigurationLoader()
        configs = [
            loader.load_configs(["-c", RUN_CONFIGS]),
            RunConfig(
                corpus_dir=Path("transcripts"),
                output_dir=Path("out/run_001"),
                include_exts=[".txt", ".md"],
                redact=False,
                chunking=SemanticChunking(
                    similarity_threshold=0.35, min_sentences=3, max_chars=900
                ),
                index=IvfFlatIndexKind(nlist=64, nprobe=4),
                reranker=RemoteCrossEncoder(
                    endpoint="http://rerank", model_name="m", max_in_flight=2
                ),
                rerank_top_n=20,
                k_values=[10, 1, 5],
                seed=42,
                thresholds={1: 0.25, 10: 0.5},
                report_formats=["md"],
                workers=8,
                logging=LoggingConfig(level="DEBUG", file="bench.log"),
            ),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            for n, original in enumerate(configs):
                conf_file = Path(tmp) / f"dumped_{n}.yml"
                with open(conf_file, "w") as f:
                    yaml.safe_dump(original.model_dump(mode="json"), f)
                reloaded = loader.load_configs(["-c", str(conf_file)])
                self.assertEqual(original, reloaded)
                self.assertEqual(
                    original,
                    RunConfig.model_validate_json(reloaded.model_dump_json()),
                )

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_invalid_configs(self):
        """Tests that bad files and values are configuration errors"""
        loader = RunConfigurationLoader()
        with self.assertRaises(ConfigurationError):
            loader.load_configs(
                ["-c", str(CONFIGS_DIR / "invalid_run_configs.yml")]
            )
        with self.assertRaises(ConfigurationError):
            loader.load_configs(["-c", str(CONFIGS_DIR / "missing.yml")])
        with self.assertRaises(ConfigurationError):
            loader.load_configs([])
        with self.assertRaises(ConfigurationError):
            loader.validate({"corpus_dir": "c", "thresholds": {4: 0.5}})
        with self.assertRaises(ConfigurationError):
            loader.validate({"corpus_dir": "c", "unexpected": True})
        with self.assertRaises(ConfigurationError):
            loader.load_configs(["--corpus-dir", "c", "--bogus"])
        with self.assertRaises(ConfigurationError):
            loader.load_configs(["--corpus-dir", "c", "--index", "annoy"])


class TestMatrixConfigurationLoader(unittest.TestCase):
    """Tests methods in MatrixConfigurationLoader class"""

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_expand(self):
        """Tests the cross product of the axes"""
        plan = MatrixConfigurationLoader().load_configs(["-c", MATRIX_CONFIGS])
        self.assertEqual(4, len(plan.runs))
        self.assertEqual(
            [
                (512, "flat"),
                (512, "ivf"),
                (2000, "flat"),
                (2000, "ivf"),
            ],
            [(r.chunking.max_chars, r.index.kind) for r in plan.runs],
        )
        self.assertEqual(
            [Path("some_matrix_dir") / f"run_00{i}" for i in range(1, 5)],
            [r.output_dir for r in plan.runs],
        )
        self.assertTrue(all(r.reranker == NoReranker() for r in plan.runs))
        self.assertTrue(all(r.workers == 1 for r in plan.runs))
        self.assertEqual(Path("some_matrix_dir"), plan.base.output_dir)

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_flags_apply_to_base(self):
        """Tests that flags edit the base before expansion"""
        plan = MatrixConfigurationLoader().load_configs(
            ["-c", MATRIX_CONFIGS, "--seed", "5"]
        )
        self.assertTrue(all(r.seed == 5 for r in plan.runs))

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_unknown_keys(self):
        """Tests that keys other than base and axes are rejected"""
        with self.assertRaises(ConfigurationError):
            MatrixConfigurationLoader().load_configs(
                ["-c", str(CONFIGS_DIR / "bad_matrix_configs.yml")]
            )


if __name__ == "__main__":
    unittest.main()
