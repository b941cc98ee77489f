"""Tests methods in benchmark_job module"""
import logging
import os
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest import mock
from unittest.mock import MagicMock

from retrieval_bench.config_loader.run_configuration import (
    ConfigurationError,
    FlatExactIndexKind,
    HnswIndexKind,
    IvfFlatIndexKind,
    LexicalOverlap,
    LoggingConfig,
    NoReranker,
    RecursiveChunking,
    RemoteCrossEncoder,
    RemoteEmbedderConfig,
    RunConfig,
    SemanticChunking,
)
from retrieval_bench.config_loader.run_configuration_loader import (
    MatrixAxes,
    MatrixConfigurationLoader,
    MatrixPlan,
)
from retrieval_bench.evaluation.evaluator import EvalReport, ReportLabels
from retrieval_bench.jobs.benchmark_job import (
    EXIT_ERROR,
    EXIT_OK,
    EXIT_THRESHOLD,
    BenchmarkJob,
    BenchmarkMatrixJob,
    check_thresholds,
    chunking_label,
    main,
)
from retrieval_bench.jobs.run_manifest import verify_manifest
from retrieval_bench.readers.artifact_readers import ArtifactReaders
from retrieval_bench.util.file_utils import sha256_json_excluding

TEST_DIR = Path(os.path.dirname(os.path.realpath(__file__)))
CORPUS_DIR = TEST_DIR / "resources" / "corpus"
CONFIGS_DIR = TEST_DIR / "resources" / "test_configs"
OVERRIDES = CONFIGS_DIR / "overrides.jsonl"

STAGE_FILES = [
    "chunks.jsonl",
    "documents.jsonl",
    "index.rbi",
    "pairs.jsonl",
    "report.csv",
    "report.json",
    "report.md",
    "vectors.bin",
    "vectors.ids",
]


def _report(acc3: float, failed: bool = False) -> EvalReport:
    """Minimal report with one k"""
    return EvalReport(
        k_values=[3],
        acc_at_k={3: acc3},
        ndcg_at_k={3: acc3 / 2},
        n_queries=10,
        failed=failed,
        labels=ReportLabels(model="m", index="i", chunking="c", reranker="r"),
    )


class TestCheckThresholds(unittest.TestCase):
    """Tests check_thresholds"""

    def test_examples(self):
        """Tests empty, passing and failing thresholds"""
        self.assertTrue(check_thresholds(_report(0.5), {}).passed)
        self.assertTrue(check_thresholds(_report(0.5), {3: 0.4}).passed)
        self.assertTrue(check_thresholds(_report(0.5), {3: 0.5}).passed)
        with mock.patch("logging.warning") as mock_warn:
            result = check_thresholds(_report(0.5), {3: 0.6})
        self.assertFalse(result.passed)
        self.assertEqual({3: (0.5, 0.6)}, result.failures)
        mock_warn.assert_called_once()

    def test_unknown_k(self):
        """Tests that a threshold on an unevaluated k is rejected"""
        with self.assertRaises(ConfigurationError):
            check_thresholds(_report(0.5), {5: 0.1})

    def test_chunking_label(self):
        """Tests the chunking column"""
        self.assertEqual(
            "recursive-512",
            chunking_label(
                RunConfig(
                    corpus_dir="c", chunking=RecursiveChunking(max_chars=512)
                )
            ),
        )
        self.assertEqual(
            "semantic-0.35",
            chunking_label(
                RunConfig(
                    corpus_dir="c",
                    chunking=SemanticChunking(similarity_threshold=0.35),
                )
            ),
        )


class TestBenchmarkJob(unittest.TestCase):
    """Tests methods in BenchmarkJob class"""

    def setUp(self):
        """Fresh output directory per test"""
        self._tmp = tempfile.TemporaryDirectory()
        self.output_dir = Path(self._tmp.name) / "run"

    def tearDown(self):
        self._tmp.cleanup()

    def _configs(self, **updates) -> RunConfig:
        """Deterministic configuration over the fixture corpus"""
        values = dict(
            corpus_dir=CORPUS_DIR,
            output_dir=self.output_dir,
            chunking=RecursiveChunking(max_chars=512),
            index=HnswIndexKind(m=8, ef_construction=32, ef_search=32),
            reranker=LexicalOverlap(),
            seed=7,
            workers=2,
        )
        values.update(updates)
        return RunConfig(**values)

    @mock.patch("boto3.client")
    def test_run_pipeline(self, mock_client: MagicMock):
        """Tests a full run: artifacts, manifest and report invariants"""
        job = BenchmarkJob(self._configs())
        self.assertEqual(EXIT_OK, job.run_job("run"))
        self.assertFalse(mock_client.called)
        self.assertEqual(
            sorted(STAGE_FILES + ["manifest.json"]),
            sorted(p.name for p in self.output_dir.iterdir()),
        )
        self.assertEqual(
            STAGE_FILES, sorted(a.path for a in job.manifest.artifacts)
        )
        self.assertEqual([], verify_manifest(self.output_dir))
        self.assertEqual(
            ["chunk", "embed", "eval", "genqa", "index", "ingest", "report"],
            sorted(job.stage_timings),
        )
        documents = list(
            ArtifactReaders.read_jsonl(self.output_dir / "documents.jsonl")
        )
        self.assertEqual(3, len(documents))
        text = "".join(d["text"] for d in documents)
        self.assertNotIn("clerk@cityhall.example.org", text)
        self.assertIn("[EMAIL]", text)
        self.assertIn("[PHONE]", text)

    def test_report_contents(self):
        """Tests labels, snapshot and metric invariants of a fixture run"""
        report, _ = BenchmarkJob(self._configs()).run_pipeline()
        self.assertEqual(
            ReportLabels(
                model="hash-projection (64-d)",
                index="HNSW",
                chunking="recursive-512",
                reranker="Lexical overlap",
            ),
            report.labels,
        )
        self.assertEqual([], report.invariant_violations())
        self.assertEqual(7, report.config_snapshot["seed"])
        derived = report.config_snapshot["derived"]
        self.assertEqual("hnsw", derived["index"]["kind"])
        self.assertEqual(
            ["embedder", "index.hnsw", "index.ivf", "qa"],
            sorted(derived["sub_seeds"]),
        )
        self.assertEqual("NFC", derived["normalization_form"])
        self.assertEqual(
            report.dataset_summary.retained,
            report.n_queries + report.n_excluded,
        )
        self.assertGreater(report.n_queries, 3)
        self.assertIn("ingest", report.timing)

    def test_deterministic(self):
        """Tests that two identical runs give the same report and digests"""
        digests = []
        for _ in range(2):
            shutil.rmtree(self.output_dir, ignore_errors=True)
            job = BenchmarkJob(self._configs())
            self.assertEqual(EXIT_OK, job.run_job("run"))
            digests.append(
                (
                    sha256_json_excluding(
                        self.output_dir / "report.json", ["timing"]
                    ),
                    [(a.path, a.sha256) for a in job.manifest.artifacts],
                    job.manifest.config_hash,
                )
            )
        self.assertEqual(digests[0], digests[1])

    def test_stage_by_stage(self):
        """Tests that separate subcommands chain through the artifacts and
        match a full run"""
        for command in (
            "ingest",
            "chunk",
            "genqa",
            "embed",
            "index",
            "eval",
            "report",
        ):
            job = BenchmarkJob(self._configs())
            self.assertEqual(EXIT_OK, job.run_job(command), command)
        staged = sha256_json_excluding(
            self.output_dir / "report.json", ["timing"]
        )
        self.assertEqual([], verify_manifest(self.output_dir))
        shutil.rmtree(self.output_dir)
        BenchmarkJob(self._configs()).run_job("run")
        self.assertEqual(
            staged,
            sha256_json_excluding(self.output_dir / "report.json", ["timing"]),
        )

    @mock.patch("logging.warning")
    def test_overrides(self, mock_warn: MagicMock):
        """Tests that review overrides drop pairs from evaluation"""
        job = BenchmarkJob(self._configs(overrides_file=OVERRIDES))
        pairs = job.generate_qa(job.chunk(job.ingest()))
        dropped = {
            p.query_id for p in pairs if p.filter_reason == "manual_drop"
        }
        self.assertEqual({"q-budget_hearing.txt:00000"}, dropped)
        self.assertEqual(
            job.dataset_summary.filtered, sum(p.filtered for p in pairs)
        )

    def test_thresholds_gate(self):
        """Tests exit code 2 when Acc@3 misses its minimum"""
        job = BenchmarkJob(self._configs(thresholds={3: 0.6}))
        with mock.patch("logging.warning"):
            self.assertEqual(EXIT_THRESHOLD, job._gate(_report(0.5)))
        self.assertEqual(EXIT_OK, job._gate(_report(0.7)))
        with mock.patch("logging.error"):
            self.assertEqual(EXIT_ERROR, job._gate(_report(0.7, failed=True)))
        passing = BenchmarkJob(self._configs(thresholds={3: 0.0}))
        self.assertEqual(EXIT_OK, passing.run_job("run"))

    @mock.patch("logging.error")
    def test_missing_corpus(self, mock_log_error: MagicMock):
        """Tests that a failing stage is named and exits 1"""
        job = BenchmarkJob(self._configs(corpus_dir=self.output_dir / "none"))
        self.assertEqual(EXIT_ERROR, job.run_job("run"))
        messages = " ".join(
            str(c[0][0]) for c in mock_log_error.call_args_list
        )
        self.assertIn("Stage 'ingest' failed", messages)

    @mock.patch("logging.error")
    @mock.patch("retrieval_bench.jobs.benchmark_job.build_index")
    def test_partial_artifacts_kept(
        self, mock_build: MagicMock, mock_log_error: MagicMock
    ):
        """Tests that artifacts of completed stages survive a failure"""
        mock_build.side_effect = RuntimeError("out of memory")
        job = BenchmarkJob(self._configs())
        self.assertEqual(EXIT_ERROR, job.run_job("run"))
        self.assertEqual(
            [
                "chunks.jsonl",
                "documents.jsonl",
                "pairs.jsonl",
                "vectors.bin",
                "vectors.ids",
            ],
            sorted(p.name for p in self.output_dir.iterdir()),
        )

    def test_remote_endpoint_resolved(self):
        """Tests that a blank remote endpoint is filled from the resolved
        endpoints"""
        endpoints = MagicMock()
        endpoints.embedding_endpoint = "http://embed"
        secrets = MagicMock()
        secrets.provider_api_token = "tkn"
        job = BenchmarkJob(
            self._configs(
                embedder=RemoteEmbedderConfig(model_name="mini", dim=16)
            ),
            endpoints=endpoints,
            secrets=secrets,
        )
        self.assertEqual("http://embed", job.configs.embedder.endpoint)
        self.assertEqual("tkn", job._api_token)

    def test_remote_rerank_in_flight(self):
        """Tests that a remote reranker caps concurrent queries at its
        max_in_flight and other rerankers use every worker"""
        secrets = MagicMock()
        secrets.provider_api_token = "tkn"
        remote = RemoteCrossEncoder(
            endpoint="http://rerank", model_name="m", max_in_flight=2
        )
        job = BenchmarkJob(
            self._configs(reranker=remote, workers=8), secrets=secrets
        )
        self.assertEqual(2, job.eval_workers)
        job = BenchmarkJob(
            self._configs(reranker=remote, workers=1), secrets=secrets
        )
        self.assertEqual(1, job.eval_workers)
        job = BenchmarkJob(self._configs(workers=8))
        self.assertEqual(8, job.eval_workers)


class TestBenchmarkMatrixJob(unittest.TestCase):
    """Tests methods in BenchmarkMatrixJob class"""

    def test_worst_exit_code(self):
        """Tests that errors outrank threshold failures"""
        self.assertEqual(
            EXIT_ERROR, BenchmarkMatrixJob.worst_exit_code([0, 2, 1])
        )
        self.assertEqual(
            EXIT_THRESHOLD, BenchmarkMatrixJob.worst_exit_code([0, 2])
        )
        self.assertEqual(EXIT_OK, BenchmarkMatrixJob.worst_exit_code([]))

    def test_matrix(self):
        """Tests one run directory per combination and a combined table"""
        with tempfile.TemporaryDirectory() as tmp:
            base = RunConfig(
                corpus_dir=CORPUS_DIR, output_dir=Path(tmp), workers=1
            )
            axes = MatrixAxes(
                chunking=[
                    RecursiveChunking(max_chars=512),
                    RecursiveChunking(max_chars=2000),
                ],
                index=[
                    FlatExactIndexKind(),
                    IvfFlatIndexKind(nlist=4, nprobe=1),
                ],
                reranker=[NoReranker()],
            )
            plan = MatrixPlan(
                base=base, runs=MatrixConfigurationLoader().expand(base, axes)
            )
            job = BenchmarkMatrixJob(plan)
            self.assertEqual(EXIT_OK, job.run_job())
            self.assertEqual(4, len(job.reports))
            for i in range(1, 5):
                report_md = Path(tmp) / f"run_00{i}" / "report.md"
                self.assertTrue(report_md.is_file())
            lines = (Path(tmp) / "matrix.md").read_text().splitlines()
            self.assertEqual(6, len(lines))
            self.assertIn("| Flat | recursive-512 | None |", lines[2])
            self.assertIn("| IVF-Flat | recursive-2000 | None |", lines[5])

    def test_log_file_released(self):
        """Tests that every run writes to the log file once and that the
        handler is closed when the matrix finishes"""
        handlers = list(logging.getLogger().handlers)
        with tempfile.TemporaryDirectory() as tmp:
            log_file = Path(tmp) / "bench.log"
            base = RunConfig(
                corpus_dir=CORPUS_DIR,
                output_dir=Path(tmp) / "matrix",
                workers=1,
                logging=LoggingConfig(file=str(log_file)),
            )
            axes = MatrixAxes(
                chunking=[
                    RecursiveChunking(max_chars=512),
                    RecursiveChunking(max_chars=2000),
                ],
                index=[FlatExactIndexKind()],
            )
            plan = MatrixPlan(
                base=base, runs=MatrixConfigurationLoader().expand(base, axes)
            )
            self.assertEqual(EXIT_OK, BenchmarkMatrixJob(plan).run_job())
            self.assertEqual(handlers, logging.getLogger().handlers)
            text = log_file.read_text(encoding="utf-8")
            self.assertEqual(1, text.count("Finished all runs!"))
            self.assertEqual(2, text.count("Finished run in"))
            self.assertEqual(EXIT_OK, BenchmarkJob(plan.runs[0]).run_job())
            self.assertEqual(handlers, logging.getLogger().handlers)
            text = log_file.read_text(encoding="utf-8")
            self.assertEqual(3, text.count("Finished run in"))


class TestMain(unittest.TestCase):
    """Tests the command line entry point"""

    @mock.patch.dict(os.environ, {}, clear=True)
    @mock.patch("logging.error")
    def test_missing_corpus_dir(self, mock_log_error: MagicMock):
        """Tests a configuration error before any stage runs"""
        with tempfile.TemporaryDirectory() as tmp:
            output_dir = Path(tmp) / "out"
            self.assertEqual(
                EXIT_ERROR, main(["run", "--output-dir", str(output_dir)])
            )
            self.assertFalse(output_dir.exists())
        self.assertIn("Configuration error", mock_log_error.call_args[0][0])

    @mock.patch.dict(os.environ, {}, clear=True)
    @mock.patch("logging.error")
    def test_invalid_conf_file(self, mock_log_error: MagicMock):
        """Tests that an invalid file exits 1"""
        conf = str(CONFIGS_DIR / "invalid_run_configs.yml")
        self.assertEqual(EXIT_ERROR, main(["run", "-c", conf]))
        mock_log_error.assert_called_once()

    @mock.patch.dict(os.environ, {}, clear=True)
    @mock.patch("logging.error")
    def test_bad_flags(self, mock_log_error: MagicMock):
        """Tests that unknown flags, commands and choices exit 1, not the
        threshold code"""
        for sys_args in (
            ["run", "--corpus-dir", "x", "--bogus"],
            ["run", "--index", "annoy"],
            ["run", "--workers", "many"],
            ["matrix", "--reranker", "cohere"],
            ["upload"],
        ):
            self.assertEqual(EXIT_ERROR, main(sys_args))
        self.assertEqual(5, mock_log_error.call_count)
        self.assertIn("Invalid command line", mock_log_error.call_args[0][0])

    @mock.patch.dict(os.environ, {"RETRIEVALBENCH_SEED": "3"}, clear=True)
    def test_run_from_flags(self):
        """Tests a full run configured by flags and env vars"""
        with tempfile.TemporaryDirectory() as tmp:
            exit_code = main(
                [
                    "run",
                    "--corpus-dir",
                    str(CORPUS_DIR),
                    "--output-dir",
                    tmp,
                    "--index",
                    "flat",
                    "--workers",
                    "1",
                ]
            )
            self.assertEqual(EXIT_OK, exit_code)
            report = Path(tmp) / "report.json"
            self.assertTrue(report.is_file())
            self.assertIn('"seed": 3', report.read_text(encoding="utf-8"))


if __name__ == "__main__":
    unittest.main()
