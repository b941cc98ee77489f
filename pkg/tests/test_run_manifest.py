"""Tests methods in run_manifest module"""
import json
import tempfile
import unittest
from pathlib import Path
from unittest import mock
from unittest.mock import MagicMock

from retrieval_bench import __version__
from retrieval_bench.config_loader.run_configuration import RunConfig
from retrieval_bench.evaluation.evaluator import EvalReport, ReportLabels
from retrieval_bench.jobs.run_manifest import (
    build_manifest,
    config_hash,
    load_manifest,
    verify_manifest,
)
from retrieval_bench.writers.report_writers import emit_report

REPORT = EvalReport(
    k_values=[3],
    acc_at_k={3: 0.5},
    ndcg_at_k={3: 0.4},
    n_queries=2,
    labels=ReportLabels(model="m", index="Flat", chunking="c", reranker="r"),
    timing={"eval": 0.5},
)


class TestRunManifest(unittest.TestCase):
    """Tests building and verifying manifests"""

    def setUp(self):
        """A report written in every format plus its manifest"""
        self._tmp = tempfile.TemporaryDirectory()
        self.output_dir = Path(self._tmp.name)
        self.config = RunConfig(corpus_dir="c", output_dir=self.output_dir)
        written = emit_report(REPORT, ["json", "md", "csv"], self.output_dir)
        self.manifest = build_manifest(
            self.config, self.output_dir, written, {"report": 0.01}
        )

    def tearDown(self):
        self._tmp.cleanup()

    def test_manifest_contents(self):
        """Tests the recorded artifacts, hash and version"""
        self.assertEqual(
            ["report.csv", "report.json", "report.md"],
            [a.path for a in self.manifest.artifacts],
        )
        self.assertEqual(
            ["timing"], self.manifest.artifacts[1].digest_excludes
        )
        self.assertEqual([], self.manifest.artifacts[0].digest_excludes)
        self.assertEqual(__version__, self.manifest.tool_version)
        self.assertEqual(config_hash(self.config), self.manifest.config_hash)
        self.assertEqual({"report": 0.01}, self.manifest.stage_timings)
        self.assertEqual(self.manifest, load_manifest(self.output_dir))

    def test_intact(self):
        """Tests that untouched artifacts verify"""
        self.assertEqual([], verify_manifest(self.output_dir))

    def test_timing_not_digested(self):
        """Tests that rewriting the report timing keeps the digest"""
        report_path = self.output_dir / "report.json"
        contents = json.loads(report_path.read_text(encoding="utf-8"))
        contents["timing"] = {"eval": 99.0, "report": 3.0}
        report_path.write_text(json.dumps(contents), encoding="utf-8")
        self.assertEqual([], verify_manifest(self.output_dir))

    @mock.patch("logging.warning")
    def test_tampering_detected(self, mock_warn: MagicMock):
        """Tests that edited and deleted artifacts are reported"""
        md_path = self.output_dir / "report.md"
        md_path.write_text(
            md_path.read_text(encoding="utf-8").replace("0.500", "0.900"),
            encoding="utf-8",
        )
        (self.output_dir / "report.csv").unlink()
        report_path = self.output_dir / "report.json"
        contents = json.loads(report_path.read_text(encoding="utf-8"))
        contents["n_queries"] = 3
        report_path.write_text(json.dumps(contents), encoding="utf-8")
        self.assertEqual(
            ["report.csv", "report.json", "report.md"],
            verify_manifest(self.output_dir),
        )
        mock_warn.assert_called_once()

    def test_config_hash(self):
        """Tests that the hash follows the configuration contents"""
        same = RunConfig(corpus_dir="c", output_dir=self.output_dir)
        other = RunConfig(
            corpus_dir="c", output_dir=self.output_dir, seed=1
        )
        self.assertEqual(config_hash(self.config), config_hash(same))
        self.assertNotEqual(config_hash(self.config), config_hash(other))


if __name__ == "__main__":
    unittest.main()
