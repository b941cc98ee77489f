"""Job that ingests a transcript corpus, synthesizes questions, builds the
retrieval pipeline and reports how well it finds each question's chunk."""
import argparse
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from retrieval_bench import __version__
from retrieval_bench.config_loader.base_config import (
    ProviderEndpoints,
    ProviderSecrets,
)
from retrieval_bench.config_loader.run_configuration import (
    ConfigurationError,
    HnswIndexKind,
    IvfFlatIndexKind,
    LoggingConfig,
    RecursiveChunking,
    RemoteCrossEncoder,
    RemoteEmbedderConfig,
    RemoteLLMConfig,
    RunConfig,
)
from retrieval_bench.config_loader.run_configuration_loader import (
    FlagParser,
    MatrixConfigurationLoader,
    MatrixPlan,
    RunConfigurationLoader,
)
from retrieval_bench.evaluation.evaluator import (
    DatasetCounts,
    EvalReport,
    RetrievalPipeline,
    evaluate_run,
)
from retrieval_bench.index.base import BuiltIndex
from retrieval_bench.index.index_io import load_index, save_index
from retrieval_bench.index.indexes import build_index
from retrieval_bench.jobs.run_manifest import RunManifest, build_manifest
from retrieval_bench.readers.artifact_readers import (
    ArtifactFiles,
    ArtifactReaders,
)
from retrieval_bench.readers.transcript_readers import TranscriptReader
from retrieval_bench.transformations.chunkers import (
    Chunk,
    ChunkingError,
    recursive_chunk,
    semantic_chunk,
    validate_chunks,
)
from retrieval_bench.transformations.embedders import (
    EMBEDDER_SUB_SEED,
    Embedder,
    create_embedder,
)
from retrieval_bench.transformations.question_generators import (
    MAX_QUESTION_CHARS,
    MIN_QUESTION_CHARS,
    DatasetSummary,
    QueryChunkPair,
    apply_overrides,
    build_dataset,
    create_question_generator,
    retained_pairs,
)
from retrieval_bench.transformations.rerankers import create_reranker
from retrieval_bench.transformations.text_normalizers import (
    NORMALIZATION_FORM,
    CleanDocument,
    normalize_text,
)
from retrieval_bench.util.seed_utils import derive_seed
from retrieval_bench.util.text_utils import STOPWORDS_VERSION
from retrieval_bench.util.vector_io import read_vectors, write_vectors
from retrieval_bench.writers.artifact_writers import ArtifactWriters
from retrieval_bench.writers.report_writers import (
    emit_matrix,
    emit_report,
    load_report,
)

root_logger = logging.getLogger()


@contextmanager
def configured_logging(configs: LoggingConfig):
    """
    Apply the configured level and attach the log file while a job runs.
    The handler is removed and closed afterwards. A file the root logger
    already writes to isn't attached twice.
    Args:
        configs (LoggingConfig): Level and optional file.
    """
    level = configs.level.upper()
    root_logger.setLevel(level)
    handler = None
    if configs.file is not None:
        path = os.path.abspath(configs.file)
        if not any(
            isinstance(h, logging.FileHandler) and h.baseFilename == path
            for h in root_logger.handlers
        ):
            handler = logging.FileHandler(path)
            handler.setLevel(level)
            root_logger.addHandler(handler)
    try:
        yield
    finally:
        if handler is not None:
            root_logger.removeHandler(handler)
            handler.close()


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_THRESHOLD = 2

SIMILARITY = "inner product on unit vectors"
SUB_SEED_NAMES = {
    "index.hnsw": "index.hnsw",
    "index.ivf": "index.ivf",
    "embedder": EMBEDDER_SUB_SEED,
    "qa": "qa.template",
}
COMMANDS = (
    "ingest",
    "chunk",
    "genqa",
    "embed",
    "index",
    "eval",
    "report",
    "run",
    "matrix",
)


class StageError(Exception):
    """Raised when a pipeline stage fails. Names the stage."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        """
        Parameters
        ----------
        stage : str
          Name of the failed stage.
        cause : BaseException
          The underlying error.
        """
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {cause}")


@dataclass
class ThresholdResult:
    """Outcome of check_thresholds. failures maps k to (acc, minimum)."""

    passed: bool
    failures: Dict[int, Tuple[float, float]] = field(default_factory=dict)


def check_thresholds(
    report: EvalReport, thresholds: Dict[int, float]
) -> ThresholdResult:
    """
    Compare Acc@k against minimums.
    Args:
        report (EvalReport): Evaluated run.
        thresholds (Dict[int, float]): k -> minimum Acc@k.

    Returns:
        ThresholdResult: Passes when every acc_at_k[k] >= thresholds[k].

    Raises:
        ConfigurationError: If a threshold names a k the report lacks.
    """
    unknown = sorted(set(thresholds) - set(report.k_values))
    if unknown:
        raise ConfigurationError(
            f"Thresholds for k={unknown} but the report has k_values "
            f"{report.k_values}"
        )
    failures = {
        k: (report.acc_at_k[k], minimum)
        for k, minimum in sorted(thresholds.items())
        if report.acc_at_k[k] < minimum
    }
    for k, (acc, minimum) in failures.items():
        logging.warning(f"Acc@{k} = {acc:.3f} is below the minimum {minimum}")
    return ThresholdResult(passed=not failures, failures=failures)


def chunking_label(configs: RunConfig) -> str:
    """Chunking column of the report table"""
    chunking = configs.chunking
    if isinstance(chunking, RecursiveChunking):
        return f"recursive-{chunking.max_chars}"
    return f"semantic-{chunking.similarity_threshold:g}"


class BenchmarkJob:
    """Runs the pipeline stages of one configuration. Every stage can take
    its input from the previous stage's return value or, when that is None,
    from the artifact the previous stage wrote to output_dir."""

    def __init__(
        self,
        configs: RunConfig,
        endpoints: Optional[ProviderEndpoints] = None,
        secrets: Optional[ProviderSecrets] = None,
    ) -> None:
        """
        Parameters
        ----------
        configs : RunConfig
          Validated run configuration.
        endpoints : Optional[ProviderEndpoints]
          Used for remote providers whose endpoint is blank. Resolved from
          the environment or aws when needed and not given.
        secrets : Optional[ProviderSecrets]
          Bearer token for remote providers. Resolved when a remote
          provider is configured and this isn't given.
        """
        self.configs = self._resolve_providers(configs, endpoints)
        self.output_dir = Path(self.configs.output_dir)
        self.stage_timings: Dict[str, float] = {}
        self.dataset_summary: Optional[DatasetSummary] = None
        self._api_token = self._resolve_api_token(secrets)
        self._embedder: Optional[Embedder] = None
        self.manifest: Optional[RunManifest] = None

    @property
    def eval_workers(self) -> int:
        """Queries evaluated concurrently. A remote reranker caps them at its
        max_in_flight."""
        reranker = self.configs.reranker
        if isinstance(reranker, RemoteCrossEncoder):
            return min(self.configs.workers, reranker.max_in_flight)
        return self.configs.workers

    @staticmethod
    def _remote_blocks(configs: RunConfig) -> Dict[str, object]:
        """Remote provider blocks keyed by the endpoint name they use"""
        blocks = {}
        if isinstance(configs.embedder, RemoteEmbedderConfig):
            blocks["embedding_endpoint"] = configs.embedder
        if isinstance(configs.reranker, RemoteCrossEncoder):
            blocks["reranker_endpoint"] = configs.reranker
        if isinstance(configs.qa, RemoteLLMConfig):
            blocks["llm_endpoint"] = configs.qa
        return blocks

    def _resolve_providers(
        self, configs: RunConfig, endpoints: Optional[ProviderEndpoints]
    ) -> RunConfig:
        """Fill blank remote endpoints"""
        blocks = self._remote_blocks(configs)
        missing = [name for name, b in blocks.items() if not b.endpoint]
        if not missing:
            return configs
        endpoints = endpoints or ProviderEndpoints(required=missing)
        updates = {}
        for name, key in (
            ("embedding_endpoint", "embedder"),
            ("reranker_endpoint", "reranker"),
            ("llm_endpoint", "qa"),
        ):
            value = getattr(endpoints, name)
            if name in missing and value:
                updates[key] = blocks[name].model_copy(
                    update={"endpoint": value}
                )
        return configs.model_copy(update=updates)

    def _resolve_api_token(
        self, secrets: Optional[ProviderSecrets]
    ) -> Optional[str]:
        """Token for remote providers, None when every provider is local"""
        if not self._remote_blocks(self.configs):
            return None
        secrets = secrets or ProviderSecrets()
        return secrets.provider_api_token

    def artifact_path(self, name: ArtifactFiles) -> Path:
        """Path of an artifact inside output_dir"""
        return self.output_dir / name.value

    def sub_seed(self, name: str) -> int:
        """Named seed derived from the run seed"""
        return derive_seed(self.configs.seed, SUB_SEED_NAMES[name])

    @property
    def embedder(self) -> Embedder:
        """Embedder shared by semantic chunking, corpus and queries"""
        if self._embedder is None:
            self._embedder = create_embedder(
                self.configs.embedder,
                run_seed=self.configs.seed,
                api_token=self._api_token,
                progress_bar=self.configs.progress_bar,
            )
        return self._embedder

    @contextmanager
    def _stage(self, name: str):
        """Time and log a stage. Failures are wrapped in StageError."""
        logging.info(f"Stage {name} started")
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            logging.error(f"Stage {name} failed: {e}")
            raise StageError(name, e) from e
        elapsed = time.perf_counter() - start
        self.stage_timings[name] = round(elapsed, 6)
        logging.info(f"Stage {name} finished in {elapsed:.2f}s")

    def ingest(self) -> List[CleanDocument]:
        """Load, normalize and de-identify the corpus"""
        with self._stage("ingest"):
            self.output_dir.mkdir(parents=True, exist_ok=True)
            reader = TranscriptReader(
                include_exts=self.configs.include_exts,
                max_workers=self.configs.workers,
            )
            raw_documents = reader.load_documents(self.configs.corpus_dir)
            documents = [
                normalize_text(doc, redact_pii=self.configs.redact)
                for doc in raw_documents
            ]
            redactions = sum(doc.redaction_count for doc in documents)
            logging.info(
                f"Normalized {len(documents)} documents, {redactions} "
                f"redactions"
            )
            ArtifactWriters.write_documents(
                self.artifact_path(ArtifactFiles.documents), documents
            )
        return documents

    def _chunk_document(self, doc: CleanDocument) -> List[Chunk]:
        """Chunk one document and check the segmentation"""
        chunking = self.configs.chunking
        if isinstance(chunking, RecursiveChunking):
            chunks = recursive_chunk(doc, chunking.max_chars)
        else:
            chunks = semantic_chunk(
                doc,
                self.embedder.embed_batch,
                similarity_threshold=chunking.similarity_threshold,
                min_sentences=chunking.min_sentences,
                max_chars=chunking.max_chars,
            )
        validation = validate_chunks(chunks, doc, chunking.max_chars)
        if not validation.passed:
            raise ChunkingError(
                f"Document {doc.doc_id} chunked badly: "
                f"{validation.violation} {validation.detail}"
            )
        return chunks

    def chunk(
        self, documents: Optional[List[CleanDocument]] = None
    ) -> List[Chunk]:
        """Split every document into chunks"""
        with self._stage("chunk"):
            if documents is None:
                documents = ArtifactReaders.load_documents(
                    self.artifact_path(ArtifactFiles.documents)
                )
            chunks = []
            for doc in documents:
                chunks.extend(self._chunk_document(doc))
            logging.info(
                f"{len(chunks)} chunks from {len(documents)} documents"
            )
            ArtifactWriters.write_chunks(
                self.artifact_path(ArtifactFiles.chunks), chunks
            )
        return chunks

    def generate_qa(
        self, chunks: Optional[List[Chunk]] = None
    ) -> List[QueryChunkPair]:
        """One question per chunk, filtered, with manual overrides"""
        with self._stage("genqa"):
            if chunks is None:
                chunks = ArtifactReaders.load_chunks(
                    self.artifact_path(ArtifactFiles.chunks)
                )
            qa = self.configs.qa
            generator = create_question_generator(
                qa, seed=self.sub_seed("qa"), api_token=self._api_token
            )
            max_in_flight = (
                qa.max_in_flight if isinstance(qa, RemoteLLMConfig) else 1
            )
            pairs, summary = build_dataset(
                generator,
                chunks,
                max_in_flight=max_in_flight,
                progress_bar=self.configs.progress_bar,
            )
            if self.configs.overrides_file is not None:
                overrides = ArtifactReaders.load_overrides(
                    self.configs.overrides_file
                )
                pairs = apply_overrides(pairs, overrides)
                summary = DatasetSummary.from_pairs(pairs)
                logging.info(
                    f"Applied {len(overrides)} overrides, {summary.retained} "
                    f"pairs retained"
                )
            self.dataset_summary = summary
            ArtifactWriters.write_pairs(
                self.artifact_path(ArtifactFiles.pairs), pairs
            )
        return pairs

    def embed_corpus(
        self, chunks: Optional[List[Chunk]] = None
    ) -> Tuple[np.ndarray, List[str]]:
        """Embed every chunk and write vectors.bin / vectors.ids"""
        with self._stage("embed"):
            if chunks is None:
                chunks = ArtifactReaders.load_chunks(
                    self.artifact_path(ArtifactFiles.chunks)
                )
            ids = [chunk.chunk_id for chunk in chunks]
            vectors = self.embedder.embed_batch([c.text for c in chunks])
            write_vectors(
                self.artifact_path(ArtifactFiles.vectors), vectors, ids
            )
            logging.info(
                f"Embedded {len(ids)} chunks with {self.embedder.label}"
            )
        return vectors, ids

    def index_seed(self) -> int:
        """Sub-seed of the configured index kind"""
        kind = self.configs.index
        if isinstance(kind, HnswIndexKind):
            return self.sub_seed("index.hnsw")
        if isinstance(kind, IvfFlatIndexKind):
            return self.sub_seed("index.ivf")
        return 0

    def build_index(
        self,
        vectors: Optional[np.ndarray] = None,
        ids: Optional[List[str]] = None,
    ) -> BuiltIndex:
        """Build and snapshot the configured index"""
        with self._stage("index"):
            if vectors is None or ids is None:
                vectors, ids = read_vectors(
                    self.artifact_path(ArtifactFiles.vectors)
                )
            index = build_index(
                vectors, ids, self.configs.index, seed=self.index_seed()
            )
            save_index(index, self.artifact_path(ArtifactFiles.index))
            logging.info(f"Built {index.label} over {index.count} vectors")
        return index

    def config_snapshot(self, index: BuiltIndex) -> dict:
        """Full configuration plus the facts derived while running"""
        snapshot = self.configs.model_dump(mode="json")
        snapshot["derived"] = {
            "similarity": SIMILARITY,
            "index": index.describe(),
            "sub_seeds": {
                name: self.sub_seed(name) for name in sorted(SUB_SEED_NAMES)
            },
            "quality_filter": {
                "min_chars": MIN_QUESTION_CHARS,
                "max_chars": MAX_QUESTION_CHARS,
                "question_mark": True,
                "token_overlap": True,
            },
            "stopwords_version": STOPWORDS_VERSION,
            "normalization_form": NORMALIZATION_FORM,
            "tool_version": __version__,
        }
        return snapshot

    def evaluate(
        self,
        pairs: Optional[List[QueryChunkPair]] = None,
        chunks: Optional[List[Chunk]] = None,
        index: Optional[BuiltIndex] = None,
    ) -> EvalReport:
        """Search for every retained question and score the rankings"""
        with self._stage("eval"):
            if pairs is None:
                pairs = ArtifactReaders.load_pairs(
                    self.artifact_path(ArtifactFiles.pairs)
                )
            if chunks is None:
                chunks = ArtifactReaders.load_chunks(
                    self.artifact_path(ArtifactFiles.chunks)
                )
            if index is None:
                index = load_index(self.artifact_path(ArtifactFiles.index))
            ArtifactReaders.check_pairs_reference_chunks(pairs, chunks)
            summary = self.dataset_summary or DatasetSummary.from_pairs(pairs)
            pipeline = RetrievalPipeline(
                embedder=self.embedder,
                index=index,
                texts={chunk.chunk_id: chunk.text for chunk in chunks},
                depth=max(self.configs.k_values),
                reranker=create_reranker(
                    self.configs.reranker, api_token=self._api_token
                ),
                rerank_top_n=self.configs.rerank_top_n,
                chunking_label=chunking_label(self.configs),
            )
            report = evaluate_run(
                pipeline,
                retained_pairs(pairs),
                self.configs.k_values,
                workers=self.eval_workers,
                config_snapshot=self.config_snapshot(index),
                dataset_summary=DatasetCounts(**asdict(summary)),
            )
            emit_report(report, ["json"], self.output_dir)
        return report

    def emit_reports(self, report: Optional[EvalReport] = None) -> EvalReport:
        """Write the report formats and the manifest"""
        with self._stage("report"):
            if report is None:
                report = load_report(
                    self.artifact_path(ArtifactFiles.report_json)
                )
            timing = {**report.timing, **self.stage_timings}
            report = report.model_copy(update={"timing": timing})
            emit_report(report, self.configs.report_formats, self.output_dir)
        self.manifest = build_manifest(
            self.configs,
            self.output_dir,
            [
                self.artifact_path(name)
                for name in ArtifactFiles
                if name is not ArtifactFiles.manifest
                and self.artifact_path(name).is_file()
            ],
            self.stage_timings,
        )
        return report

    def run_pipeline(self) -> Tuple[EvalReport, RunManifest]:
        """Every stage, in order"""
        documents = self.ingest()
        chunks = self.chunk(documents)
        pairs = self.generate_qa(chunks)
        vectors, ids = self.embed_corpus(chunks)
        index = self.build_index(vectors, ids)
        report = self.evaluate(pairs, chunks, index)
        report = self.emit_reports(report)
        return report, self.manifest

    def _gate(self, report: EvalReport) -> int:
        """Exit code of a finished run"""
        if report.failed:
            logging.error("Too many queries were excluded")
            return EXIT_ERROR
        result = check_thresholds(report, self.configs.thresholds)
        return EXIT_OK if result.passed else EXIT_THRESHOLD

    def run_job(self, command: str = "run") -> int:
        """
        Run one subcommand.
        Parameters
        ----------
        command : str
          One of ingest, chunk, genqa, embed, index, eval, report, run.

        Returns
        -------
        int
          0 on success, 1 on an execution error, 2 when a threshold fails.
        """
        with configured_logging(self.configs.logging):
            return self._run_command(command)

    def _run_command(self, command: str) -> int:
        """Dispatch a subcommand and map stage failures to exit codes"""
        job_start_time = time.perf_counter()
        logging.info(f"Running {command} into {self.output_dir}")
        try:
            if command == "run":
                report, _ = self.run_pipeline()
                exit_code = self._gate(report)
            elif command == "report":
                exit_code = self._gate(self.emit_reports())
            elif command == "ingest":
                self.ingest()
                exit_code = EXIT_OK
            elif command == "chunk":
                self.chunk()
                exit_code = EXIT_OK
            elif command == "genqa":
                self.generate_qa()
                exit_code = EXIT_OK
            elif command == "embed":
                self.embed_corpus()
                exit_code = EXIT_OK
            elif command == "index":
                self.build_index()
                exit_code = EXIT_OK
            elif command == "eval":
                report = self.evaluate()
                exit_code = EXIT_ERROR if report.failed else EXIT_OK
            else:
                raise ConfigurationError(f"Unknown command {command}")
        except StageError as e:
            logging.error(f"{e}. Partial artifacts kept in {self.output_dir}")
            return EXIT_ERROR
        logging.info(
            f"Finished {command} in "
            f"{time.perf_counter() - job_start_time:.2f}s, exit code "
            f"{exit_code}"
        )
        return exit_code


class BenchmarkMatrixJob:
    """Runs the cross product of a matrix file and tabulates the runs."""

    # Worst first
    EXIT_SEVERITY = (EXIT_ERROR, EXIT_THRESHOLD, EXIT_OK)

    def __init__(self, plan: MatrixPlan) -> None:
        """
        Parameters
        ----------
        plan : MatrixPlan
          Base configuration and the expanded runs.
        """
        self.plan = plan
        self.reports: List[EvalReport] = []

    @classmethod
    def worst_exit_code(cls, exit_codes: List[int]) -> int:
        """An execution error outranks a threshold failure"""
        for code in cls.EXIT_SEVERITY:
            if code in exit_codes:
                return code
        return EXIT_OK

    def run_job(self) -> int:
        """Run every combination and write matrix.md / matrix.csv"""
        with configured_logging(self.plan.base.logging):
            return self._run_all()

    def _run_all(self) -> int:
        """Runs in plan order, then the matrix tables"""
        total_jobs = len(self.plan.runs)
        exit_codes = []
        logging.info("Starting all runs...")
        for current_job_num, run_configs in enumerate(self.plan.runs, 1):
            logging.info(
                f"Running {current_job_num} of {total_jobs} into "
                f"{run_configs.output_dir}"
            )
            try:
                job = BenchmarkJob(run_configs)
            except ConfigurationError as e:
                logging.error(f"Run {current_job_num} misconfigured: {e}")
                exit_codes.append(EXIT_ERROR)
                continue
            exit_codes.append(job.run_job("run"))
            report_path = job.artifact_path(ArtifactFiles.report_json)
            if report_path.is_file():
                self.reports.append(load_report(report_path))
        if self.reports:
            emit_matrix(self.reports, self.plan.base.output_dir)
        logging.info("Finished all runs!")
        return self.worst_exit_code(exit_codes)


def main(sys_args: List[str]) -> int:
    """
    Command line entry point.
    Args:
        sys_args (List[str]): Subcommand followed by its flags.

    Returns:
        int: Process exit code.
    """
    parser = FlagParser(prog="retrieval-bench")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("options", nargs=argparse.REMAINDER)
    try:
        args = parser.parse_args(sys_args)
        if args.command == "matrix":
            plan = MatrixConfigurationLoader().load_configs(args.options)
            return BenchmarkMatrixJob(plan).run_job()
        configs = RunConfigurationLoader().load_configs(args.options)
        return BenchmarkJob(configs).run_job(args.command)
    except ConfigurationError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_ERROR


def cli() -> None:
    """Console script"""
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    sys_args = sys.argv[1:]
    sys.exit(main(sys_args))
