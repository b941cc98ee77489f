"""The digest-stamped record of a run: which configuration produced which
artifacts."""
import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence

from pydantic import BaseModel

from retrieval_bench import __version__
from retrieval_bench.config_loader.run_configuration import RunConfig
from retrieval_bench.readers.artifact_readers import ArtifactFiles
from retrieval_bench.util.file_utils import (
    sha256_file,
    sha256_json_excluding,
    sha256_text,
)

# Keys left out of the report.json digest
REPORT_DIGEST_EXCLUDES = ["timing"]


class ArtifactDigest(BaseModel):
    """One emitted file. path is relative to the output directory."""

    path: str
    sha256: str
    digest_excludes: List[str] = []


class RunManifest(BaseModel):
    """Config hash, artifact digests, stage timings and tool version"""

    tool_version: str
    config_hash: str
    artifacts: List[ArtifactDigest]
    stage_timings: Dict[str, float] = {}


def config_hash(config: RunConfig) -> str:
    """sha256 of the configuration serialized with sorted keys"""
    canonical = json.dumps(
        config.model_dump(mode="json"), sort_keys=True, ensure_ascii=False
    )
    return sha256_text(canonical)


def _digest(output_dir: Path, relative_path: str) -> ArtifactDigest:
    """Digest one artifact; report.json leaves out its timing block"""
    file_path = output_dir / relative_path
    if relative_path == ArtifactFiles.report_json.value:
        return ArtifactDigest(
            path=relative_path,
            sha256=sha256_json_excluding(file_path, REPORT_DIGEST_EXCLUDES),
            digest_excludes=REPORT_DIGEST_EXCLUDES,
        )
    return ArtifactDigest(path=relative_path, sha256=sha256_file(file_path))


def build_manifest(
    config: RunConfig,
    output_dir: Path,
    artifact_paths: Sequence[Path],
    stage_timings: Dict[str, float],
) -> RunManifest:
    """
    Digest the artifacts and write manifest.json.
    Args:
        config (RunConfig): Configuration of the run.
        output_dir (Path): Directory holding the artifacts.
        artifact_paths (Sequence[Path]): Files to record, inside output_dir.
        stage_timings (Dict[str, float]): Seconds per stage.

    Returns:
        RunManifest
    """
    output_dir = Path(output_dir)
    relative_paths = sorted(
        {
            Path(p).resolve().relative_to(output_dir.resolve()).as_posix()
            for p in artifact_paths
        }
    )
    manifest = RunManifest(
        tool_version=__version__,
        config_hash=config_hash(config),
        artifacts=[_digest(output_dir, p) for p in relative_paths],
        stage_timings=stage_timings,
    )
    manifest_path = output_dir / ArtifactFiles.manifest.value
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(manifest.model_dump_json(indent=2) + "\n")
    logging.info(f"Wrote manifest with {len(relative_paths)} artifacts")
    return manifest


def load_manifest(output_dir: Path) -> RunManifest:
    """Parse output_dir/manifest.json"""
    manifest_path = Path(output_dir) / ArtifactFiles.manifest.value
    with open(manifest_path, encoding="utf-8") as f:
        return RunManifest.model_validate_json(f.read())


def verify_manifest(output_dir: Path) -> List[str]:
    """
    Recompute every digest in manifest.json.
    Args:
        output_dir (Path): Directory holding manifest.json.

    Returns:
        List[str]: Paths that are missing or whose digest changed. Empty
        when the run is intact.
    """
    output_dir = Path(output_dir)
    manifest = load_manifest(output_dir)
    mismatches = []
    for artifact in manifest.artifacts:
        if not (output_dir / artifact.path).is_file():
            mismatches.append(artifact.path)
            continue
        if _digest(output_dir, artifact.path).sha256 != artifact.sha256:
            mismatches.append(artifact.path)
    if mismatches:
        logging.warning(f"Manifest mismatches: {mismatches}")
    return mismatches
