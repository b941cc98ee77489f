"""Content digests for artifacts named in the run manifest."""

import hashlib
import json
from pathlib import Path
from typing import Iterable

_READ_BLOCK = 1 << 20


def sha256_file(file_path: Path) -> str:
    """
    Hex sha256 digest of a file's bytes.
    Args:
        file_path (Path): File to digest.

    Returns:
        str: Hex digest.
    """
    digest = hashlib.sha256()
    with open(file_path, "rb") as f:
        for block in iter(lambda: f.read(_READ_BLOCK), b""):
            digest.update(block)
    return digest.hexdigest()


def sha256_json_excluding(
    file_path: Path, excluded_keys: Iterable[str]
) -> str:
    """
    Hex sha256 digest of a json object file with some top level keys removed.
    The remaining object is re-serialized with sorted keys, so the digest
    does not depend on the key order in the file.
    Args:
        file_path (Path): A json file holding an object.
        excluded_keys (Iterable[str]): Top level keys to leave out.

    Returns:
        str: Hex digest.
    """
    with open(file_path, encoding="utf-8") as f:
        contents = json.load(f)
    for key in excluded_keys:
        contents.pop(key, None)
    canonical = json.dumps(contents, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def sha256_text(text: str) -> str:
    """Hex sha256 digest of a utf-8 string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
