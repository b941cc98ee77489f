"""Reads and writes the vectors.bin / vectors.ids pair.

vectors.bin layout, little-endian:
  magic      4 bytes  b"RBV1"
  dim        u32
  count      u64
  dtype      u8       1 = f32
  payload    count * dim f32, row-major

vectors.ids holds one chunk_id per line, in row order.
"""

import struct
from pathlib import Path
from typing import List, Tuple

import numpy as np

VECTORS_MAGIC = b"RBV1"
VECTORS_HEADER = struct.Struct("<4sIQB")
DTYPE_CODES = {1: np.dtype("<f4")}


def ids_path_for(vectors_path: Path) -> Path:
    """vectors.ids sits next to vectors.bin"""
    return Path(vectors_path).with_suffix(".ids")


def write_vectors(
    vectors_path: Path, vectors: np.ndarray, ids: List[str]
) -> Tuple[Path, Path]:
    """
    Write a matrix of vectors and their ids.
    Args:
        vectors_path (Path): Location of vectors.bin. The ids file is written
          next to it.
        vectors (np.ndarray): 2-D array, one row per id.
        ids (List[str]): Chunk ids in row order.

    Returns:
        Tuple[Path, Path]: Paths of the two files written.
    """
    matrix = np.ascontiguousarray(vectors, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got shape {matrix.shape}")
    if matrix.shape[0] != len(ids):
        raise ValueError(
            f"{matrix.shape[0]} vectors but {len(ids)} ids were given"
        )
    vectors_path = Path(vectors_path)
    with open(vectors_path, "wb") as f:
        f.write(
            VECTORS_HEADER.pack(
                VECTORS_MAGIC, matrix.shape[1], matrix.shape[0], 1
            )
        )
        f.write(matrix.tobytes(order="C"))
    ids_path = ids_path_for(vectors_path)
    with open(ids_path, "w", encoding="utf-8", newline="\n") as f:
        for chunk_id in ids:
            f.write(chunk_id + "\n")
    return vectors_path, ids_path


def read_vectors(vectors_path: Path) -> Tuple[np.ndarray, List[str]]:
    """
    Read vectors.bin through a memory map and the matching ids file.
    Args:
        vectors_path (Path): Location of vectors.bin.

    Returns:
        Tuple[np.ndarray, List[str]]: float32 matrix and ids in row order.
    """
    vectors_path = Path(vectors_path)
    with open(vectors_path, "rb") as f:
        header = f.read(VECTORS_HEADER.size)
    if len(header) != VECTORS_HEADER.size:
        raise ValueError(f"{vectors_path} is too short to hold a header")
    magic, dim, count, dtype_code = VECTORS_HEADER.unpack(header)
    if magic != VECTORS_MAGIC:
        raise ValueError(f"{vectors_path} is not a vectors file: {magic!r}")
    if dtype_code not in DTYPE_CODES:
        raise ValueError(f"Unknown dtype code {dtype_code} in {vectors_path}")
    expected_size = VECTORS_HEADER.size + count * dim * 4
    if vectors_path.stat().st_size != expected_size:
        raise ValueError(
            f"{vectors_path} should be {expected_size} bytes for "
            f"{count}x{dim} vectors"
        )
    if count == 0:
        matrix = np.empty((0, dim), dtype=np.float32)
    else:
        mapped = np.memmap(
            vectors_path,
            dtype=DTYPE_CODES[dtype_code],
            mode="r",
            offset=VECTORS_HEADER.size,
            shape=(count, dim),
        )
        matrix = np.array(mapped, dtype=np.float32)
        del mapped
    with open(ids_path_for(vectors_path), encoding="utf-8") as f:
        ids = [line.rstrip("\n") for line in f if line.rstrip("\n")]
    if len(ids) != count:
        raise ValueError(
            f"{vectors_path} holds {count} vectors but the ids file lists "
            f"{len(ids)}"
        )
    return matrix, ids
