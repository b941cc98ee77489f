"""Index snapshots (index.rbi).

Layout, little-endian:
  header     magic b"RBI1", u8 kind code (0 flat, 1 hnsw, 2 ivf),
             u32 dim, u64 count
  params     flat: none
             hnsw: u32 m, u32 ef_construction, u32 ef_search, u64 seed
             ivf:  u32 nlist, u32 nprobe, u64 seed
  ids        count x (u32 byte length, utf-8 bytes)
  vectors    count x dim f32, row-major
  hnsw       u32 entry point (0xFFFFFFFF when empty), i32 max level,
             count x u8 node levels, then for each layer from 0 up and
             each node on that layer in row order: u32 degree, degree x u32
             neighbor rows
  ivf        u32 effective nlist, effective nlist x dim f32 centroids,
             then per cell: u32 length, length x u32 rows
"""

import struct
from pathlib import Path
from typing import BinaryIO, List

import numpy as np

from retrieval_bench.config_loader.run_configuration import (
    FlatExactIndexKind,
    HnswIndexKind,
    IvfFlatIndexKind,
)
from retrieval_bench.index.base import BuiltIndex
from retrieval_bench.index.flat_index import FlatExactIndex
from retrieval_bench.index.hnsw_index import HnswIndex
from retrieval_bench.index.ivf_index import IvfFlatIndex
from retrieval_bench.util.seed_utils import SEED_MASK

INDEX_MAGIC = b"RBI1"
HEADER = struct.Struct("<4sBIQ")
HNSW_PARAMS = struct.Struct("<IIIQ")
IVF_PARAMS = struct.Struct("<IIQ")
HNSW_ENTRY = struct.Struct("<Ii")
U32 = struct.Struct("<I")
NO_ENTRY_POINT = 0xFFFFFFFF
MAX_STORED_LEVEL = 255


def _write_u32_array(f: BinaryIO, values) -> None:
    """Length is not written"""
    f.write(np.asarray(values, dtype="<u4").tobytes())


def _read_exact(f: BinaryIO, size: int) -> bytes:
    """Read size bytes or fail on a truncated file"""
    data = f.read(size)
    if len(data) != size:
        raise ValueError("Index snapshot is truncated")
    return data


def _read_u32(f: BinaryIO) -> int:
    """One u32"""
    return U32.unpack(_read_exact(f, U32.size))[0]


def _read_u32_array(f: BinaryIO, length: int) -> np.ndarray:
    """length u32 values as int64"""
    raw = _read_exact(f, 4 * length)
    return np.frombuffer(raw, dtype="<u4").astype(np.int64)


def save_index(index: BuiltIndex, file_path: Path) -> Path:
    """
    Write a snapshot of a built index.
    Args:
        index (BuiltIndex): Any built index.
        file_path (Path): Destination, conventionally index.rbi.

    Returns:
        Path: file_path.
    """
    file_path = Path(file_path)
    with open(file_path, "wb") as f:
        f.write(
            HEADER.pack(INDEX_MAGIC, index.KIND_CODE, index.dim, index.count)
        )
        if isinstance(index, HnswIndex):
            f.write(
                HNSW_PARAMS.pack(
                    index.kind.m,
                    index.kind.ef_construction,
                    index.kind.ef_search,
                    index.seed & SEED_MASK,
                )
            )
        elif isinstance(index, IvfFlatIndex):
            f.write(
                IVF_PARAMS.pack(
                    index.kind.nlist, index.kind.nprobe, index.seed & SEED_MASK
                )
            )
        for chunk_id in index.ids:
            encoded = chunk_id.encode("utf-8")
            f.write(U32.pack(len(encoded)))
            f.write(encoded)
        f.write(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())
        if isinstance(index, HnswIndex):
            _write_hnsw(f, index)
        elif isinstance(index, IvfFlatIndex):
            _write_ivf(f, index)
    return file_path


def _write_hnsw(f: BinaryIO, index: HnswIndex) -> None:
    """Graph section"""
    if index.levels and max(index.levels) > MAX_STORED_LEVEL:
        raise ValueError("HNSW level too deep to store")
    entry = NO_ENTRY_POINT if index.entry_point < 0 else index.entry_point
    f.write(HNSW_ENTRY.pack(entry, index.max_level))
    f.write(np.asarray(index.levels, dtype=np.uint8).tobytes())
    for layer, graph in enumerate(index.graphs):
        for node in range(index.count):
            if index.levels[node] < layer:
                continue
            neighbors = graph[node]
            f.write(U32.pack(len(neighbors)))
            _write_u32_array(f, neighbors)


def _write_ivf(f: BinaryIO, index: IvfFlatIndex) -> None:
    """Centroids and posting lists"""
    f.write(U32.pack(index.effective_nlist))
    f.write(np.ascontiguousarray(index.centroids, dtype="<f4").tobytes())
    for rows in index.posting_lists:
        f.write(U32.pack(len(rows)))
        _write_u32_array(f, rows)


def load_index(file_path: Path) -> BuiltIndex:
    """
    Read a snapshot written by save_index. The loaded index returns the same
    hits as the one that was saved.
    Args:
        file_path (Path): Snapshot file.

    Returns:
        BuiltIndex
    """
    with open(file_path, "rb") as f:
        magic, kind_code, dim, count = HEADER.unpack(
            _read_exact(f, HEADER.size)
        )
        if magic != INDEX_MAGIC:
            raise ValueError(f"{file_path} is not an index snapshot")
        if kind_code == HnswIndex.KIND_CODE:
            m, ef_construction, ef_search, seed = HNSW_PARAMS.unpack(
                _read_exact(f, HNSW_PARAMS.size)
            )
        elif kind_code == IvfFlatIndex.KIND_CODE:
            nlist, nprobe, seed = IVF_PARAMS.unpack(
                _read_exact(f, IVF_PARAMS.size)
            )
        elif kind_code != FlatExactIndex.KIND_CODE:
            raise ValueError(f"Unknown index kind code {kind_code}")
        ids: List[str] = []
        for _ in range(count):
            length = _read_u32(f)
            ids.append(_read_exact(f, length).decode("utf-8"))
        vectors = (
            np.frombuffer(_read_exact(f, 4 * count * dim), dtype="<f4")
            .reshape(count, dim)
            .astype(np.float32)
        )
        if kind_code == FlatExactIndex.KIND_CODE:
            return FlatExactIndex(FlatExactIndexKind(), vectors, ids)
        if kind_code == HnswIndex.KIND_CODE:
            kind = HnswIndexKind(
                m=m, ef_construction=ef_construction, ef_search=ef_search
            )
            return _read_hnsw(f, kind, vectors, ids, seed)
        kind = IvfFlatIndexKind(nlist=nlist, nprobe=nprobe)
        return _read_ivf(f, kind, vectors, ids, seed)


def _read_hnsw(f: BinaryIO, kind, vectors, ids, seed) -> HnswIndex:
    """Graph section"""
    count = len(ids)
    entry, max_level = HNSW_ENTRY.unpack(_read_exact(f, HNSW_ENTRY.size))
    levels = np.frombuffer(_read_exact(f, count), dtype=np.uint8).tolist()
    graphs = []
    for layer in range(max_level + 1):
        graph = {}
        for node in range(count):
            if levels[node] < layer:
                continue
            degree = _read_u32(f)
            graph[node] = _read_u32_array(f, degree).tolist()
        graphs.append(graph)
    entry_point = -1 if entry == NO_ENTRY_POINT else entry
    return HnswIndex(kind, vectors, ids, levels, graphs, entry_point, seed)


def _read_ivf(f: BinaryIO, kind, vectors, ids, seed) -> IvfFlatIndex:
    """Centroids and posting lists"""
    n_lists = _read_u32(f)
    dim = vectors.shape[1]
    centroids = (
        np.frombuffer(_read_exact(f, 4 * n_lists * dim), dtype="<f4")
        .reshape(n_lists, dim)
        .astype(np.float32)
    )
    posting_lists = []
    for _ in range(n_lists):
        length = _read_u32(f)
        posting_lists.append(_read_u32_array(f, length))
    return IvfFlatIndex(kind, vectors, ids, centroids, posting_lists, seed)
