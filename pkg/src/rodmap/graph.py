"""Exact k-nearest-neighbor graph over library shapes.

Similarity is the RMS centerline metric

    d_rms(A, B) = sqrt( (1/n_z) * sum_kj (A_kj - B_kj)^2 ),

a Euclidean norm on flattened shapes scaled by 1/sqrt(n_z).  The graph is
the symmetric union of each node's k exact nearest neighbors: an edge
(i, j) exists when i is among j's neighbors or vice versa, so every node
has degree >= k.

Neighbor search is a blocked brute-force scan: a float32 GEMM pass screens
candidates, float64 re-evaluation fixes the final ranking, and any row
whose k-th distance is not clearly inside the screened set falls back to a
full float64 scan.  The produced neighbor sets are exact (ties broken by
lower node index), the float32 pass only accelerates.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .library import ShapeLibrary

GRAPH_MAGIC = b"SSGR"
GRAPH_VERSION = 1
_GRAPH_HEADER = struct.Struct("<4sIQIQ32s")

_SCREEN_BYTES = 192 * 1024 * 1024   # scores block budget for the f32 pass
_SCREEN_PAD = 8                     # extra screened candidates beyond k
_ROW_CHUNK = 256                    # rows refined per float64 gather
_PAIR_CHUNK = 65536                 # edge pairs per distance chunk
_EXACT_BYTES = 256 * 1024 * 1024    # scores budget for the f64 rescue pass


class GraphFormatError(Exception):
    """Graph file is malformed or truncated."""


class DigestMismatchError(Exception):
    """Graph was built from a different library than the one provided."""


class AllNodesPrunedError(RuntimeError):
    """No alive node is left to snap a query to."""


def _row_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise squared Euclidean distances between flattened shapes.

    Shared by every d_rms computation in the package so stored edge values
    and shape_distance() agree bit for bit.
    """
    diff = a - b
    diff *= diff
    return diff.sum(axis=1)


def shape_distance(a, b) -> float:
    """RMS centerline distance between two shapes of equal n_z."""
    pa = a.points if hasattr(a, "points") else np.asarray(a, dtype=np.float64)
    pb = b.points if hasattr(b, "points") else np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError(f"shape grids differ: {pa.shape} vs {pb.shape}")
    n_z = pa.shape[0]
    sq = _row_sq_dists(pa.reshape(1, -1), pb.reshape(1, -1))[0]
    return float(np.sqrt(sq / n_z))


@dataclass
class ShapeGraph:
    """Undirected k-NN graph in CSR form with alive flags for pruning.

    Edges are stored once with i < j; adjacency rows are sorted by neighbor
    index and carry the id of the shared edge.  node_alive/edge_alive start
    all-true and are cleared by the sdf module.
    """

    node_count: int
    k: int
    edges_i: np.ndarray     # (E,) u32
    edges_j: np.ndarray     # (E,) u32, edges_i < edges_j
    edge_rms: np.ndarray    # (E,) f64
    adj_offsets: np.ndarray  # (N+1,) i64
    adj_nodes: np.ndarray   # (2E,) u32
    adj_edges: np.ndarray   # (2E,) u32
    node_alive: np.ndarray  # (N,) bool
    edge_alive: np.ndarray  # (E,) bool
    library_digest: bytes

    @property
    def edge_count(self) -> int:
        return self.edges_i.shape[0]

    def neighbors(self, i: int):
        """(neighbor ids, edge ids) for node i, sorted by neighbor id."""
        lo, hi = self.adj_offsets[i], self.adj_offsets[i + 1]
        return self.adj_nodes[lo:hi], self.adj_edges[lo:hi]

    def degree(self, i: int) -> int:
        return int(self.adj_offsets[i + 1] - self.adj_offsets[i])

    def alive_node_count(self) -> int:
        return int(self.node_alive.sum())

    def alive_edge_count(self) -> int:
        return int(self.edge_alive.sum())

    def with_fresh_masks(self) -> "ShapeGraph":
        """Copy sharing topology arrays but with private all-alive masks."""
        return replace(
            self,
            node_alive=np.ones(self.node_count, dtype=bool),
            edge_alive=np.ones(self.edge_count, dtype=bool),
        )


def _screen_block_rows(n: int) -> int:
    return max(16, min(n, _SCREEN_BYTES // max(1, 4 * n)))


def _exact_rows_knn(x_flat: np.ndarray, rows: np.ndarray, k: int) -> np.ndarray:
    """Full float64 neighbor selection for many query rows (rescue path).

    A float64 GEMM expansion q.q + s.s - 2 q.s shortlists candidates with a
    cushion far wider than its worst-case rounding error; the shortlist is
    then re-ranked with the same direct-difference arithmetic every other
    path uses, so the result is identical to scanning each row in full.
    """
    n = x_flat.shape[0]
    sq = np.einsum("ij,ij->i", x_flat, x_flat)
    # expansion error is ~1e-13 relative to the largest squared norm;
    # 1e-10 keeps three orders of magnitude of slack
    eta = 1e-10 * max(float(sq.max()), 1e-30)
    batch = max(16, min(rows.shape[0], _EXACT_BYTES // max(1, 8 * n)))
    out = np.empty((rows.shape[0], k), dtype=np.int64)
    for blo in range(0, rows.shape[0], batch):
        r = rows[blo:blo + batch]
        scores = sq[r][:, None] + sq[None, :]
        scores -= (2.0 * x_flat[r]) @ x_flat.T
        scores[np.arange(r.shape[0]), r] = np.inf
        kth = np.partition(scores, k - 1, axis=1)[:, k - 1]
        for pos, i in enumerate(r):
            cand = np.flatnonzero(scores[pos] <= kth[pos] + eta)
            d2 = _row_sq_dists(x_flat[cand], x_flat[i][None, :])
            order = np.lexsort((cand, d2))  # ties go to the lower id
            out[blo + pos] = cand[order[:k]]
    return out


def _knn_block(x_flat, x32, sq32, lo, hi, k, pad, margin):
    """k nearest neighbors for query rows [lo, hi) via the float32 screen.

    Returns the neighbor ids plus the global indices of rows whose k-th
    distance lands too close to the screening cutoff to be trusted; those
    rows are re-resolved exactly by the caller.
    """
    b = hi - lo
    scores = sq32[lo:hi, None] + sq32[None, :]
    scores -= (2.0 * x32[lo:hi]) @ x32.T
    scores[np.arange(b), np.arange(lo, hi)] = np.inf

    cand = np.argpartition(scores, pad - 1, axis=1)[:, :pad]
    boundary = np.take_along_axis(scores, cand, axis=1).max(axis=1).astype(np.float64)

    nbrs = np.empty((b, k), dtype=np.int64)
    ambiguous_rows = []
    n_z3 = x_flat.shape[1]
    for clo in range(0, b, _ROW_CHUNK):
        chi = min(b, clo + _ROW_CHUNK)
        idx = np.sort(cand[clo:chi], axis=1)  # ascending ids make stable sort tie-break by id
        gathered = x_flat[idx.reshape(-1)].reshape(chi - clo, pad, n_z3)
        diff = gathered - x_flat[lo + clo:lo + chi, None, :]
        diff *= diff
        d2 = diff.sum(axis=2)
        order = np.argsort(d2, axis=1, kind="stable")
        idx = np.take_along_axis(idx, order, axis=1)
        d2 = np.take_along_axis(d2, order, axis=1)
        nbrs[clo:chi] = idx[:, :k]
        ambiguous = np.nonzero(d2[:, k - 1] >= boundary[clo:chi] - margin)[0]
        if ambiguous.size:
            ambiguous_rows.append(lo + clo + ambiguous.astype(np.int64))
    amb = (np.concatenate(ambiguous_rows) if ambiguous_rows
           else np.empty(0, dtype=np.int64))
    return nbrs, amb


def build_knn_graph(lib: ShapeLibrary, k: int, threads: int = 1,
                    library_digest: bytes | None = None) -> ShapeGraph:
    """Build the exact symmetric k-NN graph of a shape library.

    threads parallelizes the screening blocks; results are written to
    disjoint slots so the graph is identical for any thread count.
    """
    n = lib.n
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if k >= n:
        raise ValueError(f"need k < N, got k={k}, N={n}")

    x_flat = np.ascontiguousarray(lib.points.reshape(n, -1))
    x32 = x_flat.astype(np.float32)
    sq32 = np.einsum("ij,ij->i", x32, x32)
    # float32 screening is good to ~1e-6 relative; rows whose k-th distance
    # lands within this cushion of the screen cutoff rerun in full float64
    margin = 3e-5 * max(float(sq32.max()), 1e-30)

    pad = min(n - 1, k + _SCREEN_PAD)
    block = _screen_block_rows(n)
    nbrs = np.empty((n, k), dtype=np.int64)

    spans = [(lo, min(n, lo + block)) for lo in range(0, n, block)]
    ambiguous_parts: list[np.ndarray] = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(_knn_block, x_flat, x32, sq32, lo, hi, k, pad, margin)
                for lo, hi in spans
            ]
            for (lo, hi), fut in zip(spans, futs):
                nbrs[lo:hi], amb = fut.result()
                ambiguous_parts.append(amb)
    else:
        for lo, hi in spans:
            nbrs[lo:hi], amb = _knn_block(x_flat, x32, sq32, lo, hi, k, pad, margin)
            ambiguous_parts.append(amb)

    # rows the float32 screen could not settle rerun in full float64; the
    # batch is ordered by row id so the result is thread-count independent
    ambiguous_rows = np.sort(np.concatenate(ambiguous_parts))
    if ambiguous_rows.size:
        nbrs[ambiguous_rows] = _exact_rows_knn(x_flat, ambiguous_rows, k)

    # symmetric union, deduplicated, ordered by (i, j)
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = nbrs.reshape(-1)
    code = np.minimum(src, dst) * n + np.maximum(src, dst)
    code = np.unique(code)
    edges_i = (code // n).astype(np.uint32)
    edges_j = (code % n).astype(np.uint32)
    e = edges_i.shape[0]

    edge_rms = np.empty(e)
    for lo in range(0, e, _PAIR_CHUNK):
        hi = min(e, lo + _PAIR_CHUNK)
        sq = _row_sq_dists(x_flat[edges_i[lo:hi]], x_flat[edges_j[lo:hi]])
        edge_rms[lo:hi] = np.sqrt(sq / lib.n_z)

    row = np.concatenate([edges_i, edges_j]).astype(np.int64)
    col = np.concatenate([edges_j, edges_i])
    eid = np.concatenate([np.arange(e, dtype=np.uint32)] * 2)
    order = np.lexsort((col, row))
    adj_nodes = col[order].astype(np.uint32)
    adj_edges = eid[order]
    counts = np.bincount(row, minlength=n)
    adj_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=adj_offsets[1:])

    if library_digest is None:
        library_digest = lib.content_digest()

    return ShapeGraph(
        node_count=n, k=k,
        edges_i=edges_i, edges_j=edges_j, edge_rms=edge_rms,
        adj_offsets=adj_offsets, adj_nodes=adj_nodes, adj_edges=adj_edges,
        node_alive=np.ones(n, dtype=bool), edge_alive=np.ones(e, dtype=bool),
        library_digest=library_digest,
    )


def nearest_node(lib: ShapeLibrary, query, alive: np.ndarray | None = None) -> int:
    """Index of the library shape closest to `query` under d_rms.

    Ties go to the lowest index.  With an alive mask, dead nodes are
    excluded; if every node is dead, AllNodesPrunedError is raised.
    """
    q = query.points if hasattr(query, "points") else np.asarray(query, dtype=np.float64)
    if q.shape != (lib.n_z, 3):
        raise ValueError(f"query shape {q.shape} does not match library grid ({lib.n_z}, 3)")
    x_flat = lib.points.reshape(lib.n, -1)
    qf = q.reshape(1, -1)
    d2 = np.empty(lib.n)
    for lo in range(0, lib.n, 16384):
        hi = min(lib.n, lo + 16384)
        d2[lo:hi] = _row_sq_dists(x_flat[lo:hi], qf)
    if alive is not None:
        d2 = np.where(alive, d2, np.inf)
        if not np.isfinite(d2.min()):
            raise AllNodesPrunedError("every library node has been pruned")
    return int(np.argmin(d2))


def nearest_node_by_tip(lib: ShapeLibrary, point, alive: np.ndarray | None = None) -> int:
    """Index of the library shape whose tip is closest to a workspace point."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    d2 = _row_sq_dists(lib.tips().copy(), p[None, :])
    if alive is not None:
        d2 = np.where(alive, d2, np.inf)
        if not np.isfinite(d2.min()):
            raise AllNodesPrunedError("every library node has been pruned")
    return int(np.argmin(d2))


def save_graph(graph: ShapeGraph, path) -> Path:
    """Write the binary adjacency file (see README for the layout)."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_GRAPH_HEADER.pack(
            GRAPH_MAGIC, GRAPH_VERSION, graph.node_count, graph.k,
            graph.edge_count, graph.library_digest,
        ))
        fh.write(graph.adj_offsets.astype("<i8", copy=False).tobytes())
        fh.write(graph.adj_nodes.astype("<u4", copy=False).tobytes())
        fh.write(graph.adj_edges.astype("<u4", copy=False).tobytes())
        fh.write(graph.edges_i.astype("<u4", copy=False).tobytes())
        fh.write(graph.edges_j.astype("<u4", copy=False).tobytes())
        fh.write(graph.edge_rms.astype("<f8", copy=False).tobytes())
    return path


def load_graph(path, expect_library_digest: bytes | None = None) -> ShapeGraph:
    """Load a graph file; alive masks come back all-true."""
    path = Path(path)
    size = path.stat().st_size
    if size < _GRAPH_HEADER.size:
        raise GraphFormatError(f"{path}: too short for a graph header")
    with open(path, "rb") as fh:
        magic, version, n, k, e, digest = _GRAPH_HEADER.unpack(fh.read(_GRAPH_HEADER.size))
        if magic != GRAPH_MAGIC:
            raise GraphFormatError(f"{path}: bad magic {magic!r}")
        if version != GRAPH_VERSION:
            raise GraphFormatError(f"{path}: unsupported version {version}")
        expected = _GRAPH_HEADER.size + (n + 1) * 8 + 2 * e * 4 * 2 + e * (4 + 4 + 8)
        if size != expected:
            raise GraphFormatError(f"{path}: expected {expected} bytes, got {size}")
        adj_offsets = np.fromfile(fh, dtype="<i8", count=n + 1)
        adj_nodes = np.fromfile(fh, dtype="<u4", count=2 * e)
        adj_edges = np.fromfile(fh, dtype="<u4", count=2 * e)
        edges_i = np.fromfile(fh, dtype="<u4", count=e)
        edges_j = np.fromfile(fh, dtype="<u4", count=e)
        edge_rms = np.fromfile(fh, dtype="<f8", count=e)
    if expect_library_digest is not None and digest != expect_library_digest:
        raise DigestMismatchError(
            f"{path}: graph was built from library {digest.hex()[:12]}..., "
            f"got library {expect_library_digest.hex()[:12]}..."
        )
    return ShapeGraph(
        node_count=int(n), k=int(k),
        edges_i=edges_i, edges_j=edges_j, edge_rms=edge_rms.astype(np.float64),
        adj_offsets=adj_offsets.astype(np.int64), adj_nodes=adj_nodes, adj_edges=adj_edges,
        node_alive=np.ones(n, dtype=bool), edge_alive=np.ones(e, dtype=bool),
        library_digest=digest,
    )


def graph_file_digest(path) -> bytes:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.digest()
