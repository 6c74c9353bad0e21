"""Analytic signed-distance obstacles and graph pruning.

Three primitives — box, capped cylinder, sphere — each posed by a center
and a unit quaternion (w, x, y, z).  Signed distance is evaluated in the
obstacle's local frame, negative inside, zero on the surface, positive
outside, and is exact (true Euclidean distance) everywhere.

A centerline is collision-free when every sample point keeps at least the
tube radius rho_tube away from every obstacle; its clearance is

    c = min_over_points_and_obstacles( phi(p) - rho_tube )

and a node survives pruning only if c > 0.  Edges are additionally swept:
straight-line shape interpolants between the two endpoint centerlines are
checked at interior parameters t = s / (steps + 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import ShapeGraph
from .library import ShapeLibrary

DEFAULT_TUBE_RADIUS = 0.02
DEFAULT_SWEEP_STEPS = 5

_KINDS = ("box", "cylinder", "sphere")
_DIM_COUNT = {"box": 3, "cylinder": 2, "sphere": 1}
_QUAT_TOL = 1e-9


class ObstacleError(ValueError):
    """Obstacle parameters are invalid."""


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class Obstacle:
    """One posed primitive.

    dims semantics: box -> half-extents (hx, hy, hz); cylinder -> (radius,
    half_height) about the local z axis; sphere -> (radius,).
    """

    kind: str
    center: tuple[float, float, float]
    quat: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    dims: tuple[float, ...] = ()
    _rotation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ObstacleError(f"unknown obstacle kind {self.kind!r}; expected one of {_KINDS}")
        center = tuple(float(v) for v in self.center)
        quat = np.asarray(self.quat, dtype=np.float64)
        if quat.shape != (4,):
            raise ObstacleError(f"quat needs 4 components (w, x, y, z), got {self.quat!r}")
        norm = float(np.linalg.norm(quat))
        if abs(norm - 1.0) > _QUAT_TOL:
            raise ObstacleError(f"quat norm {norm!r} is not 1 within {_QUAT_TOL}")
        dims = tuple(float(v) for v in self.dims)
        want = _DIM_COUNT[self.kind]
        if len(dims) != want:
            raise ObstacleError(f"{self.kind} needs {want} dims, got {len(dims)}")
        if any(d <= 0.0 for d in dims):
            raise ObstacleError(f"{self.kind} dims must be positive, got {dims}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "quat", tuple(float(v) for v in quat))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "_rotation", _quat_to_matrix(quat))

    @classmethod
    def box(cls, center, half_extents, quat=(1.0, 0.0, 0.0, 0.0)) -> "Obstacle":
        return cls(kind="box", center=tuple(center), quat=tuple(quat),
                   dims=tuple(half_extents))

    @classmethod
    def cylinder(cls, center, radius, half_height, quat=(1.0, 0.0, 0.0, 0.0)) -> "Obstacle":
        return cls(kind="cylinder", center=tuple(center), quat=tuple(quat),
                   dims=(radius, half_height))

    @classmethod
    def sphere(cls, center, radius) -> "Obstacle":
        return cls(kind="sphere", center=tuple(center), dims=(radius,))

    def to_local(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - np.asarray(self.center)) @ self._rotation

    def signed_distance(self, points) -> np.ndarray:
        """Exact signed distance for an (..., 3) array of world points."""
        p = np.asarray(points, dtype=np.float64)
        squeeze = p.ndim == 1
        local = self.to_local(p.reshape(-1, 3))
        if self.kind == "sphere":
            phi = np.linalg.norm(local, axis=1) - self.dims[0]
        elif self.kind == "box":
            q = np.abs(local) - np.asarray(self.dims)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
            inside = np.minimum(q.max(axis=1), 0.0)
            phi = outside + inside
        else:  # capped cylinder: reduce to a 2D box in (radial, axial)
            dr = np.hypot(local[:, 0], local[:, 1]) - self.dims[0]
            dz = np.abs(local[:, 2]) - self.dims[1]
            q = np.stack([dr, dz], axis=1)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
            inside = np.minimum(q.max(axis=1), 0.0)
            phi = outside + inside
        return phi[0] if squeeze else phi.reshape(p.shape[:-1])


def scene_distance(obstacles: Sequence[Obstacle], points) -> np.ndarray:
    """Pointwise minimum signed distance over all obstacles (+inf if none)."""
    p = np.asarray(points, dtype=np.float64)
    out_shape = p.shape[:-1] if p.ndim > 1 else ()
    best = np.full(out_shape, np.inf)
    for obs in obstacles:
        best = np.minimum(best, obs.signed_distance(p))
    return best if out_shape else float(best)


def shape_clearance(points: np.ndarray, obstacles: Sequence[Obstacle],
                    rho_tube: float = DEFAULT_TUBE_RADIUS) -> float:
    """min over sample points of (scene distance - tube radius)."""
    if not obstacles:
        return float("inf")
    phi = scene_distance(obstacles, np.asarray(points, dtype=np.float64).reshape(-1, 3))
    return float(phi.min() - rho_tube)


@dataclass(frozen=True)
class ClearanceReport:
    """Per-node clearance of a whole library against one obstacle set."""

    clearance: np.ndarray  # (N,) f64, +inf when there are no obstacles
    rho_tube: float

    @property
    def alive(self) -> np.ndarray:
        return self.clearance > 0.0

    def alive_count(self) -> int:
        return int(self.alive.sum())


def node_clearances(lib: ShapeLibrary, obstacles: Sequence[Obstacle],
                    rho_tube: float = DEFAULT_TUBE_RADIUS,
                    chunk: int = 4096) -> ClearanceReport:
    """Clearance of every library centerline (chunked over nodes)."""
    if rho_tube < 0.0:
        raise ValueError(f"rho_tube must be >= 0, got {rho_tube}")
    n = lib.n
    if not obstacles:
        return ClearanceReport(clearance=np.full(n, np.inf), rho_tube=rho_tube)
    clearance = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        pts = lib.points[lo:hi].reshape(-1, 3)
        phi = scene_distance(obstacles, pts).reshape(hi - lo, lib.n_z)
        clearance[lo:hi] = phi.min(axis=1) - rho_tube
    return ClearanceReport(clearance=clearance, rho_tube=rho_tube)


def prune_nodes(graph: ShapeGraph, report: ClearanceReport) -> int:
    """Clear alive flags of nodes with clearance <= 0 and their edges.

    Returns the number of nodes removed.  Flags are edited in place.
    """
    alive = report.alive
    if alive.shape[0] != graph.node_count:
        raise ValueError(
            f"clearance for {alive.shape[0]} nodes, graph has {graph.node_count}")
    removed = int(graph.node_alive.sum())
    graph.node_alive &= alive
    removed -= int(graph.node_alive.sum())
    np.logical_and(
        graph.edge_alive,
        graph.node_alive[graph.edges_i] & graph.node_alive[graph.edges_j],
        out=graph.edge_alive,
    )
    return removed


def sweep_edges(graph: ShapeGraph, lib: ShapeLibrary,
                obstacles: Sequence[Obstacle],
                rho_tube: float = DEFAULT_TUBE_RADIUS,
                steps: int = DEFAULT_SWEEP_STEPS,
                margin: float = 0.0,
                chunk: int = 1024) -> int:
    """Drop edges whose swept interpolants dip into an obstacle.

    For each still-alive edge (i, j) the intermediate centerlines
    (1 - t) * R_i + t * R_j at t = s / (steps + 1), s = 1..steps, must keep
    clearance strictly above `margin`.  Returns the number of edges removed;
    edge flags are edited in place.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if not obstacles or steps == 0:
        return 0
    alive_ids = np.nonzero(graph.edge_alive)[0]
    ts = np.arange(1, steps + 1, dtype=np.float64) / (steps + 1)
    removed = 0
    for lo in range(0, alive_ids.shape[0], chunk):
        ids = alive_ids[lo:lo + chunk]
        a = lib.points[graph.edges_i[ids]]          # (c, n_z, 3)
        b = lib.points[graph.edges_j[ids]]
        ok = np.ones(ids.shape[0], dtype=bool)
        for t in ts:
            mid = (1.0 - t) * a + t * b
            phi = scene_distance(obstacles, mid.reshape(-1, 3)).reshape(ids.shape[0], lib.n_z)
            ok &= (phi.min(axis=1) - rho_tube) > margin
        removed += int(np.count_nonzero(~ok))
        graph.edge_alive[ids[~ok]] = False
    return removed


def prune_graph(graph: ShapeGraph, lib: ShapeLibrary,
                obstacles: Iterable[Obstacle],
                rho_tube: float = DEFAULT_TUBE_RADIUS,
                sweep_steps: int = DEFAULT_SWEEP_STEPS,
                margin: float = 0.0) -> ClearanceReport:
    """Node pruning followed by edge sweeping, in place; returns clearances."""
    obstacles = list(obstacles)
    report = node_clearances(lib, obstacles, rho_tube)
    prune_nodes(graph, report)
    sweep_edges(graph, lib, obstacles, rho_tube, steps=sweep_steps, margin=margin)
    return report
