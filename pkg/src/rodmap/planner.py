"""Shortest-path queries over the pruned shape graph.

Dijkstra runs on the CSR adjacency with a manual binary heap compiled by
numba (pure-Python heaps are an order of magnitude too slow for sub-second
queries on graphs with millions of edges).  Heap entries order by
(cost, node index), so at equal cost the lower-index node settles first
and results are reproducible bit for bit.  Relaxation is strict-<, the
popped target ends the scan early, and dead nodes/edges are skipped.

Multi-waypoint routes are chains of point-to-point queries: consecutive
snapped waypoints are joined by Dijkstra legs and concatenated with the
duplicate joint nodes collapsed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .graph import ShapeGraph
from .library import ShapeLibrary


class UnreachableError(RuntimeError):
    """No alive path exists between two snapped waypoints."""

    def __init__(self, source: int, target: int, leg: int = 0):
        super().__init__(
            f"no path from node {source} to node {target} (leg {leg})")
        self.source = source
        self.target = target
        self.leg = leg


class DeadEndpointError(RuntimeError):
    """A query endpoint refers to a pruned (dead) node."""


@njit(cache=True)
def _dijkstra_csr(offsets, nbr_nodes, nbr_edges, edge_cost,
                  node_alive, edge_alive, source, target):
    """Single-source Dijkstra; returns (dist, parent) arrays.

    Early-exits once `target` is settled (pass target = -1 to disable).
    parent[v] is the predecessor on the first discovered cheapest path,
    -1 for the source and for unreached nodes.
    """
    n = offsets.shape[0] - 1
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)

    cap = 2 * edge_cost.shape[0] + 8
    heap_cost = np.empty(cap)
    heap_node = np.empty(cap, dtype=np.int64)
    size = 0

    dist[source] = 0.0
    heap_cost[0] = 0.0
    heap_node[0] = source
    size = 1

    while size > 0:
        c = heap_cost[0]
        u = heap_node[0]
        # pop: move last entry to the root and sift down
        size -= 1
        if size > 0:
            sc = heap_cost[size]
            sn = heap_node[size]
            pos = 0
            while True:
                left = 2 * pos + 1
                if left >= size:
                    break
                right = left + 1
                child = left
                if right < size and (
                    heap_cost[right] < heap_cost[left]
                    or (heap_cost[right] == heap_cost[left]
                        and heap_node[right] < heap_node[left])
                ):
                    child = right
                if heap_cost[child] < sc or (
                    heap_cost[child] == sc and heap_node[child] < sn
                ):
                    heap_cost[pos] = heap_cost[child]
                    heap_node[pos] = heap_node[child]
                    pos = child
                else:
                    break
            heap_cost[pos] = sc
            heap_node[pos] = sn

        if done[u]:
            continue
        done[u] = True
        if u == target:
            break

        for slot in range(offsets[u], offsets[u + 1]):
            if not edge_alive[nbr_edges[slot]]:
                continue
            v = nbr_nodes[slot]
            if done[v] or not node_alive[v]:
                continue
            nd = c + edge_cost[nbr_edges[slot]]
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                # push (nd, v): sift up
                pos = size
                size += 1
                while pos > 0:
                    up = (pos - 1) // 2
                    if heap_cost[up] > nd or (
                        heap_cost[up] == nd and heap_node[up] > v
                    ):
                        heap_cost[pos] = heap_cost[up]
                        heap_node[pos] = heap_node[up]
                        pos = up
                    else:
                        break
                heap_cost[pos] = nd
                heap_node[pos] = v

    return dist, parent


def shortest_path(graph: ShapeGraph, edge_cost: np.ndarray,
                  source: int, target: int) -> tuple[float, np.ndarray]:
    """Cheapest alive path between two alive nodes.

    Returns (total cost, node index array source..target).  Raises
    DeadEndpointError for pruned endpoints and UnreachableError when the
    alive subgraph does not connect them.
    """
    n = graph.node_count
    for name, idx in (("source", source), ("target", target)):
        if not 0 <= idx < n:
            raise IndexError(f"{name} node {idx} outside 0..{n - 1}")
        if not graph.node_alive[idx]:
            raise DeadEndpointError(f"{name} node {idx} has been pruned")
    if edge_cost.shape != (graph.edge_count,):
        raise ValueError(
            f"edge_cost has shape {edge_cost.shape}, expected ({graph.edge_count},)")
    if source == target:
        return 0.0, np.array([source], dtype=np.int64)

    dist, parent = _dijkstra_csr(
        graph.adj_offsets, graph.adj_nodes, graph.adj_edges,
        np.ascontiguousarray(edge_cost, dtype=np.float64),
        graph.node_alive, graph.edge_alive,
        np.int64(source), np.int64(target),
    )
    if not np.isfinite(dist[target]):
        raise UnreachableError(source, target)

    chain = [int(target)]
    while chain[-1] != source:
        chain.append(int(parent[chain[-1]]))
    return float(dist[target]), np.asarray(chain[::-1], dtype=np.int64)


@dataclass(frozen=True)
class PlannedPath:
    """A multi-waypoint route through the graph.

    node_ids runs start..goal with duplicate leg joints collapsed;
    segment_boundaries[i] is the position of the i-th snapped waypoint
    inside node_ids (so boundaries has one entry per waypoint and starts
    at 0).
    """

    node_ids: np.ndarray
    waypoint_ids: tuple[int, ...]
    segment_boundaries: tuple[int, ...]
    leg_costs: tuple[float, ...]
    total_cost: float
    search_time: float

    @property
    def n_nodes(self) -> int:
        return int(self.node_ids.shape[0])


def plan_route(graph: ShapeGraph, edge_cost: np.ndarray,
               waypoint_ids: Sequence[int]) -> PlannedPath:
    """Chain Dijkstra legs through snapped waypoint node ids, in order."""
    ids = [int(w) for w in waypoint_ids]
    if len(ids) < 2:
        raise ValueError(f"need at least start and goal, got {len(ids)} waypoints")
    t0 = time.perf_counter()
    nodes: list[int] = [ids[0]]
    boundaries: list[int] = [0]
    leg_costs: list[float] = []
    for leg, (a, b) in enumerate(zip(ids[:-1], ids[1:])):
        try:
            cost, chain = shortest_path(graph, edge_cost, a, b)
        except UnreachableError as exc:
            raise UnreachableError(a, b, leg=leg) from exc
        leg_costs.append(cost)
        nodes.extend(int(v) for v in chain[1:])
        boundaries.append(len(nodes) - 1)
    search_time = time.perf_counter() - t0
    return PlannedPath(
        node_ids=np.asarray(nodes, dtype=np.int64),
        waypoint_ids=tuple(ids),
        segment_boundaries=tuple(boundaries),
        leg_costs=tuple(leg_costs),
        total_cost=float(sum(leg_costs)),
        search_time=search_time,
    )


@dataclass(frozen=True)
class PathMetrics:
    """Workspace and activation summaries of a planned route."""

    n_nodes: int
    tip_path_length: float   # sum of consecutive tip displacements
    activation_energy: float  # sum over nodes of ||gamma||^2
    activation_tv: float     # sum over steps of ||gamma_{k+1} - gamma_k||
    search_time: float

    def as_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "tip_path_length": self.tip_path_length,
            "activation_energy": self.activation_energy,
            "activation_tv": self.activation_tv,
            "search_time": self.search_time,
        }


def compute_metrics(lib: ShapeLibrary, path: PlannedPath) -> PathMetrics:
    """Evaluate tip-path length, activation energy, and activation TV."""
    ids = path.node_ids
    tips = lib.points[ids, -1, :]
    gammas = lib.gammas[ids]
    if ids.shape[0] > 1:
        tip_len = float(np.linalg.norm(np.diff(tips, axis=0), axis=1).sum())
        tv = float(np.linalg.norm(np.diff(gammas, axis=0), axis=1).sum())
    else:
        tip_len = 0.0
        tv = 0.0
    energy = float(np.einsum("ni,ni->n", gammas, gammas).sum())
    return PathMetrics(
        n_nodes=path.n_nodes,
        tip_path_length=tip_len,
        activation_energy=energy,
        activation_tv=tv,
        search_time=path.search_time,
    )
