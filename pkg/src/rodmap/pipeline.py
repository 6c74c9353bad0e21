"""Scenario-driven workflows: generate, build, plan, compare.

These functions sit between the scenario schema and the core modules and
are shared by the CLI and the HTTP service.  Loaded libraries and graphs
are cached per absolute path (keyed on file mtime+size) so a long-running
service pays the deserialization cost once.

Exported path files are deterministic: given the same scenario, library,
and graph bytes, the JSON and CSV bytes are identical across runs.  Wall
-clock search time is therefore reported alongside the document, never
inside it.
"""

from __future__ import annotations

import csv
import json
import logging
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .costs import CostWeightError, CostWeights, compute_edge_weights
from .graph import (
    AllNodesPrunedError,
    DigestMismatchError,
    GraphFormatError,
    ShapeGraph,
    build_knn_graph,
    graph_file_digest,
    load_graph,
    nearest_node,
    nearest_node_by_tip,
    save_graph,
)
from .library import (
    LibraryFormatError,
    ShapeLibrary,
    ShapeSourceError,
    generate_library,
    library_manifest_path,
    load_library,
    save_library,
)
from .planner import (
    DeadEndpointError,
    PathMetrics,
    PlannedPath,
    UnreachableError,
    compute_metrics,
    plan_route,
)
from .rod import ActivationBoundsError, ActuationMapError
from .scenario import Scenario, ScenarioError, WaypointSpec
from .sdf import ObstacleError, node_clearances, prune_nodes, sweep_edges

logger = logging.getLogger(__name__)

# Shared CLI/service failure taxonomy: bad inputs, impossible routes, bad files.
CONFIG_ERRORS = (ScenarioError, CostWeightError, ObstacleError,
                 ActivationBoundsError, ActuationMapError, ShapeSourceError,
                 DigestMismatchError, ValidationError, ValueError)
ROUTE_ERRORS = (UnreachableError, DeadEndpointError, AllNodesPrunedError)
IO_ERRORS = (OSError, LibraryFormatError, GraphFormatError)

LIBRARY_FILENAME = "library.ssgl"
GRAPH_FILENAME = "graph.ssgr"

_CACHE_SLOTS = 4
_cache_lock = threading.Lock()
_lib_cache: "OrderedDict[str, tuple[tuple[int, int], ShapeLibrary, bytes]]" = OrderedDict()
_graph_cache: "OrderedDict[str, tuple[tuple[int, int], ShapeGraph]]" = OrderedDict()


def _stat_sig(path: Path) -> tuple[int, int]:
    st = path.stat()
    return (st.st_mtime_ns, st.st_size)


def load_library_cached(path) -> tuple[ShapeLibrary, bytes]:
    """Library plus its content digest, from cache when the file is unchanged."""
    path = Path(path).resolve()
    key = str(path)
    sig = _stat_sig(path)
    with _cache_lock:
        hit = _lib_cache.get(key)
        if hit is not None and hit[0] == sig:
            _lib_cache.move_to_end(key)
            logger.debug("library cache hit: %s", key)
            return hit[1], hit[2]
    lib = load_library(path)
    digest = lib.content_digest()
    with _cache_lock:
        _lib_cache[key] = (sig, lib, digest)
        while len(_lib_cache) > _CACHE_SLOTS:
            _lib_cache.popitem(last=False)
    logger.info("loaded library %s (N=%d, n_z=%d)", key, lib.n, lib.n_z)
    return lib, digest


def load_graph_cached(path, expect_library_digest: bytes | None = None) -> ShapeGraph:
    """Graph with fresh alive masks, from cache when the file is unchanged."""
    path = Path(path).resolve()
    key = str(path)
    sig = _stat_sig(path)
    with _cache_lock:
        hit = _graph_cache.get(key)
        if hit is not None and hit[0] == sig:
            _graph_cache.move_to_end(key)
            graph = hit[1]
            logger.debug("graph cache hit: %s", key)
        else:
            graph = None
    if graph is None:
        graph = load_graph(path)
        with _cache_lock:
            _graph_cache[key] = (sig, graph)
            while len(_graph_cache) > _CACHE_SLOTS:
                _graph_cache.popitem(last=False)
        logger.info("loaded graph %s (N=%d, E=%d, k=%d)",
                    key, graph.node_count, graph.edge_count, graph.k)
    if expect_library_digest is not None and graph.library_digest != expect_library_digest:
        raise ScenarioError(
            f"graph {path} was built from a different library "
            f"({graph.library_digest.hex()[:12]}... vs {expect_library_digest.hex()[:12]}...)")
    return graph.with_fresh_masks()


def clear_caches() -> None:
    with _cache_lock:
        _lib_cache.clear()
        _graph_cache.clear()


def library_path_for(scenario: Scenario, out_dir=None) -> Path:
    if scenario.library.path is not None:
        return Path(scenario.library.path)
    if out_dir is None:
        raise ScenarioError("scenario has no library.path and no out-dir was given")
    return Path(out_dir) / LIBRARY_FILENAME


def graph_path_for(scenario: Scenario, out_dir=None) -> Path:
    if scenario.graph.path is not None:
        return Path(scenario.graph.path)
    if out_dir is None:
        raise ScenarioError("scenario has no graph.path and no out-dir was given")
    return Path(out_dir) / GRAPH_FILENAME


@dataclass(frozen=True)
class GenLibResult:
    library_path: Path
    manifest_path: Path
    n: int
    n_z: int
    seed: int
    digest_hex: str
    seconds: float


def run_gen_lib(scenario: Scenario, out_dir=None, seed: int | None = None,
                threads: int = 1) -> GenLibResult:
    """Sample activations, integrate every shape, and write the library."""
    del threads  # generation is vectorized; kept for interface symmetry
    t0 = time.perf_counter()
    source = scenario.rod.to_source()
    use_seed = scenario.library.seed if seed is None else seed
    lib = generate_library(source, scenario.library.size, scenario.rod.n_z, use_seed)
    path = library_path_for(scenario, out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_library(lib, path)
    digest = lib.content_digest()
    with _cache_lock:
        _lib_cache[str(path.resolve())] = (_stat_sig(path.resolve()), lib, digest)
    seconds = time.perf_counter() - t0
    logger.info("generated library %s: N=%d seed=%d in %.2fs", path, lib.n, use_seed, seconds)
    return GenLibResult(
        library_path=path, manifest_path=library_manifest_path(path),
        n=lib.n, n_z=lib.n_z, seed=use_seed,
        digest_hex=digest.hex(), seconds=seconds,
    )


@dataclass(frozen=True)
class BuildGraphResult:
    graph_path: Path
    n_nodes: int
    k: int
    n_edges: int
    digest_hex: str
    seconds: float


def run_build_graph(scenario: Scenario, out_dir=None, threads: int = 1) -> BuildGraphResult:
    """Build and write the exact k-NN graph for the scenario's library."""
    t0 = time.perf_counter()
    lib_path = library_path_for(scenario, out_dir)
    lib, lib_digest = load_library_cached(lib_path)
    graph = build_knn_graph(lib, scenario.graph.k, threads=threads,
                            library_digest=lib_digest)
    path = graph_path_for(scenario, out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_graph(graph, path)
    with _cache_lock:
        _graph_cache[str(path.resolve())] = (_stat_sig(path.resolve()), graph)
    seconds = time.perf_counter() - t0
    logger.info("built graph %s: E=%d k=%d in %.2fs", path, graph.edge_count,
                graph.k, seconds)
    return BuildGraphResult(
        graph_path=path, n_nodes=graph.node_count, k=graph.k,
        n_edges=graph.edge_count, digest_hex=graph_file_digest(path).hex(),
        seconds=seconds,
    )


@dataclass(frozen=True)
class PreparedScene:
    """Loaded artifacts with obstacle pruning already applied."""

    lib: ShapeLibrary
    graph: ShapeGraph
    pruned_nodes: int
    pruned_edges: int


def prepare_scene(scenario: Scenario, out_dir=None) -> PreparedScene:
    """Load library+graph and prune them against the scenario obstacles."""
    lib_path = library_path_for(scenario, out_dir)
    graph_path = graph_path_for(scenario, out_dir)
    lib, lib_digest = load_library_cached(lib_path)
    graph = load_graph_cached(graph_path, expect_library_digest=lib_digest)

    source = scenario.rod.to_source()
    if source.n_z != lib.n_z:
        raise ScenarioError(
            f"scenario rod has n_z={source.n_z} but library {lib_path} has n_z={lib.n_z}")
    if source.digest() != lib.source_digest:
        raise ScenarioError(
            f"scenario rod/actuation does not match the one library {lib_path} was built from")

    obstacles = scenario.to_obstacles()
    report = node_clearances(lib, obstacles, scenario.pruning.rho_tube)
    pruned_nodes = prune_nodes(graph, report)
    pruned_edges = sweep_edges(
        graph, lib, obstacles, scenario.pruning.rho_tube,
        steps=scenario.pruning.sweep_steps, margin=scenario.pruning.margin)
    logger.info("pruned %d/%d nodes, swept %d edges", pruned_nodes,
                graph.node_count, pruned_edges)
    return PreparedScene(lib=lib, graph=graph, pruned_nodes=pruned_nodes,
                         pruned_edges=pruned_edges)


def snap_waypoint(scene: PreparedScene, scenario: Scenario, wp: WaypointSpec) -> int:
    """Resolve one waypoint spec to the nearest alive library node."""
    alive = scene.graph.node_alive
    if wp.gamma is not None:
        shape = scenario.rod.to_source()(np.asarray(wp.gamma, dtype=np.float64))
        return nearest_node(scene.lib, shape, alive)
    if wp.shape is not None:
        arr = np.asarray(wp.shape, dtype=np.float64)
        if arr.shape != (scene.lib.n_z, 3):
            raise ScenarioError(
                f"waypoint shape has {arr.shape[0]} points, library uses {scene.lib.n_z}")
        return nearest_node(scene.lib, arr, alive)
    return nearest_node_by_tip(scene.lib, wp.tip, alive)


@dataclass(frozen=True)
class PlanOutcome:
    plan: PlannedPath
    metrics: PathMetrics
    weights: CostWeights
    pruned_nodes: int
    pruned_edges: int
    alive_nodes: int
    document: dict
    json_path: Path | None
    csv_path: Path | None


def path_document(lib: ShapeLibrary, plan: PlannedPath, metrics: PathMetrics,
                  weights: CostWeights, scenario_name: str | None = None) -> dict:
    """JSON-ready description of a planned route.

    search_time is intentionally absent: the document depends only on the
    scenario and artifact bytes, never on wall-clock timing.
    """
    ids = plan.node_ids
    return {
        "schema_version": 1,
        "scenario": scenario_name,
        "weights": {"alpha": weights.alpha, "beta": weights.beta,
                    "delta": weights.delta},
        "waypoint_node_ids": [int(v) for v in plan.waypoint_ids],
        "segment_boundaries": [int(v) for v in plan.segment_boundaries],
        "node_ids": [int(v) for v in ids],
        "leg_costs": [float(c) for c in plan.leg_costs],
        "total_cost": plan.total_cost,
        "metrics": {
            "n_nodes": metrics.n_nodes,
            "tip_path_length": metrics.tip_path_length,
            "activation_energy": metrics.activation_energy,
            "activation_tv": metrics.activation_tv,
        },
        "gammas": [[float(x) for x in row] for row in lib.gammas[ids]],
        "tips": [[float(x) for x in row] for row in lib.points[ids, -1, :]],
    }


def write_path_json(path, document: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    return path


def write_path_csv(path, lib: ShapeLibrary, plan: PlannedPath) -> Path:
    path = Path(path)
    ids = plan.node_ids
    gammas = lib.gammas[ids]
    tips = lib.points[ids, -1, :]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "node_id", "gamma_0", "gamma_1", "gamma_2",
                         "tip_x", "tip_y", "tip_z"])
        for step, nid in enumerate(ids):
            writer.writerow([step, int(nid),
                             *(repr(float(v)) for v in gammas[step]),
                             *(repr(float(v)) for v in tips[step])])
    return path


def plan_on_scene(scene: PreparedScene, scenario: Scenario,
                  weights: CostWeights | None = None, out_dir=None,
                  stem: str = "path") -> PlanOutcome:
    """Snap the scenario's waypoints, run the route query, export files."""
    if weights is None:
        weights = scenario.costs.to_weights()
    edge_cost = compute_edge_weights(scene.graph, scene.lib, weights)
    waypoint_ids = [snap_waypoint(scene, scenario, wp)
                    for wp in scenario.route_waypoints()]
    plan = plan_route(scene.graph, edge_cost, waypoint_ids)
    metrics = compute_metrics(scene.lib, plan)
    document = path_document(scene.lib, plan, metrics, weights,
                             scenario_name=scenario.name)
    json_path = csv_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        json_path = write_path_json(out / f"{stem}.json", document)
        csv_path = write_path_csv(out / f"{stem}.csv", scene.lib, plan)
    return PlanOutcome(
        plan=plan, metrics=metrics, weights=weights,
        pruned_nodes=scene.pruned_nodes, pruned_edges=scene.pruned_edges,
        alive_nodes=scene.graph.alive_node_count(),
        document=document, json_path=json_path, csv_path=csv_path,
    )


def run_plan(scenario: Scenario, out_dir=None,
             weights: CostWeights | None = None, stem: str = "path") -> PlanOutcome:
    """End-to-end plan: load, prune, snap, search, export."""
    scene = prepare_scene(scenario, out_dir)
    return plan_on_scene(scene, scenario, weights=weights, out_dir=out_dir, stem=stem)


@dataclass(frozen=True)
class CompareOutcome:
    geometry: PlanOutcome
    energy: PlanOutcome
    deltas_pct: dict
    json_path: Path | None


def _pct_change(before: float, after: float) -> float | None:
    if before == 0.0:
        return None
    return 100.0 * (after - before) / before


def run_compare(scenario: Scenario, out_dir=None) -> CompareOutcome:
    """Plan the same route geometry-only and energy-aware, then diff metrics.

    The geometry pass uses weights (1, 0, 0); the energy-aware pass uses
    (1, 1, 1) with the scenario's stiffness matrix.
    """
    scene = prepare_scene(scenario, out_dir)
    stiffness = np.asarray(scenario.costs.stiffness, dtype=np.float64)
    geometry = plan_on_scene(
        scene, scenario,
        weights=CostWeights(alpha=1.0, beta=0.0, delta=0.0, stiffness=stiffness),
        out_dir=out_dir, stem="path_geometry")
    energy = plan_on_scene(
        scene, scenario,
        weights=CostWeights(alpha=1.0, beta=1.0, delta=1.0, stiffness=stiffness),
        out_dir=out_dir, stem="path_energy")
    deltas = {
        "tip_path_length_pct": _pct_change(geometry.metrics.tip_path_length,
                                           energy.metrics.tip_path_length),
        "activation_energy_pct": _pct_change(geometry.metrics.activation_energy,
                                             energy.metrics.activation_energy),
        "activation_tv_pct": _pct_change(geometry.metrics.activation_tv,
                                         energy.metrics.activation_tv),
    }
    json_path = None
    if out_dir is not None:
        doc = {
            "schema_version": 1,
            "scenario": scenario.name,
            "geometry": geometry.document["metrics"],
            "energy": energy.document["metrics"],
            "deltas_pct": deltas,
        }
        json_path = write_path_json(Path(out_dir) / "compare.json", doc)
    return CompareOutcome(geometry=geometry, energy=energy,
                          deltas_pct=deltas, json_path=json_path)
