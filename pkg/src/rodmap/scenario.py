"""Scenario files: one JSON document describing a full planning problem.

A scenario bundles the rod geometry and actuation map, the library
size/seed, graph degree, obstacle set, cost weights, pruning knobs, and
the waypoint list.  load_scenario() parses and validates a file and
resolves any relative library/graph paths against the scenario file's
directory, so scenarios can ship next to their artifacts.

Every waypoint names exactly one of:
  gamma — an activation triple, snapped via its forward-kinematics shape;
  shape — an explicit n_z x 3 centerline, snapped by RMS distance;
  tip   — a workspace point, snapped by tip distance.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .costs import CostWeights
from .library import RodShapeSource
from .rod import (
    DEFAULT_CURVATURE_MATRIX,
    DEFAULT_EXTENSION_COEFFS,
    DEFAULT_LENGTH,
    DEFAULT_N_Z,
    ActuationMap,
)
from .sdf import DEFAULT_SWEEP_STEPS, DEFAULT_TUBE_RADIUS, Obstacle

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]
Mat3 = tuple[Vec3, Vec3, Vec3]

_IDENTITY3: Mat3 = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


class ScenarioError(ValueError):
    """Scenario file is missing, unparseable, or semantically invalid."""


class ActuationConfig(BaseModel):
    """Affine activation-to-intrinsics map parameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    curvature_matrix: Mat3 = DEFAULT_CURVATURE_MATRIX
    extension_coeffs: Vec3 = DEFAULT_EXTENSION_COEFFS

    def to_map(self) -> ActuationMap:
        return ActuationMap(
            curvature_matrix=np.asarray(self.curvature_matrix, dtype=np.float64),
            extension_coeffs=np.asarray(self.extension_coeffs, dtype=np.float64),
        )


class RodConfig(BaseModel):
    """Rod geometry plus its actuation map."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    length: float = Field(default=DEFAULT_LENGTH, gt=0.0)
    n_z: int = Field(default=DEFAULT_N_Z, ge=2)
    actuation: ActuationConfig = ActuationConfig()

    def to_source(self) -> RodShapeSource:
        return RodShapeSource(self.actuation.to_map(), length=self.length, n_z=self.n_z)


class LibraryConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    path: Optional[str] = None
    size: int = Field(default=100_000, ge=2)
    seed: int = Field(default=0, ge=0)


class GraphConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    path: Optional[str] = None
    k: int = Field(default=20, ge=1)


class ObstacleSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["box", "cylinder", "sphere"]
    center: Vec3
    quat: Quat = (1.0, 0.0, 0.0, 0.0)
    dims: tuple[float, ...]

    def to_obstacle(self) -> Obstacle:
        return Obstacle(kind=self.kind, center=self.center,
                        quat=self.quat, dims=self.dims)


class CostsSpec(BaseModel):
    """alpha/beta/delta weights and the activation stiffness matrix K."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    alpha: float = 1.0
    beta: float = 0.0
    delta: float = 0.0
    stiffness: Mat3 = Field(default=_IDENTITY3, alias="K")

    def to_weights(self) -> CostWeights:
        return CostWeights(alpha=self.alpha, beta=self.beta, delta=self.delta,
                           stiffness=np.asarray(self.stiffness, dtype=np.float64))


class PruningConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    rho_tube: float = Field(default=DEFAULT_TUBE_RADIUS, ge=0.0)
    sweep_steps: int = Field(default=DEFAULT_SWEEP_STEPS, ge=0)
    margin: float = Field(default=0.0, ge=0.0)


class WaypointSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: Optional[Vec3] = None
    shape: Optional[tuple[Vec3, ...]] = None
    tip: Optional[Vec3] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [name for name in ("gamma", "shape", "tip")
                 if getattr(self, name) is not None]
        if len(given) != 1:
            raise ValueError(
                f"waypoint must set exactly one of gamma, shape, tip; got {given or 'none'}")
        return self

    def describe(self) -> str:
        if self.gamma is not None:
            return f"gamma={list(self.gamma)}"
        if self.tip is not None:
            return f"tip={list(self.tip)}"
        return f"shape[{len(self.shape)} points]"


class Scenario(BaseModel):
    """Complete planning problem description."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    schema_version: Literal[1] = 1
    name: Optional[str] = None
    rod: RodConfig = RodConfig()
    library: LibraryConfig = LibraryConfig()
    graph: GraphConfig = GraphConfig()
    obstacles: tuple[ObstacleSpec, ...] = ()
    costs: CostsSpec = CostsSpec()
    pruning: PruningConfig = PruningConfig()
    start: Optional[WaypointSpec] = None
    goal: Optional[WaypointSpec] = None
    waypoints: tuple[WaypointSpec, ...] = ()

    def to_obstacles(self) -> list[Obstacle]:
        return [spec.to_obstacle() for spec in self.obstacles]

    def route_waypoints(self) -> list[WaypointSpec]:
        """start, intermediate waypoints, goal — validated for planning."""
        if self.start is None or self.goal is None:
            raise ScenarioError("planning needs both start and goal waypoints")
        return [self.start, *self.waypoints, self.goal]

    def resolved_against(self, base_dir: Path) -> "Scenario":
        """Copy with library/graph paths made absolute relative to base_dir."""
        update = {}
        if self.library.path is not None:
            update["library"] = self.library.model_copy(
                update={"path": str((base_dir / self.library.path).resolve())})
        if self.graph.path is not None:
            update["graph"] = self.graph.model_copy(
                update={"path": str((base_dir / self.graph.path).resolve())})
        return self.model_copy(update=update) if update else self


def load_scenario(path) -> Scenario:
    """Parse a scenario JSON file, resolving relative artifact paths."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path} is not valid JSON: {exc}") from exc
    try:
        scenario = Scenario.model_validate(data)
    except Exception as exc:  # pydantic.ValidationError
        raise ScenarioError(f"{path} is not a valid scenario: {exc}") from exc
    return scenario.resolved_against(path.parent.resolve())
