"""HTTP service exposing the planning pipeline.

The service owns the in-memory library/graph caches, so one process can
generate artifacts once and answer many plan queries without reloading
them.  Scenario documents are posted inline (the CLI resolves relative
paths before sending), and all filesystem paths are interpreted on the
host running the service.

Status codes mirror the CLI exit codes: 422 for configuration problems,
409 when a route does not exist in the pruned graph, 500 for missing or
corrupt artifact files.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

import numpy as np

from . import __version__, pipeline
from .rod import forward_kinematics
from .scenario import RodConfig, Scenario, Vec3


def _raise_http(exc: Exception):
    if isinstance(exc, pipeline.ROUTE_ERRORS):
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    if isinstance(exc, pipeline.CONFIG_ERRORS):
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    if isinstance(exc, pipeline.IO_ERRORS):
        raise HTTPException(status_code=500, detail=str(exc)) from exc
    raise exc


class HealthResponse(BaseModel):
    status: str
    version: str


class FkRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: Vec3
    rod: RodConfig = RodConfig()


class FkResponse(BaseModel):
    points: list[Vec3]
    arc_params: list[float]
    tip: Vec3


class GenLibRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Scenario
    out_dir: Optional[str] = None
    seed: Optional[int] = Field(default=None, ge=0)
    threads: int = Field(default=1, ge=1)


class GenLibResponse(BaseModel):
    library_path: str
    manifest_path: str
    n: int
    n_z: int
    seed: int
    digest: str
    seconds: float


class BuildGraphRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Scenario
    out_dir: Optional[str] = None
    threads: int = Field(default=1, ge=1)


class BuildGraphResponse(BaseModel):
    graph_path: str
    n_nodes: int
    k: int
    n_edges: int
    digest: str
    seconds: float


class PlanRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Scenario
    out_dir: Optional[str] = None


class PlanResponse(BaseModel):
    document: dict
    search_time: float
    pruned_nodes: int
    pruned_edges: int
    alive_nodes: int
    json_path: Optional[str]
    csv_path: Optional[str]


class CompareResponse(BaseModel):
    geometry: PlanResponse
    energy: PlanResponse
    deltas_pct: dict
    json_path: Optional[str]


def _plan_response(outcome: pipeline.PlanOutcome) -> PlanResponse:
    return PlanResponse(
        document=outcome.document,
        search_time=outcome.plan.search_time,
        pruned_nodes=outcome.pruned_nodes,
        pruned_edges=outcome.pruned_edges,
        alive_nodes=outcome.alive_nodes,
        json_path=None if outcome.json_path is None else str(outcome.json_path),
        csv_path=None if outcome.csv_path is None else str(outcome.csv_path),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="rodmap", version=__version__,
                  description="Shape-space roadmap planning service")

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/fk", response_model=FkResponse)
    def fk(req: FkRequest) -> FkResponse:
        try:
            shape = forward_kinematics(
                req.rod.actuation.to_map(),
                np.asarray(req.gamma, dtype=np.float64),
                length=req.rod.length, n_z=req.rod.n_z)
        except Exception as exc:
            _raise_http(exc)
        return FkResponse(
            points=[tuple(row) for row in shape.points],
            arc_params=list(shape.arc_params),
            tip=tuple(shape.tip),
        )

    @app.post("/library/generate", response_model=GenLibResponse)
    def gen_lib(req: GenLibRequest) -> GenLibResponse:
        try:
            res = pipeline.run_gen_lib(req.scenario, out_dir=req.out_dir,
                                       seed=req.seed, threads=req.threads)
        except Exception as exc:
            _raise_http(exc)
        return GenLibResponse(
            library_path=str(res.library_path), manifest_path=str(res.manifest_path),
            n=res.n, n_z=res.n_z, seed=res.seed, digest=res.digest_hex,
            seconds=res.seconds,
        )

    @app.post("/graph/build", response_model=BuildGraphResponse)
    def build_graph(req: BuildGraphRequest) -> BuildGraphResponse:
        try:
            res = pipeline.run_build_graph(req.scenario, out_dir=req.out_dir,
                                           threads=req.threads)
        except Exception as exc:
            _raise_http(exc)
        return BuildGraphResponse(
            graph_path=str(res.graph_path), n_nodes=res.n_nodes, k=res.k,
            n_edges=res.n_edges, digest=res.digest_hex, seconds=res.seconds,
        )

    @app.post("/plan", response_model=PlanResponse)
    def plan(req: PlanRequest) -> PlanResponse:
        try:
            outcome = pipeline.run_plan(req.scenario, out_dir=req.out_dir)
        except Exception as exc:
            _raise_http(exc)
        return _plan_response(outcome)

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: PlanRequest) -> CompareResponse:
        try:
            outcome = pipeline.run_compare(req.scenario, out_dir=req.out_dir)
        except Exception as exc:
            _raise_http(exc)
        return CompareResponse(
            geometry=_plan_response(outcome.geometry),
            energy=_plan_response(outcome.energy),
            deltas_pct=outcome.deltas_pct,
            json_path=None if outcome.json_path is None else str(outcome.json_path),
        )

    return app


app = create_app()
