"""Shape-space roadmap planning for a three-fiber soft robotic arm.

Precompute a library of reachable centerline shapes by integrating the
arm's intrinsic filament kinematics, connect nearby shapes into an exact
k-NN graph under the RMS centerline metric, prune everything that
collides with analytic signed-distance obstacles, and answer
multi-waypoint path queries with Dijkstra over multi-objective edge
costs.
"""

from .costs import CostWeights, activation_energy, activation_rate, compute_edge_weights, edge_weight
from .graph import (
    AllNodesPrunedError,
    ShapeGraph,
    build_knn_graph,
    load_graph,
    nearest_node,
    nearest_node_by_tip,
    save_graph,
    shape_distance,
)
from .library import (
    RodShapeSource,
    ShapeLibrary,
    generate_library,
    library_file_digest,
    load_library,
    sample_activations,
    save_library,
)
from .planner import (
    PathMetrics,
    PlannedPath,
    UnreachableError,
    compute_metrics,
    plan_route,
    shortest_path,
)
from .rod import (
    ActivationVector,
    ActuationMap,
    CenterlineShape,
    DirectorFrame,
    IntrinsicState,
    actuation_to_intrinsic,
    default_actuation_map,
    forward_kinematics,
    integrate_centerline,
    integrate_with_frames,
)
from .scenario import Scenario, ScenarioError, load_scenario
from .sdf import (
    ClearanceReport,
    Obstacle,
    node_clearances,
    prune_graph,
    scene_distance,
    shape_clearance,
    sweep_edges,
)

__version__ = "0.1.0"
