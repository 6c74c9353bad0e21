"""Scenario workflows end to end: artifacts, caching, determinism, exports."""

import csv
import json

import numpy as np
import pytest

from conftest import make_scenario_doc
from rodmap import pipeline
from rodmap.graph import graph_file_digest
from rodmap.library import library_file_digest
from rodmap.scenario import Scenario, ScenarioError, WaypointSpec, load_scenario


@pytest.fixture(autouse=True)
def fresh_caches():
    pipeline.clear_caches()
    yield
    pipeline.clear_caches()


def build_artifacts(scenario_path, out_dir):
    scenario = load_scenario(scenario_path)
    gen = pipeline.run_gen_lib(scenario, out_dir=out_dir)
    built = pipeline.run_build_graph(scenario, out_dir=out_dir)
    return scenario, gen, built


class TestGenLib:
    def test_writes_library_and_manifest(self, scenario_file, tmp_path):
        scenario = load_scenario(scenario_file)
        gen = pipeline.run_gen_lib(scenario, out_dir=tmp_path / "out")
        assert gen.library_path.exists()
        assert gen.manifest_path.exists()
        assert gen.n == scenario.library.size
        assert gen.n_z == scenario.rod.n_z
        assert gen.seed == scenario.library.seed
        assert len(gen.digest_hex) == 64
        assert gen.digest_hex == library_file_digest(gen.library_path).hex()

    def test_seed_override_changes_content(self, scenario_file, tmp_path):
        scenario = load_scenario(scenario_file)
        a = pipeline.run_gen_lib(scenario, out_dir=tmp_path / "a")
        b = pipeline.run_gen_lib(scenario, out_dir=tmp_path / "b", seed=scenario.library.seed + 1)
        assert a.digest_hex != b.digest_hex
        assert b.seed == scenario.library.seed + 1

    def test_requires_destination(self, scenario_file):
        scenario = load_scenario(scenario_file)
        with pytest.raises(ScenarioError):
            pipeline.run_gen_lib(scenario, out_dir=None)

    def test_explicit_library_path_honored(self, tmp_path):
        dest = tmp_path / "custom" / "lib.bin"
        path = make_scenario_doc(tmp_path, size=50, name="custom",
                                 library={"size": 50, "seed": 5,
                                          "path": str(dest)})
        scenario = load_scenario(path)
        gen = pipeline.run_gen_lib(scenario)
        assert gen.library_path == dest
        assert dest.exists()


class TestBuildGraph:
    def test_builds_bound_graph(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        scenario, gen, built = build_artifacts(scenario_file, out)
        assert built.graph_path.exists()
        assert built.n_nodes == scenario.library.size
        assert built.k == scenario.graph.k
        assert built.n_edges >= built.n_nodes * built.k // 2
        # the graph is bound to the exact library bytes
        graph = pipeline.load_graph_cached(built.graph_path)
        assert graph.library_digest.hex() == gen.digest_hex

    def test_missing_library_is_an_io_error(self, scenario_file, tmp_path):
        scenario = load_scenario(scenario_file)
        with pytest.raises(pipeline.IO_ERRORS):
            pipeline.run_build_graph(scenario, out_dir=tmp_path / "empty")


class TestCaches:
    def test_library_cache_returns_same_object(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        _, gen, _ = build_artifacts(scenario_file, out)
        pipeline.clear_caches()
        lib1, digest1 = pipeline.load_library_cached(gen.library_path)
        lib2, digest2 = pipeline.load_library_cached(gen.library_path)
        assert lib1 is lib2
        assert digest1 == digest2

    def test_cache_invalidates_on_rewrite(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        scenario, gen, _ = build_artifacts(scenario_file, out)
        lib1, _ = pipeline.load_library_cached(gen.library_path)
        # regenerate with a different seed into the same path
        pipeline.run_gen_lib(scenario, out_dir=out, seed=scenario.library.seed + 9)
        lib2, _ = pipeline.load_library_cached(gen.library_path)
        assert lib1 is not lib2
        assert not np.array_equal(lib1.gammas, lib2.gammas)

    def test_graph_cache_hands_out_fresh_masks(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        _, _, built = build_artifacts(scenario_file, out)
        g1 = pipeline.load_graph_cached(built.graph_path)
        g1.node_alive[:] = False
        g2 = pipeline.load_graph_cached(built.graph_path)
        assert g2.node_alive.all()
        assert g2.adj_nodes is g1.adj_nodes  # topology buffers are shared

    def test_digest_binding_enforced(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        _, _, built = build_artifacts(scenario_file, out)
        with pytest.raises(ScenarioError):
            pipeline.load_graph_cached(built.graph_path,
                                       expect_library_digest=b"\x42" * 32)


class TestArtifactPaths:
    def test_fallback_to_out_dir(self, tmp_path):
        scenario = Scenario()
        assert pipeline.library_path_for(scenario, tmp_path) == \
            tmp_path / pipeline.LIBRARY_FILENAME
        assert pipeline.graph_path_for(scenario, tmp_path) == \
            tmp_path / pipeline.GRAPH_FILENAME

    def test_no_path_no_out_dir_raises(self):
        scenario = Scenario()
        with pytest.raises(ScenarioError):
            pipeline.library_path_for(scenario, None)
        with pytest.raises(ScenarioError):
            pipeline.graph_path_for(scenario, None)


class TestPrepareScene:
    def test_grid_mismatch_detected(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        build_artifacts(scenario_file, out)
        other = make_scenario_doc(tmp_path, n_z=31, name="othergrid")
        with pytest.raises(ScenarioError):
            pipeline.prepare_scene(load_scenario(other), out_dir=out)

    def test_actuation_mismatch_detected(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        build_artifacts(scenario_file, out)
        other = make_scenario_doc(
            tmp_path, name="otheractuation",
            rod={"length": 0.3, "n_z": 30,
                 "actuation": {"curvature_matrix": [[9, 0, 0], [0, 6, 6], [0, 4, -4]],
                               "extension_coeffs": [0.12, 0.12, 0.12]}})
        with pytest.raises(ScenarioError):
            pipeline.prepare_scene(load_scenario(other), out_dir=out)

    def test_obstacle_free_scene_prunes_nothing(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        scenario, _, _ = build_artifacts(scenario_file, out)
        scene = pipeline.prepare_scene(scenario, out_dir=out)
        assert scene.pruned_nodes == 0
        assert scene.pruned_edges == 0
        assert scene.graph.node_alive.all()

    def test_obstacles_prune_nodes(self, tmp_path):
        # a ball sitting on the rest tip kills the near-straight shapes
        path = make_scenario_doc(
            tmp_path, name="blocked",
            obstacles=[{"kind": "sphere", "center": [0.0, 0.0, 0.3],
                        "dims": [0.03]}])
        out = tmp_path / "out"
        build_artifacts(path, out)
        scene = pipeline.prepare_scene(load_scenario(path), out_dir=out)
        assert scene.pruned_nodes > 0
        assert not scene.graph.node_alive[0]  # the rest shape itself is gone


class TestSnapping:
    @pytest.fixture()
    def scene_and_scenario(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        scenario, _, _ = build_artifacts(scenario_file, out)
        return pipeline.prepare_scene(scenario, out_dir=out), scenario

    def test_gamma_in_library_snaps_to_its_node(self, scene_and_scenario):
        scene, scenario = scene_and_scenario
        wp = WaypointSpec(gamma=tuple(scene.lib.gammas[7]))
        assert pipeline.snap_waypoint(scene, scenario, wp) == 7

    def test_tip_snaps_by_tip_distance(self, scene_and_scenario):
        scene, scenario = scene_and_scenario
        wp = WaypointSpec(tip=tuple(scene.lib.points[11, -1]))
        assert pipeline.snap_waypoint(scene, scenario, wp) == 11

    def test_shape_snaps_by_rms(self, scene_and_scenario):
        scene, scenario = scene_and_scenario
        wp = WaypointSpec(shape=tuple(tuple(p) for p in scene.lib.points[23]))
        assert pipeline.snap_waypoint(scene, scenario, wp) == 23

    def test_shape_grid_mismatch(self, scene_and_scenario):
        scene, scenario = scene_and_scenario
        wp = WaypointSpec(shape=((0.0, 0.0, 0.0), (0.0, 0.0, 0.3)))
        with pytest.raises(ScenarioError):
            pipeline.snap_waypoint(scene, scenario, wp)


class TestPlanAndExport:
    def test_end_to_end_plan(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        scenario, _, _ = build_artifacts(scenario_file, out)
        outcome = pipeline.run_plan(scenario, out_dir=out)
        assert outcome.json_path.exists()
        assert outcome.csv_path.exists()
        doc = outcome.document
        assert doc["node_ids"][0] == doc["waypoint_node_ids"][0]
        assert doc["node_ids"][-1] == doc["waypoint_node_ids"][-1]
        assert doc["total_cost"] == pytest.approx(sum(doc["leg_costs"]))
        assert len(doc["gammas"]) == len(doc["node_ids"])
        assert len(doc["tips"]) == len(doc["node_ids"])
        # consecutive path nodes must share an edge in the stored graph
        graph = pipeline.load_graph_cached(
            pipeline.graph_path_for(scenario, out))
        for a, b in zip(doc["node_ids"], doc["node_ids"][1:]):
            nbrs, _ = graph.neighbors(a)
            assert b in nbrs.tolist()

    def test_document_never_contains_wall_clock(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        scenario, _, _ = build_artifacts(scenario_file, out)
        outcome = pipeline.run_plan(scenario, out_dir=out)
        flat = json.dumps(outcome.document)
        assert "search_time" not in flat
        assert outcome.metrics.search_time >= 0.0  # reported out of band

    def test_csv_structure(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        scenario, _, _ = build_artifacts(scenario_file, out)
        outcome = pipeline.run_plan(scenario, out_dir=out)
        with open(outcome.csv_path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "node_id", "gamma_0", "gamma_1", "gamma_2",
                           "tip_x", "tip_y", "tip_z"]
        assert len(rows) == 1 + len(outcome.document["node_ids"])
        # float cells round-trip exactly through repr
        first = rows[1]
        assert float(first[2]) == outcome.document["gammas"][0][0]
        assert float(first[7]) == outcome.document["tips"][0][2]

    def test_unreachable_when_everything_is_pruned(self, tmp_path):
        # a giant ball swallowing the whole workspace
        path = make_scenario_doc(
            tmp_path, name="swallowed",
            obstacles=[{"kind": "sphere", "center": [0.0, 0.0, 0.15],
                        "dims": [0.5]}])
        out = tmp_path / "out"
        build_artifacts(path, out)
        with pytest.raises(pipeline.ROUTE_ERRORS):
            pipeline.run_plan(load_scenario(path), out_dir=out)

    def test_byte_identical_across_fresh_runs(self, tmp_path):
        """Same scenario, two cold runs: all artifact bytes must match."""
        digests = []
        for run in ("one", "two"):
            pipeline.clear_caches()
            run_dir = tmp_path / run
            run_dir.mkdir()
            path = make_scenario_doc(run_dir, name="repeat", size=200, k=5)
            scenario = load_scenario(path)
            out = run_dir / "out"
            gen = pipeline.run_gen_lib(scenario, out_dir=out)
            built = pipeline.run_build_graph(scenario, out_dir=out)
            outcome = pipeline.run_plan(scenario, out_dir=out)
            digests.append((
                library_file_digest(gen.library_path),
                graph_file_digest(built.graph_path),
                outcome.json_path.read_bytes(),
                outcome.csv_path.read_bytes(),
            ))
        assert digests[0] == digests[1]


class TestCompare:
    def test_compare_produces_both_routes(self, tmp_path):
        path = make_scenario_doc(tmp_path, name="cmp", size=200, k=5)
        out = tmp_path / "out"
        build_artifacts(path, out)
        outcome = pipeline.run_compare(load_scenario(path), out_dir=out)
        assert outcome.geometry.json_path.name == "path_geometry.json"
        assert outcome.energy.json_path.name == "path_energy.json"
        assert outcome.json_path.name == "compare.json"
        assert set(outcome.deltas_pct) == {"tip_path_length_pct",
                                           "activation_energy_pct",
                                           "activation_tv_pct"}
        compare_doc = json.loads(outcome.json_path.read_text())
        assert compare_doc["geometry"]["n_nodes"] == outcome.geometry.metrics.n_nodes
        assert compare_doc["energy"]["n_nodes"] == outcome.energy.metrics.n_nodes

    def test_geometry_leg_matches_plain_plan(self, tmp_path):
        from rodmap.costs import CostWeights
        path = make_scenario_doc(tmp_path, name="cmp2", size=200, k=5)
        out = tmp_path / "out"
        build_artifacts(path, out)
        scenario = load_scenario(path)
        compare = pipeline.run_compare(scenario, out_dir=out)
        solo = pipeline.run_plan(scenario, out_dir=out,
                                 weights=CostWeights.geometry_only())
        assert compare.geometry.plan.node_ids.tolist() == \
            solo.plan.node_ids.tolist()
        assert compare.geometry.plan.total_cost == pytest.approx(
            solo.plan.total_cost)

    def test_energy_weighting_changes_or_keeps_route_but_never_crashes(self, tmp_path):
        path = make_scenario_doc(tmp_path, name="cmp3", size=150, k=5)
        out = tmp_path / "out"
        build_artifacts(path, out)
        outcome = pipeline.run_compare(load_scenario(path), out_dir=out)
        for key, value in outcome.deltas_pct.items():
            assert value is None or np.isfinite(value)
