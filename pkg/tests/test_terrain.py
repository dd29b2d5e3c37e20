import json

import numpy as np
import pytest

from parkour.errors import ConfigurationError
from parkour.terrain import (
    Heightfield,
    TerrainSpec,
    WaypointCourse,
    arrange_course,
    compute_edge_mask,
    gap_width,
    generate_terrain,
    heightfield_to_json,
    height_at,
    hurdle_height,
    load_heightfield,
    ramp_tilt_deg,
    save_heightfield,
    step_height,
)

from conftest import edge_mask_oracle, make_field


def trench_extent(hf):
    cols = np.where((hf.heights < -0.5).any(axis=1))[0]
    return (cols[-1] - cols[0]) * hf.cell_size if len(cols) else 0.0


class TestGenerate:
    def test_gap_full_difficulty_is_point_eight(self):
        hf, _ = generate_terrain(TerrainSpec("gap", 1.0, 3))
        assert gap_width(1.0) == pytest.approx(0.8)
        assert trench_extent(hf) == pytest.approx(0.8, abs=2 * hf.cell_size)

    def test_step_full_difficulty_is_half_meter(self):
        hf, _ = generate_terrain(TerrainSpec("step", 1.0, 3))
        assert step_height(1.0) == pytest.approx(0.5)
        assert hf.heights.max() == pytest.approx(0.5)

    def test_flat_zero(self):
        hf, course = generate_terrain(TerrainSpec("flat", 0.0, 11))
        assert (hf.heights == 0).all()
        assert not hf.edge_mask.any()
        assert course.n_waypoints == 2

    def test_determinism(self):
        a_hf, a_c = generate_terrain(TerrainSpec("ramp", 0.7, 99))
        b_hf, b_c = generate_terrain(TerrainSpec("ramp", 0.7, 99))
        assert np.array_equal(a_hf.heights, b_hf.heights)
        assert np.array_equal(a_hf.edge_mask, b_hf.edge_mask)
        assert np.array_equal(a_c.waypoints, b_c.waypoints)

    def test_severity_monotone_in_difficulty(self):
        for kind, measure in [
            ("gap", trench_extent),
            ("step", lambda hf: hf.heights.max()),
            ("hurdle", lambda hf: hf.heights.max()),
        ]:
            prev = -np.inf
            for d in np.linspace(0, 1, 7):
                hf, _ = generate_terrain(TerrainSpec(kind, float(d), 5))
                m = measure(hf)
                assert m >= prev - 1e-9, kind
                prev = m
        assert ramp_tilt_deg(0.0) == 10.0 and ramp_tilt_deg(1.0) == 37.0

    def test_waypoints_on_traversable_ground(self):
        for kind in ("hurdle", "gap", "step", "ramp", "flat"):
            for seed in range(4):
                hf, course = generate_terrain(TerrainSpec(kind, 0.8, seed))
                h = hf.height_at_batch(course.waypoints[:, 0], course.waypoints[:, 1])
                assert np.isfinite(h).all()
                assert (h > -0.5).all(), f"{kind} waypoint inside a trench"
                assert (np.diff(course.waypoints[:, 0]) > 0).all()

    def test_ramp_has_offset_waypoint(self):
        _, course = generate_terrain(TerrainSpec("ramp", 1.0, 2))
        assert np.abs(course.waypoints[:, 1]).max() > 0.5

    def test_invalid_specs(self):
        with pytest.raises(ConfigurationError):
            TerrainSpec("lava", 0.5, 0)
        with pytest.raises(ConfigurationError):
            TerrainSpec("gap", 1.5, 0)
        with pytest.raises(ConfigurationError):
            generate_terrain(TerrainSpec("gap", 1.0, 0, extent=(2.0, 4.0)))


class TestArrange:
    def test_hurdle_levels(self):
        hf, course = arrange_course(["hurdle"], 3, seed=1)
        tops = []
        for k in range(3):
            x0, x1 = course.level_x_range(k)
            i0 = int(x0 / hf.cell_size)
            i1 = int(x1 / hf.cell_size)
            tops.append(hf.heights[i0:i1 + 1].max())
        assert tops == pytest.approx([0.1, 0.3, 0.5])
        assert hurdle_height(0.0) == pytest.approx(0.1)
        assert hurdle_height(0.5) == pytest.approx(0.3)

    def test_single_level_zero_difficulty(self):
        hf, course = arrange_course(["gap", "step"], 1, seed=0)
        assert trench_extent(hf) == pytest.approx(gap_width(0.0), abs=2 * hf.cell_size)
        assert hf.heights.max() == pytest.approx(step_height(0.0))
        assert set(course.segment_kind) <= {"gap", "step", "flat"}

    def test_empty_kinds_rejected(self):
        with pytest.raises(ConfigurationError):
            arrange_course([], 2)
        with pytest.raises(ConfigurationError):
            arrange_course(["gap"], 0)

    def test_total_length_matches_span(self):
        _, course = arrange_course(["gap", "hurdle"], 2, seed=3)
        span = course.waypoints[-1, 0] - course.waypoints[0, 0]
        assert course.total_length == pytest.approx(span)
        assert len(course.segment_kind) == course.n_waypoints - 1

    def test_max_difficulty_scaling(self):
        hf, _ = arrange_course(["hurdle"], 3, seed=1, max_difficulty=0.25)
        assert hf.heights.max() == pytest.approx(hurdle_height(0.25))


class TestHeightAt:
    def test_constant_field(self):
        hf = make_field(np.full((9, 9), 0.2))
        for x, y in [(0.05, 0.05), (0.1, 0.18), (0.0, 0.0)]:
            assert height_at(hf, x, y) == pytest.approx(0.2)

    def test_bilinear_midpoint(self):
        h = np.zeros((4, 4))
        h[2:, :] = 1.0
        hf = make_field(h)
        mid_x = 1.5 * hf.cell_size
        assert height_at(hf, mid_x, 0.025) == pytest.approx(0.5)

    def test_clamp_outside(self):
        hf = make_field(np.zeros((5, 5)))
        assert height_at(hf, 10.0, -10.0) == 0.0


class TestEdgeMask:
    def test_flat_all_false(self):
        hf = make_field(np.zeros((32, 32)))
        assert not compute_edge_mask(hf).any()

    def test_step_band_two_cells(self):
        h = np.zeros((81, 21))
        h[40:, :] = 0.5  # jump between columns 39 and 40
        hf = make_field(h)
        mask = compute_edge_mask(hf, band=0.05, delta=0.05)
        want = edge_mask_oracle(h, 0.025, 0.05, 0.05)
        assert np.array_equal(mask, want)
        cols = np.where(mask.any(axis=1))[0]
        assert cols.tolist() == [37, 38, 39, 40, 41, 42]

    def test_gentle_slope_below_delta(self):
        h = np.arange(40)[:, None] * 0.01 * np.ones((1, 10))
        hf = make_field(h)
        assert not compute_edge_mask(hf, band=0.05, delta=0.05).any()

    @pytest.mark.parametrize("seed", range(5))
    def test_oracle_equivalence_random(self, seed):
        rng = np.random.default_rng(seed)
        h = rng.normal(0, 0.04, (24, 20)).cumsum(axis=0)
        h[rng.integers(4, 20), :] += 0.3
        mask = compute_edge_mask(make_field(h), band=0.06, delta=0.05)
        assert np.array_equal(mask, edge_mask_oracle(h, 0.025, 0.06, 0.05))

    def test_mirror_symmetry(self):
        hf, _ = generate_terrain(TerrainSpec("ramp", 0.9, 17))
        mirrored = make_field(hf.heights[:, ::-1].copy())
        assert np.array_equal(compute_edge_mask(mirrored), compute_edge_mask(hf)[:, ::-1])


class TestPersistence:
    def test_pkhf_roundtrip(self, tmp_path):
        hf, course = generate_terrain(TerrainSpec("hurdle", 0.6, 5))
        path = tmp_path / "tile.pkhf"
        save_heightfield(path, hf, course.waypoints)
        hf2, wp2 = load_heightfield(path)
        assert hf2.cell_size == hf.cell_size
        assert hf2.origin == hf.origin
        assert np.allclose(hf2.heights, hf.heights, atol=1e-6)  # stored as f32
        assert np.array_equal(hf2.edge_mask, hf.edge_mask)
        assert np.array_equal(wp2, course.waypoints)

    def test_pkhf_magic(self, tmp_path):
        path = tmp_path / "bogus.pkhf"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ConfigurationError):
            load_heightfield(path)

    def test_json_mirror(self, tmp_path):
        hf, course = generate_terrain(TerrainSpec("gap", 0.3, 5))
        doc = heightfield_to_json(hf, course.waypoints)
        text = json.dumps(doc)
        back = json.loads(text)
        assert back["dims"] == list(hf.heights.shape)
        assert np.allclose(np.array(back["heights"]), hf.heights)
        assert np.array_equal(np.array(back["edge_mask"], dtype=bool), hf.edge_mask)
        assert np.allclose(np.array(back["waypoints"]), course.waypoints)


class TestCourseValidation:
    def test_needs_two_waypoints(self):
        with pytest.raises(ConfigurationError):
            WaypointCourse(np.array([[0.0, 0.0, 0.0]]), [], 0.0, 1)

    def test_x_must_increase(self):
        wp = np.array([[1.0, 0, 0], [0.5, 0, 0]])
        with pytest.raises(ConfigurationError):
            WaypointCourse(wp, ["flat"], 0.5, 1)
