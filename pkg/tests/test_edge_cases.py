"""Defensive paths: kernel-backed fallbacks, degenerate inputs, corrupted
containers."""

import numpy as np
import pytest
import shapely.errors

from bilayout import metrics
from bilayout.geometry import (
    CameraFrame,
    HorizonDepth,
    LayoutAnnotation,
    LayoutError,
    wall_geometry,
)
from bilayout.metrics import circular_runs, iou2d, iou2d_raster
from bilayout.model import ModelError, init_weights, load_checkpoint, save_checkpoint
from bilayout.relabel import Candidate, generate_proposals
from conftest import L_ROOM_CORNERS


class TestRasterFallback:
    def test_geos_failure_falls_back_to_raster(self, frame, monkeypatch, caplog):
        a = LayoutAnnotation(
            corners=np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], dtype=float),
            room_height=3.0, id="a")
        b = LayoutAnnotation(
            corners=np.array([[1.5, -0.5], [1.5, 1.5], [-0.5, 1.5], [-0.5, -0.5]]),
            room_height=3.0, id="b")
        expected = iou2d_raster(a, b, resolution=2048)

        def boom(poly):
            raise shapely.errors.GEOSException("forced failure")

        monkeypatch.setattr(metrics, "_as_shapely", boom)
        with caplog.at_level("WARNING"):
            got = iou2d(a, b)
        assert "falling back" in caplog.text
        # the fallback inverts IoU = I/(Ap+Ag-I) through the raster estimate
        assert got == pytest.approx(expected, abs=1e-9)


class TestDegenerateEdges:
    def test_near_zero_depths_reuse_previous_normal(self, frame, caplog):
        depths = np.full(256, 2.0)
        depths[100] = 1e-13
        depths[101] = 1e-13
        hd = HorizonDepth(depths=depths, room_height=3.0)
        with caplog.at_level("WARNING"):
            geo = wall_geometry(hd, frame)
        assert "degenerate" in caplog.text
        assert np.isfinite(geo.normals).all()
        np.testing.assert_allclose(np.hypot(*geo.normals.T), 1.0, atol=1e-9)
        # the filled column repeats its predecessor's normal
        np.testing.assert_allclose(geo.normals[100], geo.normals[99], atol=1e-12)

    def test_all_degenerate_rejected(self, frame):
        hd = HorizonDepth(depths=np.full(256, 1e-14), room_height=3.0)
        with pytest.raises(LayoutError, match="degenerate"):
            wall_geometry(hd, frame)


class TestSynthesizedAnchors:
    def test_splice_on_edge_points(self, frame):
        # anchors placed mid-edge (as the bounding-ray synthesis produces)
        l_room = LayoutAnnotation(corners=L_ROOM_CORNERS, room_height=3.2, id="l")
        a = Candidate(point=(3.0, 1.0), corner_index=None, synthesized=True)
        b = Candidate(point=(0.0, 1.0), corner_index=None, synthesized=True)
        proposals = generate_proposals(l_room, [(a, b)], frame)
        chord = next(p for p in proposals if p.kind == "chord")
        # chord polygon: wall-line seal through (3,1) and (0,1)
        assert metrics.raster_containment(chord.corners, l_room) == 0
        assert any(np.allclose(c, [3.0, 1.0]) for c in chord.corners)
        assert any(np.allclose(c, [0.0, 1.0]) for c in chord.corners)


class TestCheckpointCorruption:
    def test_truncated_tensor_detected(self, tmp_path):
        from test_model import TINY

        weights = init_weights(TINY, seed=0)
        path = tmp_path / "model.blw"
        save_checkpoint(path, weights)
        blob = path.read_bytes()
        (tmp_path / "cut.blw").write_bytes(blob[:-16])
        with pytest.raises(ModelError, match="truncated"):
            load_checkpoint(tmp_path / "cut.blw")


class TestCircularRuns:
    def test_all_true_single_region(self):
        assert circular_runs(np.ones(8, dtype=bool)) == [(0, 7)]

    def test_wrapping_run(self):
        mask = np.array([True, False, False, True, True])
        assert circular_runs(mask) == [(3, 0)]


class TestBenchSmoke:
    def test_bench_runs_and_agrees(self, capsys):
        from bilayout.bench import run_benchmark

        results = run_benchmark(repeat=1, columns=64, resolution=64)
        assert "first_hit_depths" in results
        out = capsys.readouterr().out
        assert "active backend" in out
