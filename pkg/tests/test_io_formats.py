"""Round-trip tests for the on-disk formats."""

from __future__ import annotations

import numpy as np
import pytest

from scenespace.geometry import DepthMap, Frame, linearize
from scenespace.io_formats import (
    DataError,
    Dataset,
    load_cameras,
    load_dataset,
    load_depth,
    load_mask,
    read_pfm,
    read_png,
    read_png_sequence,
    save_cameras,
    save_depth,
    save_mask,
    write_dataset,
    write_pfm,
    write_png,
    write_png_sequence,
)

from conftest import make_pose, random_pose


class TestPfm:
    def test_constant_round_trip(self, tmp_path):
        path = tmp_path / "d.pfm"
        data = np.full((6, 9), 3.5, dtype=np.float32)
        write_pfm(path, data)
        assert np.array_equal(read_pfm(path), data)

    def test_random_round_trip_bitexact(self, tmp_path, rng):
        path = tmp_path / "d.pfm"
        data = rng.uniform(0.1, 900.0, size=(17, 23)).astype(np.float32)
        write_pfm(path, data)
        back = read_pfm(path)
        assert back.dtype == np.float32
        assert data.tobytes() == back.tobytes()

    def test_nan_rejected(self, tmp_path):
        data = np.full((2, 2), np.nan, dtype=np.float32)
        with pytest.raises(DataError):
            write_pfm(tmp_path / "d.pfm", data)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "d.pfm"
        write_pfm(path, np.zeros((2, 3), dtype=np.float32))
        raw = path.read_bytes()
        assert raw.startswith(b"Pf\n3 2\n-1.0\n")
        assert len(raw) == len(b"Pf\n3 2\n-1.0\n") + 2 * 3 * 4

    def test_depth_invalid_marker(self, tmp_path):
        path = tmp_path / "d.pfm"
        d = DepthMap(np.array([[1.0, np.nan], [2.0, 4.0]]))
        save_depth(path, d)
        back = load_depth(path)
        assert np.isnan(back.depth[0, 1])
        assert back.depth[1, 0] == pytest.approx(2.0)

    def test_depth_rejects_other_nonpositive(self, tmp_path):
        path = tmp_path / "d.pfm"
        write_pfm(path, np.full((2, 2), -0.5, dtype=np.float32))
        with pytest.raises(DataError):
            load_depth(path)


class TestPng:
    def test_black_frame(self, tmp_path):
        path = tmp_path / "f.png"
        write_png(path, Frame(np.zeros((4, 4, 3)), 0))
        back = read_png(path)
        assert np.array_equal(back.data, np.zeros((4, 4, 3)))

    def test_8bit_round_trip(self, tmp_path, rng):
        path = tmp_path / "f.png"
        srgb = rng.integers(0, 256, size=(8, 10, 3)).astype(np.float64)
        frame = Frame(linearize(srgb), 3)
        write_png(path, frame)
        back = read_png(path, 3)
        # linearize(read(write(delinearize))) reproduces the linear frame.
        assert np.allclose(back.data, frame.data, atol=1e-9)

    def test_sequence_ordering(self, tmp_path, rng):
        frames = [
            Frame(linearize(rng.integers(0, 256, size=(4, 4, 3)).astype(float)), i)
            for i in range(5)
        ]
        write_png_sequence(tmp_path, frames)
        back = read_png_sequence(tmp_path)
        assert [f.frame_index for f in back] == [0, 1, 2, 3, 4]
        for a, b in zip(frames, back):
            assert np.allclose(a.data, b.data)


class TestCameras:
    def test_round_trip(self, tmp_path, rng):
        cams = [random_pose(rng, frame_index=i) for i in range(4)]
        path = tmp_path / "cameras.json"
        save_cameras(path, cams)
        back = load_cameras(path)
        for a, b in zip(cams, back):
            assert a.frame_index == b.frame_index
            assert np.array_equal(a.world_to_cam, b.world_to_cam)
            assert (a.fx, a.fy, a.cx, a.cy) == (b.fx, b.fy, b.cx, b.cy)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "cameras.json"
        path.write_text("{not json")
        with pytest.raises(DataError):
            load_cameras(path)

    def test_nonfinite_matrix_rejected(self, tmp_path):
        path = tmp_path / "cameras.json"
        path.write_text(
            '[{"frame": 0, "fx": 1, "fy": 1, "cx": 0, "cy": 0,'
            ' "world_to_cam": [1,0,0,0, 0,1,0,0, 0,0,1,null,'
            ' 0,0,0,1]}]'
        )
        with pytest.raises(DataError):
            load_cameras(path)


class TestMasks:
    def test_round_trip(self, tmp_path, rng):
        mask = rng.random((6, 7)) > 0.5
        path = tmp_path / "m.png"
        save_mask(path, mask)
        assert np.array_equal(load_mask(path), mask)


def _tiny_dataset(rng, n=3, size=8):
    frames, cams, depths, masks = [], [], [], []
    for i in range(n):
        srgb = rng.integers(0, 256, size=(size, size, 3)).astype(np.float64)
        frames.append(Frame(linearize(srgb), i))
        cams.append(make_pose(cx=size / 2, cy=size / 2,
                              translation=(0.1 * i, 0, 0), frame_index=i))
        d = rng.uniform(1.0, 9.0, size=(size, size))
        d[0, 0] = np.nan
        depths.append(DepthMap(d))
        masks.append(rng.random((size, size)) > 0.7)
    return Dataset(frames, cams, depths, masks, scale=1.25)


class TestDataset:
    def test_write_load_round_trip(self, tmp_path, rng):
        ds = _tiny_dataset(rng)
        write_dataset(tmp_path / "ds", ds)
        back = load_dataset(tmp_path / "ds")
        assert back.num_frames == ds.num_frames
        assert back.scale == pytest.approx(1.25)
        for a, b in zip(ds.frames, back.frames):
            assert np.allclose(a.data, b.data, atol=1e-9)
        for a, b in zip(ds.depths, back.depths):
            # float32 storage precision
            both = np.isfinite(a.depth) & np.isfinite(b.depth)
            assert np.array_equal(np.isfinite(a.depth), np.isfinite(b.depth))
            assert np.allclose(a.depth[both], b.depth[both], rtol=1e-6)
        for a, b in zip(ds.masks, back.masks):
            assert np.array_equal(a, b)

    def test_missing_depth_names_frame(self, tmp_path, rng):
        ds = _tiny_dataset(rng)
        write_dataset(tmp_path / "ds", ds)
        (tmp_path / "ds" / "depth" / "frame_000001.pfm").unlink()
        with pytest.raises(DataError, match="frame 1"):
            load_dataset(tmp_path / "ds")

    def test_depth_optional(self, tmp_path, rng):
        ds = _tiny_dataset(rng)
        ds = Dataset(ds.frames, ds.cams)
        write_dataset(tmp_path / "ds", ds)
        back = load_dataset(tmp_path / "ds", require_depth=False)
        assert back.depths is None
        with pytest.raises(DataError):
            load_dataset(tmp_path / "ds", require_depth=True)

    def test_dimension_mismatch(self, rng):
        ds = _tiny_dataset(rng)
        bad_depths = [DepthMap(np.full((4, 4), 2.0))] * ds.num_frames
        with pytest.raises(DataError):
            Dataset(ds.frames, ds.cams, bad_depths)
