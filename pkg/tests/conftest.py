"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from scenespace.geometry import CameraPose


def rotation_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def make_pose(
    fx=100.0,
    fy=100.0,
    cx=32.0,
    cy=24.0,
    rotation=None,
    translation=(0.0, 0.0, 0.0),
    frame_index=0,
) -> CameraPose:
    m = np.eye(4)
    if rotation is not None:
        m[:3, :3] = rotation
    m[:3, 3] = translation
    return CameraPose(fx, fy, cx, cy, m, frame_index)


def random_pose(rng: np.random.Generator, frame_index=0, max_angle=0.5) -> CameraPose:
    axis = rng.normal(size=3)
    angle = rng.uniform(-max_angle, max_angle)
    r = rotation_from_axis_angle(axis, angle)
    t = rng.uniform(-2.0, 2.0, size=3)
    fx = rng.uniform(50.0, 400.0)
    fy = rng.uniform(50.0, 400.0)
    cx = rng.uniform(10.0, 100.0)
    cy = rng.uniform(10.0, 100.0)
    return make_pose(fx, fy, cx, cy, r, t, frame_index)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
