"""Camera model, projective geometry, color linearization and scene scaling.

All cameras are pinhole, inputs are assumed pre-undistorted. Pixel (i, j)
samples the continuous image plane at (i + 0.5, j + 0.5); the functions in
this module work in continuous pixel coordinates, callers add the half-pixel
offset when walking integer grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA = 2.2
NEAR_PLANE = 0.01
FAR_PLANE = 1000.0

# Target extent of the central 90% of scene points after normalization.
SCENE_CUBE_SIZE = 10.0


class BehindCameraError(ValueError):
    """A point with non-positive camera-space depth cannot be projected."""


@dataclass(frozen=True)
class CameraPose:
    """Per-frame intrinsics plus world-to-camera rigid transform.

    world_to_cam is a 4x4 row-major matrix [[R, t], [0, 1]] mapping world
    points to camera coordinates (x right, y down, z forward).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    world_to_cam: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        m = np.asarray(self.world_to_cam, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "world_to_cam", m)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not np.all(np.isfinite(m)):
            raise ValueError("world_to_cam contains non-finite entries")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation block of world_to_cam is not orthonormal")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("last row of world_to_cam must be [0, 0, 0, 1]")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_cam[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_cam[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera center of projection in world coordinates."""
        return -self.rotation.T @ self.translation

    def with_translation(self, t: np.ndarray) -> "CameraPose":
        m = self.world_to_cam.copy()
        m[:3, 3] = t
        return CameraPose(self.fx, self.fy, self.cx, self.cy, m, self.frame_index)

    def scaled_resolution(self, factor: float) -> "CameraPose":
        """Camera for the same view re-gridded at factor x the pixel density."""
        return CameraPose(
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
            self.world_to_cam.copy(),
            self.frame_index,
        )


@dataclass
class Frame:
    """One video frame holding linear-RGB values in [0, 255], shape (H, W, 3)."""

    data: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"frame data must be (H, W, 3), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("frame data contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class DepthMap:
    """Per-pixel camera-space depth in scene units; invalid pixels are NaN."""

    depth: np.ndarray

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2:
            raise ValueError(f"depth must be (H, W), got {self.depth.shape}")
        valid = self.depth[np.isfinite(self.depth)]
        if valid.size and not ((valid > NEAR_PLANE) & (valid < FAR_PLANE)).all():
            bad = valid[(valid <= NEAR_PLANE) | (valid >= FAR_PLANE)]
            raise ValueError(
                f"valid depths must lie in ({NEAR_PLANE}, {FAR_PLANE}); "
                f"found e.g. {bad.flat[0]}"
            )

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth)


def linearize(srgb: np.ndarray) -> np.ndarray:
    """Map gamma-encoded values in [0, 255] to linear RGB, per channel."""
    v = np.asarray(srgb, dtype=np.float64)
    return 255.0 * (v / 255.0) ** GAMMA


def delinearize(linear: np.ndarray) -> np.ndarray:
    """Exact inverse of linearize on [0, 255]; clips small fp excursions."""
    v = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 255.0)
    return 255.0 * (v / 255.0) ** (1.0 / GAMMA)


def project_to_scene(cam: CameraPose, px, depth) -> np.ndarray:
    """Unproject continuous pixel coordinates at a given depth to world space.

    px is (..., 2) and depth (...); returns world points of shape (..., 3).
    Depth is camera-space z, not distance along the ray.
    """
    px = np.asarray(px, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0.0):
        raise ValueError("depth must be positive")
    x = (px[..., 0] - cam.cx) / cam.fx * depth
    y = (px[..., 1] - cam.cy) / cam.fy * depth
    pts_cam = np.stack([x, y, depth], axis=-1)
    return (pts_cam - cam.translation) @ cam.rotation


def project_to_image(cam: CameraPose, pt) -> tuple[np.ndarray, np.ndarray]:
    """Project world points into the image; returns (pixel coords, depth).

    Raises BehindCameraError if any point has camera-space z <= 0. Use
    project_to_image_batch when a validity mask is wanted instead.
    """
    pt = np.asarray(pt, dtype=np.float64)
    pts_cam = pt @ cam.rotation.T + cam.translation
    z = pts_cam[..., 2]
    if np.any(z <= 0.0):
        raise BehindCameraError("point behind camera")
    px = np.stack(
        [
            cam.fx * pts_cam[..., 0] / z + cam.cx,
            cam.fy * pts_cam[..., 1] / z + cam.cy,
        ],
        axis=-1,
    )
    return px, z


def project_xyz_arrays(
    cam: CameraPose, pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Projection as parallel coordinate arrays: (x, y, depth, in_front).

    Shared by the gatherer and the renderer so acceptance decisions are
    bit-identical between the two paths. Behind-camera or non-finite points
    get ok=False; their x/y values are meaningless.
    """
    pts = np.asarray(pts, dtype=np.float64)
    pts_cam = pts @ cam.rotation.T + cam.translation
    z = pts_cam[..., 2]
    ok = np.isfinite(z) & (z > 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        safe_z = np.where(ok, z, 1.0)
        x = cam.fx * pts_cam[..., 0] / safe_z + cam.cx
        y = cam.fy * pts_cam[..., 1] / safe_z + cam.cy
    return x, y, z, ok


def project_to_image_batch(
    cam: CameraPose, pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection returning (px (...,2), depth, in_front mask).

    Points behind the camera (or non-finite) get NaN pixel coordinates and a
    False mask entry rather than raising.
    """
    x, y, z, ok = project_xyz_arrays(cam, pts)
    px = np.stack([np.where(ok, x, np.nan), np.where(ok, y, np.nan)], axis=-1)
    return px, z, ok


@dataclass(frozen=True)
class SceneScale:
    """Uniform scale applied to camera translations and depth values."""

    scale: float

    def __post_init__(self):
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    def apply_to_camera(self, cam: CameraPose) -> CameraPose:
        return cam.with_translation(cam.translation * self.scale)

    def apply_to_depth(self, depth_map: DepthMap) -> DepthMap:
        return DepthMap(depth_map.depth * self.scale)


def normalize_scene(
    frames: list[Frame],
    depths: list[DepthMap],
    cams: list[CameraPose],
    stride: int = 4,
) -> SceneScale:
    """Compute the scale placing ~90% of scene points inside a 10^3 cube.

    Every stride-th pixel of every stride-th frame with a valid depth is
    projected to world space; per axis the 5th..95th percentile extent is
    measured and the scale is 10 / (largest extent). Deterministic for a
    fixed stride.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    pts = []
    for frame, depth_map, cam in zip(frames[::stride], depths[::stride], cams[::stride]):
        d = depth_map.depth[::stride, ::stride]
        ys, xs = np.nonzero(np.isfinite(d))
        if ys.size == 0:
            continue
        px = np.stack([xs * stride + 0.5, ys * stride + 0.5], axis=-1)
        pts.append(project_to_scene(cam, px, d[ys, xs]))
    if not pts:
        raise ValueError("no valid depth pixels to normalize the scene with")
    pts = np.concatenate(pts, axis=0)
    lo = np.percentile(pts, 5.0, axis=0)
    hi = np.percentile(pts, 95.0, axis=0)
    extent = float(np.max(hi - lo))
    if extent <= 0.0:
        # Degenerate point cloud (single point); leave the scene untouched.
        return SceneScale(1.0)
    return SceneScale(SCENE_CUBE_SIZE / extent)
