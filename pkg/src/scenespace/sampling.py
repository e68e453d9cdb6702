"""Per-pixel frustum sample gathering and per-sample derived quantities.

Each output pixel owns a truncated-pyramid frustum in scene space. Gathering
finds every input-video pixel whose scene-space projection falls inside that
frustum. Instead of querying a 3D structure, the frustum is projected into
each input frame, candidate pixels inside a conservative bound of that 2D
footprint are reprojected into the output view, and a pixel q is accepted iff

    |p - reproject(q)|_L1 < l / 2

with the reprojected depth inside (near, far) and in front of the output
camera. The brute-force variant applies the identical acceptance test to
every input pixel and serves as the gathering oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    FAR_PLANE,
    NEAR_PLANE,
    CameraPose,
    DepthMap,
    Frame,
    project_to_scene,
    project_xyz_arrays,
)

# Frustum edges are clipped against this camera-space z before projecting
# corners into an input view, so partially-behind frustums still produce a
# usable (conservative) 2D footprint.
CLIP_EPS = 1e-6

# Corner order: (near plane then far plane) x (y-, y+) x (x-, x+).
_FRUSTUM_EDGES = (
    (0, 1), (1, 3), (3, 2), (2, 0),
    (4, 5), (5, 7), (7, 6), (6, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


@dataclass(frozen=True)
class FrustumSpec:
    """Gathering query: output pixel, frustum side length, clip planes."""

    px: tuple[int, int]
    l: float = 3.0
    near: float = NEAR_PLANE
    far: float = FAR_PLANE

    def __post_init__(self):
        if self.l < 1.0:
            raise ValueError(f"frustum side length must be >= 1, got {self.l}")
        if not (0.0 < self.near < self.far):
            raise ValueError("need 0 < near < far")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.px[0] + 0.5, self.px[1] + 0.5])


@dataclass
class Sample:
    """One 7D observation: linear RGB, world position, frame time."""

    rgb: np.ndarray
    xyz: np.ndarray
    f: float
    src_frame: int | None = None
    src_px: tuple[int, int] | None = None
    area: float | None = None
    ord: int | None = None


@dataclass
class SampleSet:
    """A gathered sample set, stored column-wise for vector math.

    Sample order is (source frame ascending, then row-major source pixel);
    this ordering is the determinism anchor for filtering.
    """

    rgb: np.ndarray                      # (N, 3) linear RGB
    xyz: np.ndarray                      # (N, 3) scene units
    f: np.ndarray                        # (N,) frame time
    src_frame: np.ndarray                # (N,) int
    src_px: np.ndarray                   # (N, 2) int, (x, y)
    area: np.ndarray | None = None       # (N,) scene units^2
    ord: np.ndarray | None = None        # (N,) depth order
    ref: Sample | None = None

    def __len__(self) -> int:
        return self.rgb.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(
            rgb=self.rgb[i],
            xyz=self.xyz[i],
            f=float(self.f[i]),
            src_frame=int(self.src_frame[i]),
            src_px=(int(self.src_px[i, 0]), int(self.src_px[i, 1])),
            area=None if self.area is None else float(self.area[i]),
            ord=None if self.ord is None else int(self.ord[i]),
        )

    def keys(self) -> np.ndarray:
        """(frame, y, x) triples identifying each sample's origin."""
        return np.column_stack([self.src_frame, self.src_px[:, 1], self.src_px[:, 0]])

    @classmethod
    def empty(cls) -> "SampleSet":
        return cls(
            rgb=np.empty((0, 3)),
            xyz=np.empty((0, 3)),
            f=np.empty(0),
            src_frame=np.empty(0, dtype=np.int64),
            src_px=np.empty((0, 2), dtype=np.int64),
        )

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "SampleSet":
        if not samples:
            return cls.empty()
        has_area = all(s.area is not None for s in samples)
        has_ord = all(s.ord is not None for s in samples)
        return cls(
            rgb=np.array([s.rgb for s in samples], dtype=np.float64),
            xyz=np.array([s.xyz for s in samples], dtype=np.float64),
            f=np.array([s.f for s in samples], dtype=np.float64),
            src_frame=np.array(
                [-1 if s.src_frame is None else s.src_frame for s in samples]
            ),
            src_px=np.array(
                [(-1, -1) if s.src_px is None else s.src_px for s in samples]
            ),
            area=np.array([s.area for s in samples]) if has_area else None,
            ord=np.array([s.ord for s in samples]) if has_ord else None,
        )


def frame_world_points(depth_map: DepthMap, cam: CameraPose) -> np.ndarray:
    """World position of every pixel of a frame, (H, W, 3); NaN where invalid."""
    h, w = depth_map.height, depth_map.width
    xs, ys = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    depth = np.where(depth_map.valid, depth_map.depth, 1.0)
    pts = project_to_scene(cam, np.stack([xs, ys], axis=-1), depth)
    pts[~depth_map.valid] = np.nan
    return pts


class Window:
    """Read-only bundle of frames, depths and cameras used for one gather.

    Caches per-frame world positions and their projections into an output
    camera, both shared by gather, the brute-force oracle and the renderer.
    """

    def __init__(self, frames: list[Frame], depths: list[DepthMap],
                 cams: list[CameraPose]):
        if not (len(frames) == len(depths) == len(cams)):
            raise ValueError("frames, depths and cams must align")
        order = np.argsort([c.frame_index for c in cams], kind="stable")
        self.frames = [frames[i] for i in order]
        self.depths = [depths[i] for i in order]
        self.cams = [cams[i] for i in order]
        self._xyz: dict[int, np.ndarray] = {}
        self._proj: dict[tuple[int, int], tuple] = {}

    def __len__(self) -> int:
        return len(self.frames)

    def index_of(self, frame_index: int) -> int | None:
        for j, cam in enumerate(self.cams):
            if cam.frame_index == frame_index:
                return j
        return None

    def xyz(self, j: int) -> np.ndarray:
        """World position of every pixel of window frame j; NaN where invalid."""
        if j not in self._xyz:
            self._xyz[j] = frame_world_points(self.depths[j], self.cams[j])
        return self._xyz[j]

    def projected(self, j: int, cam_out: CameraPose):
        """Projection of frame j's pixels into cam_out: (x, y, z, ok) flat arrays."""
        key = (j, id(cam_out))
        if key not in self._proj:
            pts = self.xyz(j).reshape(-1, 3)
            self._proj[key] = project_xyz_arrays(cam_out, pts)
        return self._proj[key]


def frustum_corners(cam_out: CameraPose, spec: FrustumSpec) -> np.ndarray:
    """The 8 world-space vertices of an output pixel's truncated pyramid."""
    cx, cy = spec.center
    half = spec.l / 2.0
    corners = []
    for depth in (spec.near, spec.far):
        for oy in (-half, half):
            for ox in (-half, half):
                corners.append((cx + ox, cy + oy, depth))
    corners = np.array(corners)
    return project_to_scene(cam_out, corners[:, :2], corners[:, 2])


def frustum_hull_2d(
    corners: np.ndarray, cam_in: CameraPose, bounds: tuple[int, int]
) -> tuple[int, int, int, int]:
    """Conservative pixel bound of a frustum's footprint in an input frame.

    Clips the frustum edges against z = CLIP_EPS in the input camera frame,
    projects the surviving vertices and returns the bounding box of their
    convex hull as half-open pixel ranges (x0, x1, y0, y1), intersected with
    the image bounds. The box is a superset of the exact hull, which is safe
    because the reprojection test rejects any false candidates.
    """
    w, h = bounds
    pts_cam = corners @ cam_in.rotation.T + cam_in.translation
    z = pts_cam[:, 2]
    in_front = z >= CLIP_EPS
    if in_front.all():
        pts = pts_cam
    else:
        kept = [pts_cam[i] for i in range(8) if in_front[i]]
        for i, j in _FRUSTUM_EDGES:
            zi, zj = z[i], z[j]
            if (zi < CLIP_EPS) != (zj < CLIP_EPS):
                t = (CLIP_EPS - zi) / (zj - zi)
                kept.append(pts_cam[i] + t * (pts_cam[j] - pts_cam[i]))
        if not kept:
            return (0, 0, 0, 0)
        pts = np.asarray(kept)
    px = cam_in.fx * pts[:, 0] / pts[:, 2] + cam_in.cx
    py = cam_in.fy * pts[:, 1] / pts[:, 2] + cam_in.cy
    # Half-pixel pad absorbs fp rounding at the hull boundary.
    x0 = int(np.ceil(px.min() - 0.5 - 0.5))
    x1 = int(np.floor(px.max() - 0.5 + 0.5)) + 1
    y0 = int(np.ceil(py.min() - 0.5 - 0.5))
    y1 = int(np.floor(py.max() - 0.5 + 0.5)) + 1
    x0, x1 = max(x0, 0), min(x1, w)
    y0, y1 = max(y0, 0), min(y1, h)
    if x0 >= x1 or y0 >= y1:
        return (0, 0, 0, 0)
    return (x0, x1, y0, y1)


def _acceptance_mask(spec: FrustumSpec, x: np.ndarray, y: np.ndarray,
                     z: np.ndarray, ok: np.ndarray) -> np.ndarray:
    """The reprojection acceptance test on projected candidate pixels.

    NaN coordinates (points behind the camera) compare False throughout.
    """
    cx, cy = spec.center
    l1 = np.abs(x - cx) + np.abs(y - cy)
    return ok & (z > spec.near) & (z < spec.far) & (l1 < spec.l / 2.0)


def _collect(window: Window, cam_out: CameraPose, spec: FrustumSpec,
             regions: list[tuple[int, int, int, int]]) -> SampleSet:
    """Assemble the accepted samples from per-frame candidate regions."""
    rgb_parts, xyz_parts, f_parts, frame_parts, px_parts = [], [], [], [], []
    for j, (frame, cam) in enumerate(zip(window.frames, window.cams)):
        x0, x1, y0, y1 = regions[j]
        if x0 >= x1 or y0 >= y1:
            continue
        w, h = frame.width, frame.height
        x, y, z, ok = window.projected(j, cam_out)
        if (x0, x1, y0, y1) == (0, w, 0, h):
            accept = _acceptance_mask(spec, x, y, z, ok)
            idx = np.flatnonzero(accept)
        else:
            grid = (np.arange(y0, y1)[:, None] * w
                    + np.arange(x0, x1)[None, :]).ravel()
            accept = _acceptance_mask(spec, x[grid], y[grid], z[grid], ok[grid])
            idx = grid[accept]
        if idx.size == 0:
            continue
        rgb_parts.append(frame.data.reshape(-1, 3)[idx])
        xyz_parts.append(window.xyz(j).reshape(-1, 3)[idx])
        f_parts.append(np.full(idx.size, float(cam.frame_index)))
        frame_parts.append(np.full(idx.size, cam.frame_index, dtype=np.int64))
        px_parts.append(np.column_stack([idx % w, idx // w]).astype(np.int64))
    if not rgb_parts:
        result = SampleSet.empty()
    else:
        result = SampleSet(
            rgb=np.concatenate(rgb_parts),
            xyz=np.concatenate(xyz_parts),
            f=np.concatenate(f_parts),
            src_frame=np.concatenate(frame_parts),
            src_px=np.concatenate(px_parts),
        )
    return _attach_reference(result, window, cam_out, spec)


def _attach_reference(result: SampleSet, window: Window, cam_out: CameraPose,
                      spec: FrustumSpec) -> SampleSet:
    """Set the reference sample from (f_out, px) when it exists.

    The reference always passes the acceptance test (its reprojection is an
    exact round trip), but it is force-inserted if floating point ever says
    otherwise, per the gathering contract.
    """
    j = window.index_of(cam_out.frame_index)
    if j is None:
        return result
    frame, depth, cam = window.frames[j], window.depths[j], window.cams[j]
    qx, qy = spec.px
    if not (0 <= qx < frame.width and 0 <= qy < frame.height):
        return result
    d = depth.depth[qy, qx]
    if not np.isfinite(d):
        return result
    xyz = window.xyz(j)[qy, qx]
    ref = Sample(
        rgb=frame.data[qy, qx].copy(),
        xyz=xyz.copy(),
        f=float(cam.frame_index),
        src_frame=cam.frame_index,
        src_px=(qx, qy),
    )
    result.ref = ref
    key = (cam.frame_index, qy, qx)
    keys = result.keys()
    if len(result) and (keys == key).all(axis=1).any():
        return result
    insert_at = int(np.searchsorted(
        keys[:, 0] * (1 << 40) + keys[:, 1] * (1 << 20) + keys[:, 2],
        key[0] * (1 << 40) + key[1] * (1 << 20) + key[2],
    )) if len(result) else 0
    result.rgb = np.insert(result.rgb, insert_at, ref.rgb, axis=0)
    result.xyz = np.insert(result.xyz, insert_at, ref.xyz, axis=0)
    result.f = np.insert(result.f, insert_at, ref.f)
    result.src_frame = np.insert(result.src_frame, insert_at, ref.src_frame)
    result.src_px = np.insert(result.src_px, insert_at, ref.src_px, axis=0)
    return result


def gather(cam_out: CameraPose, spec: FrustumSpec, window: Window) -> SampleSet:
    """Gather the sample set of one output pixel via 2D frustum footprints."""
    corners = frustum_corners(cam_out, spec)
    regions = [
        frustum_hull_2d(corners, cam, (frame.width, frame.height))
        for frame, cam in zip(window.frames, window.cams)
    ]
    return _collect(window, cam_out, spec, regions)


def gather_bruteforce(cam_out: CameraPose, spec: FrustumSpec,
                      window: Window) -> SampleSet:
    """Oracle gather: test every pixel of every window frame."""
    regions = [(0, f.width, 0, f.height) for f in window.frames]
    return _collect(window, cam_out, spec, regions)


def sample_area(sample: Sample, cam: CameraPose, depth: float) -> float:
    """Squared scene-space edge length of the sample's source pixel.

    Unprojects the left and right edge midpoints of the pixel at the sample's
    depth; assuming square pixels the squared edge length stands in for the
    footprint area.
    """
    if not np.isfinite(depth) or depth <= 0:
        raise ValueError(f"sample_area needs a valid depth, got {depth}")
    qx, qy = sample.src_px
    left = project_to_scene(cam, np.array([float(qx), qy + 0.5]), depth)
    right = project_to_scene(cam, np.array([qx + 1.0, qy + 0.5]), depth)
    return float(np.sum((left - right) ** 2))


def area_map(depth_map: DepthMap, cam: CameraPose) -> np.ndarray:
    """sample_area for every pixel of a frame: (depth / fx)^2, NaN invalid."""
    return (depth_map.depth / cam.fx) ** 2


def depth_order(sample: Sample, sample_set: SampleSet, p_xyz: np.ndarray) -> int:
    """Number of samples in the set strictly closer to p_xyz than `sample`."""
    d_all = np.sum((sample_set.xyz - p_xyz) ** 2, axis=1)
    d_s = float(np.sum((np.asarray(sample.xyz) - p_xyz) ** 2))
    return int(np.sum(d_all < d_s))


def depth_order_all(sample_set: SampleSet, p_xyz: np.ndarray) -> np.ndarray:
    """depth_order of every sample in the set (counting oracle, O(n log n))."""
    d = np.sum((sample_set.xyz - p_xyz) ** 2, axis=1)
    order = np.argsort(d, kind="stable")
    sorted_d = d[order]
    # Rank of the first element of each tie run.
    first = np.searchsorted(sorted_d, sorted_d, side="left")
    ranks = np.empty(len(d), dtype=np.int64)
    ranks[order] = first
    return ranks
