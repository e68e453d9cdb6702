"""Synthetic scene harness: ray-cast ground truth for oracles and benchmarks.

Renders textured planes and boxes with exact per-pixel depth and exact
camera poses. Textures are analytic functions of the world-space hit point
(checker plus a seeded sinusoid bank), so the same scene point has the same
color in every frame, which is what the scene-space filters assume.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import CameraPose, DepthMap, Frame, delinearize, linearize
from .io_formats import Dataset

PSNR_CAP = 99.0


@dataclass(frozen=True)
class TexturedBox:
    """Axis-aligned box; masked boxes are the inpainting removal targets."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    masked: bool = False

    def bounds_at(self, f: float) -> tuple[np.ndarray, np.ndarray]:
        off = np.asarray(self.velocity) * f
        return np.asarray(self.lo) + off, np.asarray(self.hi) + off


@dataclass(frozen=True)
class SynthScene:
    width: int = 320
    height: int = 180
    num_frames: int = 60
    seed: int = 0
    fov_deg: float = 60.0
    trajectory: str = "translate"  # or "arc"
    extent: float = 2.4            # total camera travel in world units
    wall_z: float = 6.0
    wall_tint: tuple[float, float, float] = (1.0, 0.92, 0.85)
    boxes: tuple[TexturedBox, ...] = ()
    base_gray: float = 120.0
    checker_size: float = 0.8
    checker_amp: float = 28.0
    wave_amp: float = 30.0
    wave_freq: float = 0.5
    supersample: int = 1

    @property
    def focal(self) -> float:
        return (self.width / 2.0) / np.tan(np.radians(self.fov_deg) / 2.0)

    def with_resolution_factor(self, k: int) -> "SynthScene":
        return replace(self, width=self.width * k, height=self.height * k)

    def without_masked_boxes(self) -> "SynthScene":
        return replace(self, boxes=tuple(b for b in self.boxes if not b.masked))


def _look_at(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    z = target - center
    z = z / np.linalg.norm(z)
    x = np.cross([0.0, 1.0, 0.0], z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])


def scene_camera(scene: SynthScene, f: int) -> CameraPose:
    n = max(scene.num_frames - 1, 1)
    s = f / n - 0.5
    if scene.trajectory == "translate":
        center = np.array([s * scene.extent, 0.0, 0.0])
        rot = np.eye(3)
    elif scene.trajectory == "diagonal":
        # x sweep with a slow vertical oscillation: subpixel phases vary on
        # both axes, which multi-frame super resolution depends on.
        y = 0.2 * scene.extent * np.sin(2.0 * np.pi * 2.3 * (f / max(scene.num_frames, 1)))
        center = np.array([s * scene.extent, y, 0.0])
        rot = np.eye(3)
    elif scene.trajectory == "arc":
        target = np.array([0.0, 0.0, scene.wall_z * 0.7])
        radius = np.linalg.norm(target)
        angle = s * scene.extent / radius
        center = target + radius * np.array([np.sin(angle), 0.0, -np.cos(angle)])
        rot = _look_at(center, target)
    else:
        raise ValueError(f"unknown trajectory {scene.trajectory!r}")
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = -rot @ center
    return CameraPose(scene.focal, scene.focal,
                      scene.width / 2.0, scene.height / 2.0, m, f)


def _texture_params(scene: SynthScene, n_objects: int) -> list[dict]:
    rng = np.random.default_rng(scene.seed)
    params = []
    for _ in range(n_objects):
        params.append(
            {
                "phase": rng.uniform(0.0, 2 * np.pi, size=4),
                "freq": scene.wave_freq * rng.uniform(0.6, 1.6, size=4),
                "offset": rng.uniform(0.0, 4.0, size=2),
            }
        )
    return params


def _albedo(u, v, tint, p, scene: SynthScene):
    checker = (
        np.floor((u + p["offset"][0]) / scene.checker_size)
        + np.floor((v + p["offset"][1]) / scene.checker_size)
    ) % 2.0
    gray = (
        scene.base_gray
        + scene.checker_amp * (2.0 * checker - 1.0)
        + scene.wave_amp * 0.5 * np.sin(2 * np.pi * p["freq"][0] * u + p["phase"][0])
        + scene.wave_amp * 0.5 * np.sin(2 * np.pi * p["freq"][1] * v + p["phase"][1])
        + scene.wave_amp * 0.25 * np.sin(
            2 * np.pi * (p["freq"][2] * u + p["freq"][3] * v) + p["phase"][2]
        )
    )
    tint = np.asarray(tint)
    return np.clip(gray[..., None] * tint, 4.0, 251.0)


_LIGHT_DIR = np.array([0.25, 0.35, 0.9]) / np.linalg.norm([0.25, 0.35, 0.9])
_AMBIENT = 0.55


def _shade(albedo: np.ndarray, normals: np.ndarray) -> np.ndarray:
    lam = np.maximum(0.0, -(normals @ _LIGHT_DIR))
    return albedo * (_AMBIENT + (1.0 - _AMBIENT) * lam)[..., None]


def _intersect_boxes(origin, dirs, boxes, f):
    """Nearest box hit per ray: (t, box id, normal axis+sign); misses are inf."""
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best_box = np.full(n, -1, dtype=np.int64)
    best_axis = np.zeros(n, dtype=np.int64)
    best_sign = np.zeros(n)
    for b_id, box in enumerate(boxes):
        lo, hi = box.bounds_at(f)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        tnear = np.minimum(t1, t2)
        tfar = np.maximum(t1, t2)
        enter_axis = np.argmax(tnear, axis=1)
        t_enter = np.max(tnear, axis=1)
        t_exit = np.min(tfar, axis=1)
        hit = (t_enter <= t_exit) & (t_enter > 1e-9) & (t_enter < best_t)
        best_t = np.where(hit, t_enter, best_t)
        best_box = np.where(hit, b_id, best_box)
        best_axis = np.where(hit, enter_axis, best_axis)
        ax_dir = np.take_along_axis(dirs, enter_axis[:, None], axis=1)[:, 0]
        best_sign = np.where(hit, -np.sign(ax_dir), best_sign)
    return best_t, best_box, best_axis, best_sign


def render_scene(scene: SynthScene) -> Dataset:
    """Ray-cast the scene: frames (linear RGB), exact depth, poses, masks.

    Deterministic for a fixed seed. Depth is exact: unprojecting any valid
    pixel lands on the analytic surface. When supersample > 1, colors are
    box-averaged from a finer grid but depth/masks stay at output resolution.
    """
    params = _texture_params(scene, 1 + len(scene.boxes))
    frames, depths, cams, masks = [], [], [], []
    any_masked = any(b.masked for b in scene.boxes)
    ss = scene.supersample
    for f in range(scene.num_frames):
        cam = scene_camera(scene, f)
        color = _render_grid(scene, cam, f, params, scene.width * ss,
                             scene.height * ss, cam.fx * ss, cam.fy * ss,
                             cam.cx * ss, cam.cy * ss, want_aux=False)[0]
        if ss > 1:
            color = color.reshape(scene.height, ss, scene.width, ss, 3).mean((1, 3))
        _, depth, mask = _render_grid(scene, cam, f, params, scene.width,
                                      scene.height, cam.fx, cam.fy, cam.cx,
                                      cam.cy, want_aux=True)
        frames.append(Frame(color, f))
        depths.append(DepthMap(depth))
        cams.append(cam)
        masks.append(mask)
    return Dataset(frames, cams, depths, masks if any_masked else None)


def _render_grid(scene, cam, f, params, w, h, fx, fy, cx, cy, want_aux):
    xs, ys = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    d_cam = np.stack(
        [(xs - cx) / fx, (ys - cy) / fy, np.ones_like(xs)], axis=-1
    ).reshape(-1, 3)
    dirs = d_cam @ cam.rotation  # R^T d
    origin = cam.center
    n = dirs.shape[0]

    # Wall plane z = wall_z; camera z-depth equals the ray parameter because
    # rays are parameterized with unit camera-space z.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_wall = (scene.wall_z - origin[2]) / dirs[:, 2]
    t_wall = np.where(dirs[:, 2] > 1e-12, t_wall, np.inf)

    t_box, box_id, box_axis, box_sign = _intersect_boxes(origin, dirs, scene.boxes, f)

    wall_closer = t_wall <= t_box
    t = np.where(wall_closer, t_wall, t_box)
    valid = np.isfinite(t)
    t_safe = np.where(valid, t, 1.0)
    pts = origin + t_safe[:, None] * dirs

    color = np.zeros((n, 3))
    normals = np.zeros((n, 3))

    wall_hit = wall_closer & valid
    if np.any(wall_hit):
        alb = _albedo(pts[wall_hit, 0], pts[wall_hit, 1], scene.wall_tint,
                      params[0], scene)
        normals[wall_hit] = [0.0, 0.0, -1.0]
        color[wall_hit] = _shade(alb, normals[wall_hit])

    for b_id, box in enumerate(scene.boxes):
        sel = (~wall_closer) & valid & (box_id == b_id)
        if not np.any(sel):
            continue
        axis = box_axis[sel]
        uv_axes = [(1, 2), (0, 2), (0, 1)]
        u = np.empty(axis.shape)
        v = np.empty(axis.shape)
        for a, (ua, va) in enumerate(uv_axes):
            m = axis == a
            u[m] = pts[sel][m, ua]
            v[m] = pts[sel][m, va]
        alb = _albedo(u, v, box.tint, params[1 + b_id], scene)
        nrm = np.zeros((int(sel.sum()), 3))
        nrm[np.arange(len(axis)), axis] = box_sign[sel]
        normals[sel] = nrm
        color[sel] = _shade(alb, nrm)

    color = color.reshape(h, w, 3)
    if not want_aux:
        return color, None, None
    depth = np.where(valid, t_safe, np.nan).reshape(h, w)
    masked_ids = {i for i, b in enumerate(scene.boxes) if b.masked}
    mask = np.isin(box_id, list(masked_ids)) & (~wall_closer) & valid
    return color, depth, mask.reshape(h, w)


def add_noise(ds: Dataset, sigma: float, seed: int) -> Dataset:
    """Add zero-mean grayscale Gaussian noise in gamma space, clamped.

    The same noise value corrupts all three channels of a pixel. sigma is in
    8-bit units; sigma = 0 returns the frames unchanged.
    """
    if sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if sigma == 0:
        return ds
    rng = np.random.default_rng(seed)
    noisy = []
    for frame in ds.frames:
        srgb = delinearize(frame.data)
        n = rng.normal(0.0, sigma, size=(frame.height, frame.width, 1))
        srgb = np.clip(srgb + n, 0.0, 255.0)
        noisy.append(Frame(linearize(srgb), frame.frame_index))
    return Dataset(noisy, ds.cams, ds.depths, ds.masks, ds.scale)


def psnr(a: list[Frame], b: list[Frame]) -> float:
    """PSNR in dB over all pixels/channels/frames, in 8-bit gamma space."""
    if len(a) != len(b):
        raise ValueError("sequences must have equal length")
    if not a:
        raise ValueError("empty sequences")
    sq_sum = 0.0
    count = 0
    for fa, fb in zip(a, b):
        ga = np.rint(delinearize(fa.data))
        gb = np.rint(delinearize(fb.data))
        diff = ga - gb
        sq_sum += float(np.sum(diff * diff))
        count += diff.size
    mse = sq_sum / count
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(255.0**2 / mse))


def box_downsample(frames: list[Frame], k: int) -> list[Frame]:
    """k x k box average in linear space (the super-resolution input model)."""
    out = []
    for frame in frames:
        h, w = frame.height // k, frame.width // k
        data = frame.data[: h * k, : w * k].reshape(h, k, w, k, 3).mean((1, 3))
        out.append(Frame(data, frame.frame_index))
    return out
