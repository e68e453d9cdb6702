"""Full-video rendering: gather samples per output pixel, weight, reduce.

The per-pixel gathering contract lives in `sampling`; this module runs the
same acceptance test in a scatter formulation that is vectorized over whole
input frames: every input pixel is projected into the output view once and
expanded into the output pixels whose frustums it falls into. The two
formulations produce identical sample sets, the scatter one just swaps the
loop order.

Determinism: input frames are visited in ascending frame order and pairs are
generated in row-major source-pixel order, so each output pixel accumulates
its samples in the documented set order. Worker threads own disjoint output
row blocks, which makes results bit-identical for any worker count.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .geometry import (
    FAR_PLANE,
    NEAR_PLANE,
    CameraPose,
    DepthMap,
    Frame,
    SceneScale,
    normalize_scene,
    project_xyz_arrays,
)
from .filters import WEIGHT_EPS, ApertureSpec, ShutterFunction, Sigmas
from .io_formats import Dataset
from .sampling import area_map, frame_world_points

logger = logging.getLogger(__name__)

APPLICATIONS = (
    "denoise",
    "deblur",
    "superres",
    "inpaint",
    "semitransparent",
    "shutter",
    "action",
    "aperture",
)

DEFAULT_SIGMAS = {
    "denoise": Sigmas(rgb=40.0, xyz=10.0, f=6.0),
    "deblur": Sigmas(rgb=200.0, xyz=10.0, f=20.0),
    "superres": Sigmas(rgb=50.0, area=0.02),
    "inpaint": Sigmas(rgb=55.0),
    "semitransparent": Sigmas(rgb=55.0),
    "shutter": Sigmas(),
    "action": Sigmas(ord=10.0),
    "aperture": Sigmas(),
}

# Gather radius when the application has no sigma_f to derive one from.
DEFAULT_WINDOW_RADIUS = {
    "superres": 15,
    "inpaint": 30,
    "semitransparent": 30,
    "action": 30,
    "aperture": 10,
}

MAX_WINDOW_RADIUS = 60
SEMI_REF_SIGMA_RGB = 80.0
MEAN_SHIFT_STEPS = 2


class ConfigError(ValueError):
    """A render job is missing or carrying the wrong parameters."""


@dataclass(frozen=True)
class Region3D:
    """Axis-aligned scene-space box with an optional frame interval."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    frames: tuple[int, int] | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
            raise ValueError("region needs lo <= hi per axis")

    def contains_frame(self, f: int) -> bool:
        return self.frames is None or self.frames[0] <= f <= self.frames[1]


@dataclass(frozen=True)
class RenderJob:
    """One rendering configuration; sigma/window defaults come per app."""

    application: str
    sigmas: Sigmas | None = None
    frustum_l: float = 3.0
    window_radius: int | None = None
    shutter: ShutterFunction | None = None
    aperture: ApertureSpec | None = None
    region: Region3D | None = None
    superres_factor: int = 1
    threads: int = 1

    def resolved(self) -> "RenderJob":
        job = self
        if job.application not in APPLICATIONS:
            raise ConfigError(f"unknown application {job.application!r}")
        if job.sigmas is None:
            job = replace(job, sigmas=DEFAULT_SIGMAS[job.application])
        if job.threads < 1:
            raise ConfigError("threads must be >= 1")
        job.validate()
        return job

    def validate(self) -> None:
        app = self.application
        sig = self.sigmas
        need_shutter = app in ("shutter", "action")
        if need_shutter and self.shutter is None:
            raise ConfigError(f"{app} requires a shutter function")
        if not need_shutter and self.shutter is not None:
            raise ConfigError(f"{app} does not take a shutter function")
        if app == "aperture" and self.aperture is None:
            raise ConfigError("aperture requires an aperture spec")
        if app != "aperture" and self.aperture is not None:
            raise ConfigError(f"{app} does not take an aperture spec")
        if self.region is not None and app not in ("inpaint", "semitransparent"):
            raise ConfigError(f"{app} does not take a 3D region")
        if self.superres_factor != 1 and app != "superres":
            raise ConfigError("superres_factor is only valid for superres")
        if self.superres_factor < 1:
            raise ConfigError("superres_factor must be >= 1")
        if self.frustum_l < 1.0:
            raise ConfigError("frustum side length must be >= 1")
        if app in ("denoise", "deblur") and sig is not None:
            if sig.rgb is None and sig.xyz is None and sig.f is None:
                raise ConfigError(f"{app} needs at least one of sigma rgb/xyz/f")
        if app == "superres" and (sig is None or sig.area is None):
            raise ConfigError("superres needs sigma_area")
        if (app == "superres" and sig is not None and sig.xyz is not None
                and self.superres_factor != 1):
            raise ConfigError("sigma_xyz in superres needs factor 1 (no upscaled "
                              "depth to take a reference position from)")
        if app in ("inpaint", "semitransparent") and (sig is None or sig.rgb is None):
            raise ConfigError(f"{app} needs sigma_rgb")
        if app == "action" and (sig is None or sig.ord is None):
            raise ConfigError("action needs sigma_ord")

    def effective_window_radius(self) -> int:
        if self.window_radius is not None:
            if self.window_radius < 0:
                raise ConfigError("window radius must be >= 0")
            return self.window_radius
        if self.sigmas is not None and self.sigmas.f is not None:
            return min(int(round(3.0 * self.sigmas.f)), MAX_WINDOW_RADIUS)
        return DEFAULT_WINDOW_RADIUS.get(self.application, 30)


@dataclass
class FrameStats:
    frame: int
    seconds: float
    samples_per_pixel: float
    weight_fraction: float


@dataclass
class VideoStats:
    frames: int
    sec_per_frame: float
    samples_per_pixel: float
    weight_fraction: float

    @classmethod
    def collect(cls, stats: list[FrameStats]) -> "VideoStats":
        if not stats:
            return cls(0, 0.0, 0.0, 0.0)
        return cls(
            frames=len(stats),
            sec_per_frame=float(np.mean([s.seconds for s in stats])),
            samples_per_pixel=float(np.mean([s.samples_per_pixel for s in stats])),
            weight_fraction=float(np.mean([s.weight_fraction for s in stats])),
        )


class EngineInputs:
    """Normalized, linearized inputs plus per-frame caches shared by renders."""

    def __init__(self, frames, cams, depths, masks, scale: float):
        self.frames: list[Frame] = frames
        self.cams: list[CameraPose] = cams
        self.depths: list[DepthMap] = depths
        self.masks = masks
        self.scale = scale
        self.positions = {c.frame_index: i for i, c in enumerate(cams)}
        self._xyz: dict[int, np.ndarray] = {}
        self._area: dict[int, np.ndarray] = {}
        self._sharp_raw: dict[int, float] | None = None
        self._region_masks: dict[int, np.ndarray] = {}

    def xyz_flat(self, pos: int) -> np.ndarray:
        if pos not in self._xyz:
            self._xyz[pos] = frame_world_points(
                self.depths[pos], self.cams[pos]
            ).reshape(-1, 3)
        return self._xyz[pos]

    def area_flat(self, pos: int) -> np.ndarray:
        if pos not in self._area:
            self._area[pos] = area_map(self.depths[pos], self.cams[pos]).reshape(-1)
        return self._area[pos]

    def sharpness(self, positions: list[int]) -> dict[int, float]:
        if self._sharp_raw is None:
            from .filters import frame_sharpness_raw

            self._sharp_raw = {
                c.frame_index: frame_sharpness_raw(f.data)
                for c, f in zip(self.cams, self.frames)
            }
        raw = {self.cams[p].frame_index: self._sharp_raw[self.cams[p].frame_index]
               for p in positions}
        peak = max(raw.values()) if raw else 0.0
        if peak <= 0.0:
            return {k: 0.0 for k in raw}
        return {k: v / peak for k, v in raw.items()}

    def mask_flat(self, pos: int, region: Region3D | None) -> np.ndarray | None:
        """Source mask of a frame: file masks win over a scene-space region."""
        if self.masks is not None:
            return self.masks[pos].reshape(-1)
        if region is None:
            return None
        if pos not in self._region_masks:
            f_idx = self.cams[pos].frame_index
            if not region.contains_frame(f_idx):
                m = np.zeros(self.depths[pos].depth.size, dtype=bool)
            else:
                pts = self.xyz_flat(pos)
                with np.errstate(invalid="ignore"):
                    m = np.all(pts >= np.asarray(region.lo), axis=1) & np.all(
                        pts <= np.asarray(region.hi), axis=1
                    )
                m &= np.isfinite(pts[:, 0])
            self._region_masks[pos] = m
        return self._region_masks[pos]


def prepare_inputs(ds: Dataset, stride: int = 4) -> EngineInputs:
    """Normalize the scene scale and wrap the dataset in engine form."""
    if ds.depths is None:
        raise ConfigError("rendering requires depth maps; run depth estimation first")
    if ds.scale is not None:
        scale = SceneScale(ds.scale)
    else:
        scale = normalize_scene(ds.frames, ds.depths, ds.cams, stride=stride)
        logger.info("scene scale %.6g (normalized to a 10^3 cube)", scale.scale)
    cams = [scale.apply_to_camera(c) for c in ds.cams]
    depths = [scale.apply_to_depth(d) for d in ds.depths]
    return EngineInputs(ds.frames, cams, depths, ds.masks, scale.scale)


def region_to_masks(
    region: Region3D,
    frames: list[Frame],
    depths: list[DepthMap],
    cams: list[CameraPose],
) -> list[np.ndarray]:
    """Project each frame into the region: True where the pixel's scene point
    falls inside the box and the frame is inside the region's interval."""
    masks = []
    for frame, d, cam in zip(frames, depths, cams):
        if not region.contains_frame(cam.frame_index):
            masks.append(np.zeros((d.height, d.width), dtype=bool))
            continue
        pts = frame_world_points(d, cam)
        with np.errstate(invalid="ignore"):
            m = np.all(pts >= np.asarray(region.lo), axis=2) & np.all(
                pts <= np.asarray(region.hi), axis=2
            )
        masks.append(m & d.valid)
    return masks


# --- scatter-side gathering -------------------------------------------------

def _candidate_pairs(x, y, z, ok, l, out_w, out_h, chunk_pairs=4_000_000):
    """Expand projected input pixels into accepted (src, out) index pairs.

    Follows the gather acceptance test: L1 pixel distance < l/2, reprojected
    depth in (near, far), point in front. Pairs come out in row-major source
    pixel order (the documented per-frame sample order).
    """
    depth_ok = ok & (z > NEAR_PLANE) & (z < FAR_PLANE)
    # Cheap pre-cull: projections further than l from the image can't hit it.
    with np.errstate(invalid="ignore"):
        depth_ok &= (x > -l) & (x < out_w + l) & (y > -l) & (y < out_h + l)
    valid = np.flatnonzero(depth_ok)
    if valid.size == 0:
        return (np.empty(0, dtype=np.int64),) * 2
    # An open interval of length l holds at most ceil(l) integers, so a
    # k x k candidate window starting at floor(coord - l/2 - 0.5) + 1 covers
    # every pixel that can pass the strict L1 test.
    k = int(np.ceil(l))
    offsets = np.arange(k)
    src_parts, out_parts = [], []
    step = max(1, chunk_pairs // (k * k))
    half = l / 2.0
    for start in range(0, valid.size, step):
        v = valid[start:start + step]
        xv, yv = x[v], y[v]
        base_x = np.floor(xv - half - 0.5).astype(np.int64) + 1
        base_y = np.floor(yv - half - 0.5).astype(np.int64) + 1
        cand_x = base_x[:, None] + offsets                    # (n, k)
        cand_y = base_y[:, None] + offsets
        ax = np.abs(cand_x + 0.5 - xv[:, None])
        ay = np.abs(cand_y + 0.5 - yv[:, None])
        ok_x = (cand_x >= 0) & (cand_x < out_w)
        ok_y = (cand_y >= 0) & (cand_y < out_h)
        m = (ay[:, :, None] + ax[:, None, :] < half) \
            & (ok_y[:, :, None] & ok_x[:, None, :])
        out_idx = (cand_y[:, :, None] * out_w + cand_x[:, None, :]
                   ).reshape(v.size, -1)
        m = m.reshape(v.size, -1)
        qi, ci = np.nonzero(m)
        src_parts.append(v[qi])
        out_parts.append(out_idx[qi, ci])
    return np.concatenate(src_parts), np.concatenate(out_parts)


@dataclass
class _OutputGrid:
    cam: CameraPose
    w: int
    h: int
    f_out: float

    @property
    def npix(self) -> int:
        return self.w * self.h


@dataclass
class _Accumulators:
    rgb: np.ndarray
    weight: np.ndarray
    count: np.ndarray

    @classmethod
    def zeros(cls, npix: int) -> "_Accumulators":
        return cls(np.zeros((npix, 3)), np.zeros(npix), np.zeros(npix, dtype=np.int64))


def _accumulate_rows(acc, lo, hi, out_idx, w, rgb):
    """Add weighted pairs into accumulator rows [lo, hi); order-preserving."""
    n = hi - lo
    if lo == 0 and hi == acc.weight.shape[0]:
        oi, ww, sel_rgb = out_idx, w, rgb
    else:
        sel = (out_idx >= lo) & (out_idx < hi)
        if not np.any(sel):
            return
        oi = out_idx[sel] - lo
        ww = w[sel]
        sel_rgb = rgb[sel]
    acc.weight[lo:hi] += np.bincount(oi, weights=ww, minlength=n)
    for c in range(3):
        acc.rgb[lo:hi, c] += np.bincount(oi, weights=ww * sel_rgb[:, c],
                                         minlength=n)
    acc.count[lo:hi] += np.bincount(oi, minlength=n)


def _row_blocks(grid: _OutputGrid, threads: int) -> list[tuple[int, int]]:
    threads = max(1, min(threads, grid.h))
    edges = np.linspace(0, grid.h, threads + 1).astype(int)
    return [
        (int(e0) * grid.w, int(e1) * grid.w)
        for e0, e1 in zip(edges[:-1], edges[1:])
        if e1 > e0
    ]


def _sweep(inputs, window, grid, job, weight_fn, acc, executor=None):
    """One pass over the window: project, pair up, weight, accumulate.

    weight_fn(pos, src_idx, out_idx) -> (N,) nonnegative weights for the
    accepted pairs of the frame at position pos.
    """
    blocks = _row_blocks(grid, job.threads)
    for pos in window:
        x, y, z, ok = project_xyz_arrays(grid.cam, inputs.xyz_flat(pos))
        src_idx, out_idx = _candidate_pairs(x, y, z, ok, job.frustum_l,
                                            grid.w, grid.h)
        if src_idx.size == 0:
            continue
        w = weight_fn(pos, src_idx, out_idx)
        rgb = inputs.frames[pos].data.reshape(-1, 3)[src_idx]
        if executor is None or len(blocks) == 1:
            for lo, hi in blocks:
                _accumulate_rows(acc, lo, hi, out_idx, w, rgb)
        else:
            futures = [
                executor.submit(_accumulate_rows, acc, lo, hi, out_idx, w, rgb)
                for lo, hi in blocks
            ]
            for fut in futures:
                fut.result()


def _gaussian_pair_weights(sig: Sigmas, d_rgb=None, d_xyz=None, d_f=None):
    """exp(-sum_d diff^2 / 2 sigma_d^2) over whichever dims are given."""
    log_w = None

    def add(term):
        nonlocal log_w
        log_w = term if log_w is None else log_w + term

    if sig.rgb is not None and d_rgb is not None:
        add(-np.sum(d_rgb * d_rgb, axis=1) / (2.0 * sig.rgb**2))
    if sig.xyz is not None and d_xyz is not None:
        add(-np.sum(d_xyz * d_xyz, axis=1) / (2.0 * sig.xyz**2))
    if sig.f is not None and d_f is not None:
        add(-(d_f * d_f) / (2.0 * sig.f**2))
    if log_w is None:
        return None
    return np.exp(log_w)


def _bilinear_upsample(data: np.ndarray, k: int) -> np.ndarray:
    """Bilinear upsample by integer factor k with pixel-center alignment."""
    h, w = data.shape[:2]
    us = np.clip((np.arange(w * k) + 0.5) / k - 0.5, 0.0, w - 1.0)
    vs = np.clip((np.arange(h * k) + 0.5) / k - 0.5, 0.0, h - 1.0)
    iu = np.minimum(us.astype(int), w - 2) if w > 1 else np.zeros(w * k, int)
    iv = np.minimum(vs.astype(int), h - 2) if h > 1 else np.zeros(h * k, int)
    fu = (us - iu)[None, :, None]
    fv = (vs - iv)[:, None, None]
    a = data[np.ix_(iv, iu)]
    b = data[np.ix_(iv, np.minimum(iu + 1, w - 1))]
    c = data[np.ix_(np.minimum(iv + 1, h - 1), iu)]
    d = data[np.ix_(np.minimum(iv + 1, h - 1), np.minimum(iu + 1, w - 1))]
    return (a * (1 - fu) + b * fu) * (1 - fv) + (c * (1 - fu) + d * fu) * fv


def _select_window(inputs: EngineInputs, f_out: int, job: RenderJob) -> list[int]:
    """Positions of the input frames gathered for output frame f_out."""
    indices = [c.frame_index for c in inputs.cams]
    if job.application == "shutter":
        # Zero-weight frames cannot contribute; gather only the support,
        # optionally intersected with an explicit radius.
        pos = [
            i for i, idx in enumerate(indices)
            if float(job.shutter.weights(np.array([float(idx)]))[0]) > 0.0
        ]
        if job.window_radius is not None:
            pos = [i for i in pos if abs(indices[i] - f_out) <= job.window_radius]
        return pos
    radius = job.effective_window_radius()
    return [i for i, idx in enumerate(indices) if abs(idx - f_out) <= radius]


def render_frame(f: int, job: RenderJob, inputs: EngineInputs) -> tuple[Frame, FrameStats]:
    """Render one output frame; returns linear-RGB data plus statistics."""
    job = job.resolved()
    t0 = time.perf_counter()
    if f not in inputs.positions:
        raise ConfigError(f"no input frame with index {f}")
    pos_out = inputs.positions[f]
    window = _select_window(inputs, f, job)

    base_cam = inputs.cams[pos_out]
    base_frame = inputs.frames[pos_out]
    k = job.superres_factor
    if job.application == "superres" and k > 1:
        grid = _OutputGrid(base_cam.scaled_resolution(k),
                           base_frame.width * k, base_frame.height * k, float(f))
    else:
        grid = _OutputGrid(base_cam, base_frame.width, base_frame.height, float(f))

    app = job.application
    executor = None
    if job.threads > 1:
        executor = ThreadPoolExecutor(max_workers=job.threads)
    try:
        if app in ("denoise", "deblur"):
            out, acc = _render_reference_gaussian(job, inputs, window, grid, pos_out,
                                                  executor)
        elif app == "superres":
            out, acc = _render_superres(job, inputs, window, grid, pos_out, executor)
        elif app in ("inpaint", "semitransparent"):
            out, acc = _render_inpaint(job, inputs, window, grid, pos_out, executor)
        elif app == "shutter":
            out, acc = _render_shutter(job, inputs, window, grid, pos_out, executor)
        elif app == "action":
            out, acc = _render_action(job, inputs, window, grid, pos_out)
        else:
            out, acc = _render_aperture(job, inputs, window, grid, pos_out, executor)
    finally:
        if executor is not None:
            executor.shutdown()

    seconds = time.perf_counter() - t0
    gathered = acc.count > 0
    frac = float(np.mean(acc.weight[gathered] / acc.count[gathered])) if gathered.any() else 0.0
    stats = FrameStats(
        frame=f,
        seconds=seconds,
        samples_per_pixel=float(acc.count.sum() / grid.npix),
        weight_fraction=frac,
    )
    data = out.reshape(grid.h, grid.w, 3)
    return Frame(np.clip(data, 0.0, 255.0), f), stats


def _finalize(acc: _Accumulators, fallback: np.ndarray) -> np.ndarray:
    ok = acc.weight >= WEIGHT_EPS
    out = fallback.copy()
    out[ok] = acc.rgb[ok] / acc.weight[ok, None]
    return out


def _render_reference_gaussian(job, inputs, window, grid, pos_out, executor):
    """Denoise and deblur: Gaussian about the output pixel's own sample.

    The active Gaussian dimensions are fused into single reference/sample
    matrices so each pair costs two gathers and one scaled inner product.
    """
    sig = job.sigmas
    ref_rgb = inputs.frames[pos_out].data.reshape(-1, 3)
    ref_xyz = inputs.xyz_flat(pos_out)
    ref_ok = np.isfinite(ref_xyz[:, 0])
    sharp = inputs.sharpness(window) if job.application == "deblur" else None

    cols = []           # (column scale, ref matrix) fused over active dims
    if sig.rgb is not None:
        cols.append((1.0 / (2.0 * sig.rgb**2), ref_rgb))
    if sig.xyz is not None:
        cols.append((1.0 / (2.0 * sig.xyz**2), ref_xyz))
    scale = (np.concatenate([np.full(m.shape[1], s) for s, m in cols])
             if cols else None)
    ref_cat = np.concatenate([m for _, m in cols], axis=1) if cols else None
    samp_cache: dict[int, np.ndarray] = {}

    def samp_cat(pos):
        if pos not in samp_cache:
            parts = []
            if sig.rgb is not None:
                parts.append(inputs.frames[pos].data.reshape(-1, 3))
            if sig.xyz is not None:
                parts.append(inputs.xyz_flat(pos))
            samp_cache[pos] = np.concatenate(parts, axis=1)
        return samp_cache[pos]

    acc = _Accumulators.zeros(grid.npix)

    def weights(pos, src_idx, out_idx):
        if ref_cat is not None:
            d = samp_cat(pos)[src_idx] - ref_cat[out_idx]
            log_w = -((d * d) @ scale)
        else:
            log_w = np.zeros(src_idx.size)
        if sig.f is not None:
            df = float(inputs.cams[pos].frame_index) - grid.f_out
            log_w -= df * df / (2.0 * sig.f**2)
        w = np.exp(log_w)
        if sharp is not None:
            w = w * sharp[inputs.cams[pos].frame_index]
        return np.where(ref_ok[out_idx], w, 0.0)

    _sweep(inputs, window, grid, job, weights, acc, executor)
    return _finalize(acc, ref_rgb.copy()), acc


def _render_superres(job, inputs, window, grid, pos_out, executor):
    """Super resolution: frustums on the upscaled grid, bilinear reference."""
    sig = job.sigmas
    k = job.superres_factor
    base = inputs.frames[pos_out].data
    ref_rgb = (_bilinear_upsample(base, k) if k > 1 else base).reshape(-1, 3)
    ref_xyz = inputs.xyz_flat(pos_out) if sig.xyz is not None else None
    ref_ok = np.isfinite(ref_xyz[:, 0]) if ref_xyz is not None else None

    acc = _Accumulators.zeros(grid.npix)

    def weights(pos, src_idx, out_idx):
        d_rgb = (inputs.frames[pos].data.reshape(-1, 3)[src_idx] - ref_rgb[out_idx]
                 ) if sig.rgb is not None else None
        d_xyz = (inputs.xyz_flat(pos)[src_idx] - ref_xyz[out_idx]
                 ) if ref_xyz is not None else None
        d_f = (np.full(src_idx.size, float(inputs.cams[pos].frame_index) - grid.f_out)
               ) if sig.f is not None else None
        w = _gaussian_pair_weights(sig, d_rgb=d_rgb, d_xyz=d_xyz, d_f=d_f)
        area = inputs.area_flat(pos)[src_idx]
        area_term = np.exp(-(area * area) / (2.0 * sig.area**2))
        w = area_term if w is None else w * area_term
        if ref_ok is not None:
            w = np.where(ref_ok[out_idx], w, 0.0)
        return w

    _sweep(inputs, window, grid, job, weights, acc, executor)
    return _finalize(acc, ref_rgb.copy()), acc


def _render_shutter(job, inputs, window, grid, pos_out, executor):
    """Computational shutter: weight is the shutter value of the sample time."""
    acc = _Accumulators.zeros(grid.npix)

    def weights(pos, src_idx, out_idx):
        xi = float(job.shutter.weights(
            np.array([float(inputs.cams[pos].frame_index)]))[0])
        return np.full(src_idx.size, xi)

    _sweep(inputs, window, grid, job, weights, acc, executor)
    fallback = inputs.frames[pos_out].data.reshape(-1, 3).copy()
    return _finalize(acc, fallback), acc


def _render_aperture(job, inputs, window, grid, pos_out, executor):
    """Virtual aperture: cone test around each output pixel's viewing ray."""
    ap = job.aperture
    cam = grid.cam
    xs, ys = np.meshgrid(np.arange(grid.w) + 0.5, np.arange(grid.h) + 0.5)
    d_cam = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy,
                      np.ones_like(xs)], axis=-1).reshape(-1, 3)
    rays = d_cam @ cam.rotation
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    center = cam.center

    # Widen the gather frustum to cover the projected aperture diameter over
    # the window's depth range (the cone is wider than one pixel frustum).
    zs = [NEAR_PLANE, ap.z0]
    for pos in window:
        d = inputs.depths[pos].depth
        finite = d[np.isfinite(d)]
        if finite.size:
            zs.extend([float(finite.min()), float(finite.max())])
    diam_px = max(
        2.0 * ap.radius_at(z) * max(cam.fx, cam.fy) / max(z, NEAR_PLANE) for z in zs
    )
    l_eff = min(max(job.frustum_l, diam_px), float(max(grid.w, grid.h)))
    job = replace(job, frustum_l=l_eff)

    acc = _Accumulators.zeros(grid.npix)

    def weights(pos, src_idx, out_idx):
        v = inputs.xyz_flat(pos)[src_idx] - center
        dirs = rays[out_idx]
        r = np.einsum("ij,ij->i", v, dirs)
        q2 = np.maximum(np.sum(v * v, axis=1) - r * r, 0.0)
        a_r = ap.radius_at(r)
        inside = (r > 0.0) & (a_r > 0.0) & (q2 < a_r * a_r)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = inputs.area_flat(pos)[src_idx] / (np.pi * a_r * a_r)
        return np.where(inside, w, 0.0)

    _sweep(inputs, window, grid, job, weights, acc, executor)
    fallback = inputs.frames[pos_out].data.reshape(-1, 3).copy()
    return _finalize(acc, fallback), acc


def _render_action(job, inputs, window, grid, pos_out):
    """Action shots: shutter times a Gaussian over per-set depth order.

    Depth order needs the whole sample set of a pixel before weighting, so
    the pairs of the frame are materialized, ranked per output pixel by
    distance to the camera center, then accumulated in gather order.
    """
    center = grid.cam.center
    src_parts, out_parts, dist_parts, rgb_parts, xi_parts = [], [], [], [], []
    for pos in window:
        x, y, z, ok = project_xyz_arrays(grid.cam, inputs.xyz_flat(pos))
        src_idx, out_idx = _candidate_pairs(x, y, z, ok, job.frustum_l,
                                            grid.w, grid.h)
        if src_idx.size == 0:
            continue
        xyz = inputs.xyz_flat(pos)[src_idx]
        dist_parts.append(np.sum((xyz - center) ** 2, axis=1))
        rgb_parts.append(inputs.frames[pos].data.reshape(-1, 3)[src_idx])
        xi = float(job.shutter.weights(
            np.array([float(inputs.cams[pos].frame_index)]))[0])
        xi_parts.append(np.full(src_idx.size, xi))
        out_parts.append(out_idx)
        src_parts.append(src_idx)

    acc = _Accumulators.zeros(grid.npix)
    fallback = inputs.frames[pos_out].data.reshape(-1, 3).copy()
    if not out_parts:
        return _finalize(acc, fallback), acc
    out_idx = np.concatenate(out_parts)
    dist = np.concatenate(dist_parts)
    rgb = np.concatenate(rgb_parts)
    xi = np.concatenate(xi_parts)

    # Rank within each output pixel's set: ord = count of strictly closer.
    order = np.lexsort((dist, out_idx))
    sorted_idx = out_idx[order]
    sorted_d = dist[order]
    group_start = np.zeros(len(order), dtype=bool)
    group_start[0] = True
    group_start[1:] = sorted_idx[1:] != sorted_idx[:-1]
    run_start = group_start.copy()
    run_start[1:] |= sorted_d[1:] != sorted_d[:-1]
    positions = np.arange(len(order))
    group_base = np.maximum.accumulate(np.where(group_start, positions, 0))
    run_base = np.maximum.accumulate(np.where(run_start, positions, 0))
    ords = np.empty(len(order), dtype=np.int64)
    ords[order] = run_base - group_base

    w = xi * np.exp(-(ords.astype(np.float64) ** 2) / (2.0 * job.sigmas.ord**2))
    for lo, hi in _row_blocks(grid, 1):
        _accumulate_rows(acc, lo, hi, out_idx, w, rgb)
    return _finalize(acc, fallback), acc


def _render_inpaint(job, inputs, window, grid, pos_out, executor):
    """Inpainting: mean reference, two mean-shift steps, masked sources at 0.

    Semi-transparency adds an unmasked Gaussian about the input frame's own
    color at every step, letting the removed object shine through.
    """
    sig = job.sigmas
    semi = job.application == "semitransparent"
    have_masks = inputs.masks is not None or job.region is not None
    if not have_masks:
        raise ConfigError(f"{job.application} needs per-frame masks or a 3D region")
    input_rgb = inputs.frames[pos_out].data.reshape(-1, 3)

    use_xyz = sig.xyz is not None
    use_f = sig.f is not None

    # Pass A: unweighted mean over all samples (the no-input-prior reference)
    # plus the mean over admissible (unmasked) samples for the fallback.
    acc0 = _Accumulators.zeros(grid.npix)
    sums = {
        "xyz": np.zeros((grid.npix, 3)),
        "f": np.zeros(grid.npix),
        "adm_rgb": np.zeros((grid.npix, 3)),
        "adm_n": np.zeros(grid.npix),
    }

    def weights_ones(pos, src_idx, out_idx):
        if use_xyz:
            xyz = inputs.xyz_flat(pos)[src_idx]
            for c in range(3):
                sums["xyz"][:, c] += np.bincount(out_idx, weights=xyz[:, c],
                                                 minlength=grid.npix)
        if use_f:
            sums["f"] += np.bincount(
                out_idx,
                weights=np.full(src_idx.size, float(inputs.cams[pos].frame_index)),
                minlength=grid.npix,
            )
        masked = inputs.mask_flat(pos, job.region)
        admissible = (np.ones(src_idx.size) if masked is None
                      else (~masked[src_idx]).astype(np.float64))
        rgb = inputs.frames[pos].data.reshape(-1, 3)[src_idx]
        for c in range(3):
            sums["adm_rgb"][:, c] += np.bincount(
                out_idx, weights=admissible * rgb[:, c], minlength=grid.npix)
        sums["adm_n"] += np.bincount(out_idx, weights=admissible,
                                     minlength=grid.npix)
        return np.ones(src_idx.size)

    _sweep(inputs, window, grid, job, weights_ones, acc0, None)
    n = np.maximum(acc0.count, 1)
    ref_rgb = acc0.rgb / n[:, None]
    ref_xyz = sums["xyz"] / n[:, None] if use_xyz else None
    ref_f = sums["f"] / n if use_f else None
    admissible_mean = sums["adm_rgb"] / np.maximum(sums["adm_n"], 1.0)[:, None]
    has_admissible = sums["adm_n"] > 0

    def make_pass(cur_rgb, cur_xyz, cur_f, track_means):
        acc = _Accumulators.zeros(grid.npix)
        psums = {"xyz": np.zeros((grid.npix, 3)), "f": np.zeros(grid.npix)}

        def weights(pos, src_idx, out_idx):
            rgb = inputs.frames[pos].data.reshape(-1, 3)[src_idx]
            d_rgb = rgb - cur_rgb[out_idx] if sig.rgb is not None else None
            d_xyz = (inputs.xyz_flat(pos)[src_idx] - cur_xyz[out_idx]
                     ) if use_xyz else None
            d_f = (float(inputs.cams[pos].frame_index) - cur_f[out_idx]
                   ) if use_f else None
            w = _gaussian_pair_weights(sig, d_rgb=d_rgb, d_xyz=d_xyz, d_f=d_f)
            if w is None:
                w = np.ones(src_idx.size)
            masked = inputs.mask_flat(pos, job.region)
            if masked is not None:
                w = np.where(masked[src_idx], 0.0, w)
            if semi:
                d_in = rgb - input_rgb[out_idx]
                w = w + np.exp(-np.sum(d_in * d_in, axis=1)
                               / (2.0 * SEMI_REF_SIGMA_RGB**2))
            if track_means:
                if use_xyz:
                    xyz = inputs.xyz_flat(pos)[src_idx]
                    for c in range(3):
                        psums["xyz"][:, c] += np.bincount(
                            out_idx, weights=w * xyz[:, c], minlength=grid.npix)
                if use_f:
                    psums["f"] += np.bincount(
                        out_idx,
                        weights=w * float(inputs.cams[pos].frame_index),
                        minlength=grid.npix,
                    )
            return w

        _sweep(inputs, window, grid, job, weights, acc, executor)
        return acc, psums

    for step in range(MEAN_SHIFT_STEPS):
        acc, psums = make_pass(ref_rgb, ref_xyz, ref_f, step < MEAN_SHIFT_STEPS - 1)
        wsum = np.maximum(acc.weight, WEIGHT_EPS)
        new_rgb = np.where(acc.weight[:, None] >= WEIGHT_EPS,
                           acc.rgb / wsum[:, None], ref_rgb)
        if use_xyz:
            ref_xyz = np.where(acc.weight[:, None] >= WEIGHT_EPS,
                               psums["xyz"] / wsum[:, None], ref_xyz)
        if use_f:
            ref_f = np.where(acc.weight >= WEIGHT_EPS, psums["f"] / wsum, ref_f)
        ref_rgb = new_rgb

    # Fallback chain: mean of the admissible samples; black when a pixel has
    # no admissible samples at all. Semi-transparency keeps the input pixel.
    if semi:
        fallback = input_rgb.copy()
    else:
        fallback = np.where(has_admissible[:, None], admissible_mean, 0.0)
    return _finalize(acc, fallback), acc


def render_video(job: RenderJob, inputs: EngineInputs | Dataset,
                 frames: list[int] | None = None):
    """Render all (or selected) output frames; returns (frames, stats list)."""
    if isinstance(inputs, Dataset):
        inputs = prepare_inputs(inputs)
    job = job.resolved()
    targets = frames if frames is not None else [c.frame_index for c in inputs.cams]
    out_frames, stats = [], []
    for f in targets:
        frame, st = render_frame(f, job, inputs)
        out_frames.append(frame)
        stats.append(st)
        logger.info(
            "frame %d: %.2fs, %.0f samples/px, W/|S|=%.3f",
            f, st.seconds, st.samples_per_pixel, st.weight_fraction,
        )
    return out_frames, stats
