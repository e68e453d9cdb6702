"""Local plane-sweep depth estimation (photometric data term only).

For each pixel a set of depth hypotheses, spaced uniformly in inverse depth,
is swept along the epipolar lines into the neighboring frames; the hypothesis
with the lowest average 3x3 patch cost wins. There is no smoothness term and
no refinement: the maps are intentionally cheap and outlier-laden, the
downstream sample filtering is the outlier handler.

The per-pixel sweep runs in a numba kernel parallelized over rows; every
pixel is computed independently, so results are bit-identical for any thread
count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .geometry import FAR_PLANE, NEAR_PLANE, CameraPose, DepthMap, Frame


@dataclass(frozen=True)
class SweepConfig:
    num_hypotheses: int = 64
    d_min: float = 0.0
    d_max: float = 0.0
    window_radius: int = 3
    patch_radius: int = 1  # fixed: costs are 3x3 patch SSDs

    def __post_init__(self):
        if self.num_hypotheses < 2:
            raise ValueError("need at least 2 depth hypotheses")
        if not (0.0 < self.d_min < self.d_max):
            raise ValueError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.patch_radius != 1:
            raise ValueError("only 3x3 patches are supported")


def default_depth_range(cams: list[CameraPose]) -> tuple[float, float]:
    """Sweep range from the camera track: 0.1x .. 100x the median baseline."""
    if len(cams) < 2:
        raise ValueError("need at least two cameras to derive a depth range")
    centers = np.array([c.center for c in cams])
    baselines = np.linalg.norm(np.diff(centers, axis=0), axis=1)
    med = float(np.median(baselines))
    if med <= 0.0:
        raise ValueError("median camera baseline is zero; pass an explicit range")
    d_min = max(0.1 * med, NEAR_PLANE * 1.01)
    d_max = min(100.0 * med, FAR_PLANE * 0.99)
    if d_min >= d_max:
        raise ValueError(f"degenerate derived depth range [{d_min}, {d_max}]")
    return d_min, d_max


def depth_hypotheses(cfg: SweepConfig) -> np.ndarray:
    """Hypotheses uniform in inverse depth; index 0 is d_min (nearest)."""
    inv = np.linspace(1.0 / cfg.d_min, 1.0 / cfg.d_max, cfg.num_hypotheses)
    hyps = 1.0 / inv
    hyps[0] = cfg.d_min
    hyps[-1] = cfg.d_max
    return hyps


def _bilinear(data: np.ndarray, u: float, v: float) -> np.ndarray:
    """Edge-clamped bilinear lookup at index coordinates (u, v)."""
    h, w = data.shape[:2]
    u = min(max(u, 0.0), w - 1.0)
    v = min(max(v, 0.0), h - 1.0)
    iu, iv = int(u), int(v)
    fu, fv = u - iu, v - iv
    iu1, iv1 = min(iu + 1, w - 1), min(iv + 1, h - 1)
    return (
        (1 - fu) * (1 - fv) * data[iv, iu]
        + fu * (1 - fv) * data[iv, iu1]
        + (1 - fu) * fv * data[iv1, iu]
        + fu * fv * data[iv1, iu1]
    )


def patch_cost(ref_frame: Frame, ref_px: tuple[int, int],
               other_frame: Frame, other_px: tuple[float, float]) -> float:
    """Sum of squared linear-RGB differences over aligned 3x3 patches.

    Coordinates are in index space (pixel i at coordinate i). The reference
    patch uses edge-clamped integer pixels; the other patch is sampled
    bilinearly around other_px, also edge-clamped.
    """
    rx, ry = ref_px
    ou, ov = other_px
    rh, rw = ref_frame.data.shape[:2]
    total = 0.0
    for oy in (-1, 0, 1):
        for ox in (-1, 0, 1):
            rpx = min(max(rx + ox, 0), rw - 1)
            rpy = min(max(ry + oy, 0), rh - 1)
            ref_vals = ref_frame.data[rpy, rpx]
            other_vals = _bilinear(other_frame.data, ou + ox, ov + oy)
            diff = ref_vals - other_vals
            total += float(np.sum(diff * diff))
    return total


@njit(cache=True, parallel=True, nogil=True)
def _sweep_kernel(ref_img, imgs, rel_rot, rel_t, intr, fxr, fyr, cxr, cyr,
                  hyps, out_depth):  # pragma: no cover - exercised via driver
    h, w = ref_img.shape[:2]
    n_other = imgs.shape[0]
    nh = hyps.shape[0]
    for py in prange(h):
        costs = np.empty(nh)
        counts = np.empty(nh, np.int64)
        refp = np.empty((3, 3, 3))
        for px in range(w):
            for k in range(nh):
                costs[k] = 0.0
                counts[k] = 0
            for oy in range(-1, 2):
                rpy = min(max(py + oy, 0), h - 1)
                for ox in range(-1, 2):
                    rpx = min(max(px + ox, 0), w - 1)
                    for c in range(3):
                        refp[oy + 1, ox + 1, c] = ref_img[rpy, rpx, c]
            ray0 = (px + 0.5 - cxr) / fxr
            ray1 = (py + 0.5 - cyr) / fyr
            for j in range(n_other):
                arx = rel_rot[j, 0, 0] * ray0 + rel_rot[j, 0, 1] * ray1 + rel_rot[j, 0, 2]
                ary = rel_rot[j, 1, 0] * ray0 + rel_rot[j, 1, 1] * ray1 + rel_rot[j, 1, 2]
                arz = rel_rot[j, 2, 0] * ray0 + rel_rot[j, 2, 1] * ray1 + rel_rot[j, 2, 2]
                fx, fy, cx, cy = intr[j, 0], intr[j, 1], intr[j, 2], intr[j, 3]
                for k in range(nh):
                    d = hyps[k]
                    xz = d * arz + rel_t[j, 2]
                    if xz <= 0.0:
                        continue
                    xx = d * arx + rel_t[j, 0]
                    xy = d * ary + rel_t[j, 1]
                    u = fx * xx / xz + cx - 0.5
                    v = fy * xy / xz + cy - 0.5
                    if u < 0.0 or u > w - 1.0 or v < 0.0 or v > h - 1.0:
                        continue
                    cost = 0.0
                    for oy in range(-1, 2):
                        sv = v + oy
                        if sv < 0.0:
                            sv = 0.0
                        elif sv > h - 1.0:
                            sv = h - 1.0
                        iv = int(sv)
                        fv = sv - iv
                        iv1 = iv + 1
                        if iv1 > h - 1:
                            iv1 = h - 1
                        for ox in range(-1, 2):
                            su = u + ox
                            if su < 0.0:
                                su = 0.0
                            elif su > w - 1.0:
                                su = w - 1.0
                            iu = int(su)
                            fu = su - iu
                            iu1 = iu + 1
                            if iu1 > w - 1:
                                iu1 = w - 1
                            w00 = (1.0 - fu) * (1.0 - fv)
                            w10 = fu * (1.0 - fv)
                            w01 = (1.0 - fu) * fv
                            w11 = fu * fv
                            for c in range(3):
                                val = (
                                    w00 * imgs[j, iv, iu, c]
                                    + w10 * imgs[j, iv, iu1, c]
                                    + w01 * imgs[j, iv1, iu, c]
                                    + w11 * imgs[j, iv1, iu1, c]
                                )
                                diff = refp[oy + 1, ox + 1, c] - val
                                cost += diff * diff
                    costs[k] += cost
                    counts[k] += 1
            best = -1
            best_cost = np.inf
            for k in range(nh):
                if counts[k] > 0:
                    avg = costs[k] / counts[k]
                    if avg < best_cost:
                        best_cost = avg
                        best = k
            if best >= 0:
                out_depth[py, px] = hyps[best]
            else:
                out_depth[py, px] = np.nan


def estimate_depth(f: int, frames: list[Frame], cams: list[CameraPose],
                   cfg: SweepConfig) -> DepthMap:
    """Plane-sweep depth for the frame with index f.

    Each pixel tests cfg.num_hypotheses depths against every other frame in
    the temporal window; out-of-bounds reprojections are excluded from the
    per-hypothesis average and a pixel with no in-bounds frame at any
    hypothesis becomes invalid. Ties go to the smaller hypothesis index.
    """
    by_index = {c.frame_index: i for i, c in enumerate(cams)}
    if f not in by_index:
        raise ValueError(f"no camera for frame {f}")
    pos = by_index[f]
    others = [
        i for i, c in enumerate(cams)
        if c.frame_index != f and abs(c.frame_index - f) <= cfg.window_radius
    ]
    if not others:
        raise ValueError(f"empty temporal window around frame {f}")

    ref_cam = cams[pos]
    ref_img = np.ascontiguousarray(frames[pos].data)
    imgs = np.ascontiguousarray(np.stack([frames[i].data for i in others]))
    rel_rot = np.empty((len(others), 3, 3))
    rel_t = np.empty((len(others), 3))
    intr = np.empty((len(others), 4))
    for row, i in enumerate(others):
        cam = cams[i]
        rel_rot[row] = cam.rotation @ ref_cam.rotation.T
        rel_t[row] = cam.translation - rel_rot[row] @ ref_cam.translation
        intr[row] = (cam.fx, cam.fy, cam.cx, cam.cy)

    hyps = depth_hypotheses(cfg)
    out = np.empty(ref_img.shape[:2])
    _sweep_kernel(ref_img, imgs, rel_rot, rel_t, intr,
                  ref_cam.fx, ref_cam.fy, ref_cam.cx, ref_cam.cy, hyps, out)
    return DepthMap(out)


def estimate_depth_reference(f: int, frames: list[Frame], cams: list[CameraPose],
                             cfg: SweepConfig) -> DepthMap:
    """Direct patch_cost-based sweep, kept as a cross-check for the kernel."""
    from .geometry import project_to_image_batch, project_to_scene

    by_index = {c.frame_index: i for i, c in enumerate(cams)}
    pos = by_index[f]
    others = [
        i for i, c in enumerate(cams)
        if c.frame_index != f and abs(c.frame_index - f) <= cfg.window_radius
    ]
    if not others:
        raise ValueError(f"empty temporal window around frame {f}")
    ref_cam = cams[pos]
    ref_frame = frames[pos]
    h, w = ref_frame.data.shape[:2]
    hyps = depth_hypotheses(cfg)
    out = np.full((h, w), np.nan)
    for py in range(h):
        for px in range(w):
            costs = np.zeros(len(hyps))
            counts = np.zeros(len(hyps), dtype=int)
            pts = project_to_scene(
                ref_cam, np.array([px + 0.5, py + 0.5]), hyps[:, None]
            ).reshape(-1, 3)
            for i in others:
                cam = cams[i]
                uv, _, ok = project_to_image_batch(cam, pts)
                for k in range(len(hyps)):
                    if not ok[k]:
                        continue
                    u, v = uv[k, 0] - 0.5, uv[k, 1] - 0.5
                    if not (0.0 <= u <= w - 1.0 and 0.0 <= v <= h - 1.0):
                        continue
                    costs[k] += patch_cost(ref_frame, (px, py), frames[i], (u, v))
                    counts[k] += 1
            valid = counts > 0
            if valid.any():
                avg = np.where(valid, costs / np.maximum(counts, 1), np.inf)
                out[py, px] = hyps[int(np.argmin(avg))]
    return DepthMap(out)
