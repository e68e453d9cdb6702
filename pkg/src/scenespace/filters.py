"""Application-specific sample weighting and the weighted-mean reduction.

Every application reduces a gathered sample set to an output color as

    O(p) = sum(w(s) * s_rgb) / sum(w(s))

with a nonnegative weighting function w. The weights here are products of
per-dimension Gaussians (diagonal covariance) over the 7D samples, optionally
combined with per-frame sharpness, source masks, shutter functions, depth
order or a scene-space aperture cone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Union

import numpy as np

from .sampling import Sample, SampleSet, depth_order_all

WEIGHT_EPS = 1e-6


@dataclass(frozen=True)
class Sigmas:
    """Per-dimension standard deviations; None marks an unused dimension."""

    rgb: float | None = None
    xyz: float | None = None
    f: float | None = None
    area: float | None = None
    ord: float | None = None

    def __post_init__(self):
        for name in ("rgb", "xyz", "f", "area", "ord"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"sigma_{name} must be positive, got {v}")


class FilterResult(NamedTuple):
    color: np.ndarray
    weight_fraction: float


def filter_set(
    sample_set: SampleSet,
    weights: Union[np.ndarray, Callable[[SampleSet], np.ndarray]],
    fallback: np.ndarray,
) -> FilterResult:
    """Weighted mean of sample colors, with a fallback for dead sets.

    weights is either a precomputed (N,) array or a callable evaluated on the
    set. Accumulation runs in double precision in set order. Returns the
    output color and the diagnostic W/|S| (0 for an empty set).
    """
    if callable(weights):
        weights = weights(sample_set)
    w = np.asarray(weights, dtype=np.float64)
    if len(sample_set) == 0:
        return FilterResult(np.asarray(fallback, dtype=np.float64), 0.0)
    if w.shape != (len(sample_set),):
        raise ValueError(f"got {w.shape} weights for {len(sample_set)} samples")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    total = float(np.sum(w))
    if total < WEIGHT_EPS:
        return FilterResult(np.asarray(fallback, dtype=np.float64), 0.0)
    color = (w @ sample_set.rgb) / total
    return FilterResult(color, total / len(sample_set))


def gaussian_log_weights(
    sample_set: SampleSet,
    ref: Sample,
    sigmas: Sigmas,
    f_ref: float | None = None,
) -> np.ndarray:
    """log of the diagonal multivariate normal about a reference sample.

    Sums -(ref_d - s_d)^2 / (2 sigma_d^2) over the rgb, xyz and f dimensions
    whose sigma is present; one sigma is shared by the three color channels
    and one by the three position axes.
    """
    log_w = np.zeros(len(sample_set))
    if sigmas.rgb is not None:
        diff = sample_set.rgb - np.asarray(ref.rgb, dtype=np.float64)
        log_w -= np.sum(diff * diff, axis=1) / (2.0 * sigmas.rgb**2)
    if sigmas.xyz is not None:
        diff = sample_set.xyz - np.asarray(ref.xyz, dtype=np.float64)
        log_w -= np.sum(diff * diff, axis=1) / (2.0 * sigmas.xyz**2)
    if sigmas.f is not None:
        fr = ref.f if f_ref is None else f_ref
        diff = sample_set.f - fr
        log_w -= diff * diff / (2.0 * sigmas.f**2)
    return log_w


def w_denoise(sample_set: SampleSet, ref: Sample, sigmas: Sigmas) -> np.ndarray:
    """Gaussian about the reference sample (the output pixel's own sample)."""
    return np.exp(gaussian_log_weights(sample_set, ref, sigmas))


def w_deblur(
    sample_set: SampleSet,
    ref: Sample,
    sigmas: Sigmas,
    sharpness: Mapping[int, float],
) -> np.ndarray:
    """Reference Gaussian scaled by the source frame's sharpness in [0, 1]."""
    base = w_denoise(sample_set, ref, sigmas)
    try:
        factors = np.array([sharpness[int(f)] for f in sample_set.src_frame])
    except KeyError as exc:
        raise ValueError(f"no sharpness entry for frame {exc}") from exc
    return base * factors


def w_superres(sample_set: SampleSet, ref: Sample, sigmas: Sigmas) -> np.ndarray:
    """Reference Gaussian times a penalty on large scene-space footprints."""
    if sigmas.area is None:
        raise ValueError("super resolution needs sigma_area")
    if sample_set.area is None:
        raise ValueError("sample set has no cached areas")
    base = np.exp(gaussian_log_weights(sample_set, ref, sigmas))
    return base * np.exp(-sample_set.area**2 / (2.0 * sigmas.area**2))


def mean_reference(sample_set: SampleSet) -> Sample:
    """Component-wise mean over all samples, used when no input prior exists."""
    if len(sample_set) == 0:
        raise ValueError("cannot take the mean of an empty sample set")
    return Sample(
        rgb=sample_set.rgb.mean(axis=0),
        xyz=sample_set.xyz.mean(axis=0),
        f=float(sample_set.f.mean()),
    )


def w_inpaint(
    sample_set: SampleSet,
    ref: Sample,
    sigmas: Sigmas,
    masked: np.ndarray,
) -> np.ndarray:
    """Gaussian about the (mean-shifted) reference; masked sources get 0."""
    masked = np.asarray(masked, dtype=bool)
    if masked.shape != (len(sample_set),):
        raise ValueError("masked flags must align with the sample set")
    w = np.exp(gaussian_log_weights(sample_set, ref, sigmas))
    return np.where(masked, 0.0, w)


@dataclass(frozen=True)
class BoxShutter:
    """Open interval of a physical shutter: weight 1 on [t0, t1]."""

    t0: float
    t1: float

    def __post_init__(self):
        if self.t0 > self.t1:
            raise ValueError("box shutter needs t0 <= t1")

    def weights(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        return ((f >= self.t0) & (f <= self.t1)).astype(np.float64)


@dataclass(frozen=True)
class ImpulseTrainShutter:
    """Multiple-exposure shutter: unit pulses of +-half_width at each instant."""

    instants: tuple[float, ...]
    half_width: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "instants", tuple(float(t) for t in self.instants))

    def weights(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        hit = np.zeros(f.shape, dtype=bool)
        for t in self.instants:
            hit |= np.abs(f - t) <= self.half_width
        return hit.astype(np.float64)


@dataclass(frozen=True)
class DecayTailShutter:
    """Motion-trail shutter: exponential falloff for times before the peak."""

    t_peak: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("decay tail needs tau > 0")

    def weights(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        w = np.exp(-np.maximum(0.0, self.t_peak - f) / self.tau)
        return np.where(f <= self.t_peak, w, 0.0)


ShutterFunction = Union[BoxShutter, ImpulseTrainShutter, DecayTailShutter]


def w_shutter(sample_set: SampleSet, shutter: ShutterFunction) -> np.ndarray:
    """Weight purely by sample time through the shutter function."""
    return shutter.weights(sample_set.f)


def w_action(
    sample_set: SampleSet,
    shutter: ShutterFunction,
    sigmas: Sigmas,
    cam_center: np.ndarray,
) -> np.ndarray:
    """Shutter weight with an occlusion heuristic favoring near samples.

    A sample's depth order is the number of set members strictly closer to
    the output camera center; a Gaussian over that count suppresses samples
    likely hidden behind others.
    """
    if sigmas.ord is None:
        raise ValueError("action weighting needs sigma_ord")
    orders = sample_set.ord
    if orders is None:
        orders = depth_order_all(sample_set, np.asarray(cam_center, dtype=np.float64))
    base = shutter.weights(sample_set.f)
    return base * np.exp(-orders.astype(np.float64) ** 2 / (2.0 * sigmas.ord**2))


@dataclass(frozen=True)
class ApertureSpec:
    """Double-cone aperture: radius a0 at focal distance z0, slope a_s."""

    a0: float
    z0: float
    slope: float

    def __post_init__(self):
        if self.a0 < 0 or self.slope < 0 or not self.z0 > 0:
            raise ValueError("need a0 >= 0, slope >= 0, z0 > 0")

    def radius_at(self, z) -> np.ndarray:
        return self.a0 + np.abs(self.z0 - np.asarray(z, dtype=np.float64)) * self.slope


def w_aperture(
    sample_set: SampleSet,
    ray_origin: np.ndarray,
    ray_dir: np.ndarray,
    aperture: ApertureSpec,
) -> np.ndarray:
    """Weight samples inside the aperture cone around an output-pixel ray.

    r is the distance of the sample along the (unit) viewing ray and q its
    perpendicular distance; inside the cone the weight is the ratio of the
    sample footprint to the aperture disc area, so samples contribute at
    their observed scale. A degenerate a(r) = 0 yields weight 0.
    """
    if sample_set.area is None:
        raise ValueError("aperture weighting needs cached sample areas")
    v = sample_set.xyz - np.asarray(ray_origin, dtype=np.float64)
    r = v @ np.asarray(ray_dir, dtype=np.float64)
    q2 = np.maximum(np.sum(v * v, axis=1) - r * r, 0.0)
    a_r = aperture.radius_at(r)
    inside = (r > 0.0) & (a_r > 0.0) & (q2 < a_r * a_r)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = sample_set.area / (np.pi * a_r * a_r)
    return np.where(inside, w, 0.0)


def frame_sharpness_raw(frame_data: np.ndarray) -> float:
    """Sum over pixels of the gradient magnitude across all six partials."""
    gy, gx = np.gradient(frame_data, axis=(0, 1))
    mag = np.sqrt(np.sum(gx * gx, axis=2) + np.sum(gy * gy, axis=2))
    return float(mag.sum())


def sharpness_table(frames) -> dict[int, float]:
    """Per-frame sharpness normalized to [0, 1] by the window maximum."""
    raw = {f.frame_index: frame_sharpness_raw(f.data) for f in frames}
    peak = max(raw.values()) if raw else 0.0
    if peak <= 0.0:
        return {k: 0.0 for k in raw}
    return {k: v / peak for k, v in raw.items()}
