"""On-disk formats: PFM depth maps, PNG frame sequences, camera JSON, masks.

Dataset layout under a root directory:

    frames/frame_%06d.png     8-bit sRGB input frames
    cameras.json              [{frame, fx, fy, cx, cy, world_to_cam: [16]}]
    depth/frame_%06d.pfm      32-bit float depth, -1 marks invalid pixels
    masks/mask_%06d.png       optional 8-bit grayscale, >127 = masked
    scene_scale.json          optional sidecar {"scale": s}

All round-trips are exact at stored precision.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import CameraPose, DepthMap, Frame, delinearize, linearize

FRAME_NAME = "frame_{:06d}.png"
DEPTH_NAME = "frame_{:06d}.pfm"
MASK_NAME = "mask_{:06d}.png"
PFM_INVALID = -1.0


class DataError(ValueError):
    """Malformed or inconsistent on-disk data."""


def write_pfm(path, data: np.ndarray) -> None:
    """Write a (H, W) float array as little-endian grayscale PFM.

    PFM stores rows bottom-up; a negative scale in the header marks little
    endian. Non-finite values are rejected, encode invalid pixels first.
    """
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise DataError(f"PFM writer expects (H, W), got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise DataError("PFM writer rejects non-finite values")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a (H, W) float32 array."""
    with open(path, "rb") as fh:
        header = fh.readline().rstrip()
        if header != b"Pf":
            raise DataError(f"{path}: not a grayscale PFM (header {header!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise DataError(f"{path}: malformed PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        endian = "<" if scale < 0 else ">"
        buf = fh.read(w * h * 4)
        if len(buf) != w * h * 4:
            raise DataError(f"{path}: truncated PFM payload")
    data = np.frombuffer(buf, dtype=endian + "f4").reshape(h, w)
    return np.flipud(data).copy()


def save_depth(path, depth_map: DepthMap) -> None:
    """Store a depth map as PFM, mapping invalid (NaN) pixels to -1."""
    data = depth_map.depth.copy()
    data[~np.isfinite(data)] = PFM_INVALID
    write_pfm(path, data)


def load_depth(path) -> DepthMap:
    """Load a PFM depth map; -1 pixels become invalid (NaN)."""
    data = read_pfm(path).astype(np.float64)
    invalid = np.abs(data - PFM_INVALID) < 1e-6
    bad = ~invalid & (data <= 0.0)
    if np.any(bad):
        raise DataError(f"{path}: non-positive depth value that is not the -1 marker")
    data[invalid] = np.nan
    return DepthMap(data)


def write_png(path, frame: Frame) -> None:
    srgb = np.rint(delinearize(frame.data)).astype(np.uint8)
    Image.fromarray(srgb, mode="RGB").save(path)


def read_png(path, frame_index: int = 0) -> Frame:
    with Image.open(path) as img:
        srgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    return Frame(linearize(srgb), frame_index)


def write_png_sequence(directory, frames: list[Frame]) -> None:
    """Write frames as frame_%06d.png named by their frame_index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        write_png(directory / FRAME_NAME.format(frame.frame_index), frame)


def read_png_sequence(directory) -> list[Frame]:
    directory = Path(directory)
    frames = []
    for path in sorted(directory.glob("frame_*.png")):
        m = re.fullmatch(r"frame_(\d+)\.png", path.name)
        if not m:
            continue
        frames.append(read_png(path, int(m.group(1))))
    return frames


def save_cameras(path, cams: list[CameraPose]) -> None:
    entries = [
        {
            "frame": cam.frame_index,
            "fx": cam.fx,
            "fy": cam.fy,
            "cx": cam.cx,
            "cy": cam.cy,
            "world_to_cam": [float(v) for v in cam.world_to_cam.reshape(16)],
        }
        for cam in cams
    ]
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=1)


def load_cameras(path) -> list[CameraPose]:
    try:
        with open(path) as fh:
            entries = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed camera JSON: {exc}") from exc
    cams = []
    for i, e in enumerate(entries):
        try:
            m = np.asarray(e["world_to_cam"], dtype=np.float64).reshape(4, 4)
            cam = CameraPose(float(e["fx"]), float(e["fy"]), float(e["cx"]),
                             float(e["cy"]), m, int(e["frame"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"{path}: camera entry {i} invalid: {exc}") from exc
        cams.append(cam)
    cams.sort(key=lambda c: c.frame_index)
    return cams


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_mask(path) -> np.ndarray:
    with Image.open(path) as img:
        gray = np.asarray(img.convert("L"))
    return gray > 127


@dataclass
class Dataset:
    """A loaded video with cameras, optional depth, masks and scene scale."""

    frames: list[Frame]
    cams: list[CameraPose]
    depths: list[DepthMap] | None = None
    masks: list[np.ndarray] | None = None
    scale: float | None = None

    def __post_init__(self):
        if len(self.frames) != len(self.cams):
            raise DataError(
                f"frame count {len(self.frames)} != camera count {len(self.cams)}"
            )
        for frame, cam in zip(self.frames, self.cams):
            if frame.frame_index != cam.frame_index:
                raise DataError(
                    f"frame index {frame.frame_index} has camera index "
                    f"{cam.frame_index}"
                )
        if self.depths is not None:
            if len(self.depths) != len(self.frames):
                raise DataError("depth map count differs from frame count")
            for frame, d in zip(self.frames, self.depths):
                if (d.height, d.width) != (frame.height, frame.width):
                    raise DataError(
                        f"frame {frame.frame_index}: depth {d.width}x{d.height} "
                        f"does not match frame {frame.width}x{frame.height}"
                    )
        if self.masks is not None:
            if len(self.masks) != len(self.frames):
                raise DataError("mask count differs from frame count")
            for frame, m in zip(self.frames, self.masks):
                if m.shape != (frame.height, frame.width):
                    raise DataError(f"frame {frame.frame_index}: mask shape mismatch")

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def frame_indices(self) -> list[int]:
        return [f.frame_index for f in self.frames]


def load_dataset(root, require_depth: bool = True) -> Dataset:
    """Load and validate a dataset directory; frames come back linearized."""
    root = Path(root)
    cam_path = root / "cameras.json"
    if not cam_path.exists():
        raise DataError(f"missing cameras file {cam_path}")
    cams = load_cameras(cam_path)
    frames_dir = root / "frames"
    if not frames_dir.is_dir():
        raise DataError(f"missing frames directory {frames_dir}")
    frames = []
    for cam in cams:
        path = frames_dir / FRAME_NAME.format(cam.frame_index)
        if not path.exists():
            raise DataError(f"missing frame image {path}")
        frames.append(read_png(path, cam.frame_index))

    depths = None
    depth_dir = root / "depth"
    if depth_dir.is_dir():
        depths = []
        for cam in cams:
            path = depth_dir / DEPTH_NAME.format(cam.frame_index)
            if not path.exists():
                raise DataError(f"missing depth map for frame {cam.frame_index}: {path}")
            depths.append(load_depth(path))
    elif require_depth:
        raise DataError(f"missing depth directory {depth_dir}")

    masks = None
    mask_dir = root / "masks"
    if mask_dir.is_dir():
        masks = load_masks(mask_dir, [c.frame_index for c in cams])

    scale = None
    scale_path = root / "scene_scale.json"
    if scale_path.exists():
        with open(scale_path) as fh:
            scale = float(json.load(fh)["scale"])

    return Dataset(frames, cams, depths, masks, scale)


def load_masks(mask_dir, frame_indices: list[int]) -> list[np.ndarray]:
    mask_dir = Path(mask_dir)
    masks = []
    for idx in frame_indices:
        path = mask_dir / MASK_NAME.format(idx)
        if not path.exists():
            raise DataError(f"missing mask for frame {idx}: {path}")
        masks.append(load_mask(path))
    return masks


def save_scene_scale(root, scale: float) -> None:
    with open(Path(root) / "scene_scale.json", "w") as fh:
        json.dump({"scale": scale}, fh)


def write_dataset(root, ds: Dataset) -> None:
    """Write a full dataset directory (used by the synthetic generator)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_png_sequence(root / "frames", ds.frames)
    save_cameras(root / "cameras.json", ds.cams)
    if ds.depths is not None:
        depth_dir = root / "depth"
        depth_dir.mkdir(exist_ok=True)
        for cam, d in zip(ds.cams, ds.depths):
            save_depth(depth_dir / DEPTH_NAME.format(cam.frame_index), d)
    if ds.masks is not None:
        mask_dir = root / "masks"
        mask_dir.mkdir(exist_ok=True)
        for cam, m in zip(ds.cams, ds.masks):
            save_mask(mask_dir / MASK_NAME.format(cam.frame_index), m)
    if ds.scale is not None:
        save_scene_scale(root, ds.scale)
