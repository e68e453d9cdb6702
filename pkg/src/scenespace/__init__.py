"""Sampling-based scene-space video processing.

Projects every input video pixel into a shared 3D scene via depth maps and
camera poses, gathers for each output pixel all samples falling inside its
viewing frustum, and filters each sample set with an application-specific
weighting function (denoising, deblurring, super resolution, inpainting,
computational shutters, virtual apertures).
"""

from .depth_sweep import SweepConfig, default_depth_range, estimate_depth, patch_cost
from .filters import (
    ApertureSpec,
    BoxShutter,
    DecayTailShutter,
    ImpulseTrainShutter,
    Sigmas,
    filter_set,
    mean_reference,
    w_action,
    w_aperture,
    w_deblur,
    w_denoise,
    w_inpaint,
    w_shutter,
    w_superres,
)
from .geometry import (
    BehindCameraError,
    CameraPose,
    DepthMap,
    Frame,
    SceneScale,
    delinearize,
    linearize,
    normalize_scene,
    project_to_image,
    project_to_scene,
)
from .io_formats import DataError, Dataset, load_dataset, read_pfm, write_pfm
from .pipeline import (
    ConfigError,
    Region3D,
    RenderJob,
    prepare_inputs,
    region_to_masks,
    render_frame,
    render_video,
)
from .sampling import (
    FrustumSpec,
    Sample,
    SampleSet,
    Window,
    depth_order,
    frustum_corners,
    frustum_hull_2d,
    gather,
    gather_bruteforce,
    sample_area,
)
from .synth import SynthScene, TexturedBox, add_noise, psnr, render_scene

__all__ = [
    "ApertureSpec",
    "BehindCameraError",
    "BoxShutter",
    "CameraPose",
    "ConfigError",
    "DataError",
    "Dataset",
    "DecayTailShutter",
    "DepthMap",
    "Frame",
    "FrustumSpec",
    "ImpulseTrainShutter",
    "Region3D",
    "RenderJob",
    "Sample",
    "SampleSet",
    "SceneScale",
    "Sigmas",
    "SweepConfig",
    "SynthScene",
    "TexturedBox",
    "Window",
    "add_noise",
    "default_depth_range",
    "delinearize",
    "depth_order",
    "estimate_depth",
    "filter_set",
    "frustum_corners",
    "frustum_hull_2d",
    "gather",
    "gather_bruteforce",
    "linearize",
    "load_dataset",
    "mean_reference",
    "normalize_scene",
    "patch_cost",
    "prepare_inputs",
    "project_to_image",
    "project_to_scene",
    "psnr",
    "read_pfm",
    "region_to_masks",
    "render_frame",
    "render_scene",
    "render_video",
    "sample_area",
    "w_action",
    "w_aperture",
    "w_deblur",
    "w_denoise",
    "w_inpaint",
    "w_shutter",
    "w_superres",
    "write_pfm",
]
