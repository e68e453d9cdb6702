"""Command-line driver binding all modules for batch use.

One executable with subcommands: dataset synthesis, plane-sweep depth,
the rendering applications, PSNR measurement and the gathering oracle check.
Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .depth_sweep import SweepConfig, default_depth_range, estimate_depth
from .filters import (
    ApertureSpec,
    BoxShutter,
    DecayTailShutter,
    ImpulseTrainShutter,
    Sigmas,
)
from .io_formats import (
    DEPTH_NAME,
    DataError,
    load_dataset,
    load_masks,
    read_png_sequence,
    save_depth,
    write_dataset,
    write_png_sequence,
)
from .pipeline import (
    ConfigError,
    Region3D,
    RenderJob,
    VideoStats,
    prepare_inputs,
    render_video,
)
from .sampling import FrustumSpec, Window, gather, gather_bruteforce
from .synth import SynthScene, TexturedBox, add_noise, psnr, render_scene

logger = logging.getLogger(__name__)

RENDER_APPS = ("denoise", "deblur", "superres", "inpaint", "shutter",
               "action", "aperture")


def _add_common(p: argparse.ArgumentParser, needs_input=True) -> None:
    if needs_input:
        p.add_argument("--input", required=True, help="dataset directory")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--threads", type=int, default=None, help="worker count; "
                   "never changes output bytes")
    p.add_argument("--verbose", action="store_true")


def _add_render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=None,
                   help="temporal gather radius in frames")
    p.add_argument("--l", type=float, default=None, help="frustum side length (px)")
    p.add_argument("--sigma-rgb", type=float, default=None)
    p.add_argument("--sigma-xyz", type=float, default=None)
    p.add_argument("--sigma-f", type=float, default=None)
    p.add_argument("--frames", default=None,
                   help="comma list of output frame indices (default: all)")
    p.add_argument("--mask-dir", default=None,
                   help="external mask directory overriding dataset masks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenespace",
        description="Scene-space video processing: gather samples per output "
                    "pixel frustum, filter with application weights.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic dataset")
    _add_common(p, needs_input=False)
    p.add_argument("--preset", default="desk",
                   choices=("plane", "desk", "object-removal", "moving"))
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--num-frames", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extent", type=float, default=1.2)
    p.add_argument("--trajectory", default="translate",
                   choices=("translate", "diagonal", "arc"))
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("depth", help="plane-sweep depth maps")
    _add_common(p)
    p.add_argument("--hypotheses", type=int, default=None)
    p.add_argument("--d-min", type=float, default=None)
    p.add_argument("--d-max", type=float, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--frames", default=None)
    p.set_defaults(func=cmd_depth)

    for app in RENDER_APPS:
        p = sub.add_parser(app, help=f"{app} rendering")
        _add_common(p)
        _add_render_flags(p)
        if app == "superres":
            p.add_argument("--factor", type=int, default=None)
            p.add_argument("--sigma-area", type=float, default=None)
        if app == "inpaint":
            p.add_argument("--region", default=None,
                           help="x0,y0,z0,x1,y1,z1[,f0,f1] in normalized scene "
                                "units; use --region=... for negative values")
            p.add_argument("--semitransparent", action="store_true")
        if app in ("shutter", "action"):
            p.add_argument("--shutter-type", default=None,
                           choices=("box", "impulse", "decay"))
            p.add_argument("--t0", type=float, default=None)
            p.add_argument("--t1", type=float, default=None)
            p.add_argument("--instants", default=None, help="comma list of frames")
            p.add_argument("--half-width", type=float, default=None)
            p.add_argument("--t-peak", type=float, default=None)
            p.add_argument("--tau", type=float, default=None)
        if app == "action":
            p.add_argument("--sigma-ord", type=float, default=None)
        if app == "aperture":
            p.add_argument("--a0", type=float, default=None)
            p.add_argument("--z0", type=float, default=None)
            p.add_argument("--slope", type=float, default=None)
        p.set_defaults(func=cmd_render, app=app)

    p = sub.add_parser("psnr", help="PSNR between two PNG sequences")
    p.add_argument("a", help="frame directory")
    p.add_argument("b", help="frame directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("oracle-check", help="gather vs brute-force set equality")
    p.add_argument("--input", required=True)
    p.add_argument("--l", type=float, action="append", default=None,
                   help="frustum side length; repeatable (default 1, 3, 5)")
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_oracle_check)

    return parser


def _load_config(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _pick(flag, cfg: dict, key: str, default=None):
    """Precedence: explicit flag > config file > built-in default."""
    if flag is not None:
        return flag
    if key in cfg:
        return cfg[key]
    return default


def _parse_region(text) -> Region3D:
    if isinstance(text, dict):
        return Region3D(tuple(text["lo"]), tuple(text["hi"]),
                        tuple(text["frames"]) if text.get("frames") else None)
    parts = [float(v) for v in str(text).split(",")]
    if len(parts) not in (6, 8):
        raise ConfigError("region needs x0,y0,z0,x1,y1,z1[,f0,f1]")
    frames = (int(parts[6]), int(parts[7])) if len(parts) == 8 else None
    return Region3D(tuple(parts[:3]), tuple(parts[3:6]), frames)


def _build_shutter(args, cfg: dict):
    scfg = cfg.get("shutter", {})
    kind = _pick(getattr(args, "shutter_type", None), scfg, "type")
    if kind is None:
        raise ConfigError("shutter/action needs --shutter-type or a config entry")
    if kind == "box":
        t0 = _pick(args.t0, scfg, "t0")
        t1 = _pick(args.t1, scfg, "t1")
        if t0 is None or t1 is None:
            raise ConfigError("box shutter needs --t0 and --t1")
        return BoxShutter(float(t0), float(t1))
    if kind == "impulse":
        instants = _pick(args.instants, scfg, "instants")
        if instants is None:
            raise ConfigError("impulse shutter needs --instants")
        if isinstance(instants, str):
            instants = [float(v) for v in instants.split(",")]
        hw = _pick(args.half_width, scfg, "half_width", 0.5)
        return ImpulseTrainShutter(tuple(instants), float(hw))
    if kind == "decay":
        t_peak = _pick(args.t_peak, scfg, "t_peak")
        tau = _pick(args.tau, scfg, "tau")
        if t_peak is None or tau is None:
            raise ConfigError("decay shutter needs --t-peak and --tau")
        return DecayTailShutter(float(t_peak), float(tau))
    raise ConfigError(f"unknown shutter type {kind!r}")


def _build_job(args, cfg: dict) -> RenderJob:
    app = args.app
    if args.app == "inpaint" and (
        getattr(args, "semitransparent", False)
        or cfg.get("application") == "semitransparent"
    ):
        app = "semitransparent"
    # The subcommand names the application; a conflicting config is an error.
    if cfg.get("application") not in (None, app):
        raise ConfigError(
            f"config application {cfg['application']!r} conflicts with the "
            f"{args.app} subcommand"
        )

    from .pipeline import DEFAULT_SIGMAS

    base = DEFAULT_SIGMAS.get(app, Sigmas())
    sigmas = Sigmas(
        rgb=_pick(getattr(args, "sigma_rgb", None), cfg, "sigma_rgb", base.rgb),
        xyz=_pick(getattr(args, "sigma_xyz", None), cfg, "sigma_xyz", base.xyz),
        f=_pick(getattr(args, "sigma_f", None), cfg, "sigma_f", base.f),
        area=_pick(getattr(args, "sigma_area", None), cfg, "sigma_area", base.area),
        ord=_pick(getattr(args, "sigma_ord", None), cfg, "sigma_ord", base.ord),
    )

    shutter = None
    if app in ("shutter", "action"):
        shutter = _build_shutter(args, cfg)

    aperture = None
    if app == "aperture":
        acfg = cfg.get("aperture", {})
        a0 = _pick(args.a0, acfg, "a0")
        z0 = _pick(args.z0, acfg, "z0")
        slope = _pick(args.slope, acfg, "slope")
        if a0 is None or z0 is None or slope is None:
            raise ConfigError("aperture needs --a0, --z0 and --slope")
        aperture = ApertureSpec(float(a0), float(z0), float(slope))

    region = None
    region_raw = _pick(getattr(args, "region", None), cfg, "region")
    if region_raw is not None:
        region = _parse_region(region_raw)

    try:
        return RenderJob(
            application=app,
            sigmas=sigmas,
            frustum_l=float(_pick(args.l, cfg, "frustum_l", 3.0)),
            window_radius=_pick(args.window, cfg, "window_radius"),
            shutter=shutter,
            aperture=aperture,
            region=region,
            superres_factor=int(_pick(getattr(args, "factor", None), cfg,
                                      "superres_factor", 1)),
            threads=int(_pick(args.threads, cfg, "threads", 1)),
        ).resolved()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_frames(text) -> list[int] | None:
    if text is None:
        return None
    return [int(v) for v in str(text).split(",")]


def _write_stats(out_dir: Path, stats: VideoStats) -> None:
    payload = {
        "frames": stats.frames,
        "sec_per_frame": stats.sec_per_frame,
        "samples_per_pixel": stats.samples_per_pixel,
        "weight_fraction": stats.weight_fraction,
    }
    with open(out_dir / "stats.json", "w") as fh:
        json.dump(payload, fh, indent=1)


def cmd_render(args) -> int:
    cfg = _load_config(args)
    job = _build_job(args, cfg)
    ds = load_dataset(args.input)
    mask_dir = _pick(getattr(args, "mask_dir", None), cfg, "mask_dir")
    if mask_dir is not None:
        ds.masks = load_masks(mask_dir, ds.frame_indices)
    inputs = prepare_inputs(ds)
    frames = _parse_frames(getattr(args, "frames", None))
    out_frames, frame_stats = render_video(job, inputs, frames=frames)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_png_sequence(out_dir, out_frames)
    stats = VideoStats.collect(frame_stats)
    _write_stats(out_dir, stats)
    print(f"{job.application}: {stats.frames} frames, "
          f"{stats.sec_per_frame:.2f} s/frame, "
          f"{stats.samples_per_pixel:.0f} samples/px, "
          f"W/|S| = {stats.weight_fraction:.3f}")
    return 0


def cmd_depth(args) -> int:
    cfg = _load_config(args)
    ds = load_dataset(args.input, require_depth=False)
    d_min = _pick(args.d_min, cfg, "d_min")
    d_max = _pick(args.d_max, cfg, "d_max")
    if d_min is None or d_max is None:
        auto_min, auto_max = default_depth_range(ds.cams)
        d_min = auto_min if d_min is None else float(d_min)
        d_max = auto_max if d_max is None else float(d_max)
    try:
        sweep = SweepConfig(
            num_hypotheses=int(_pick(args.hypotheses, cfg, "num_hypotheses", 64)),
            d_min=float(d_min),
            d_max=float(d_max),
            window_radius=int(_pick(args.window, cfg, "window_radius", 3)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    threads = _pick(args.threads, cfg, "threads")
    if threads is not None:
        import numba

        numba.set_num_threads(max(1, min(int(threads),
                                         numba.config.NUMBA_NUM_THREADS)))

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    targets = _parse_frames(getattr(args, "frames", None)) or ds.frame_indices
    t0 = time.perf_counter()
    for f in targets:
        depth = estimate_depth(f, ds.frames, ds.cams, sweep)
        save_depth(out_dir / DEPTH_NAME.format(f), depth)
        logger.info("depth frame %d done", f)
    seconds = time.perf_counter() - t0
    with open(out_dir / "stats.json", "w") as fh:
        json.dump({"frames": len(targets),
                   "sec_per_frame": seconds / max(len(targets), 1),
                   "d_min": sweep.d_min, "d_max": sweep.d_max,
                   "num_hypotheses": sweep.num_hypotheses}, fh, indent=1)
    print(f"depth: {len(targets)} maps, {seconds / max(len(targets), 1):.2f} s/frame, "
          f"range [{sweep.d_min:.4g}, {sweep.d_max:.4g}]")
    return 0


def _preset_scene(args) -> SynthScene:
    boxes = ()
    if args.preset == "desk":
        boxes = (TexturedBox((-0.5, -0.35, 2.2), (0.5, 0.35, 2.8),
                             tint=(0.8, 1.0, 0.9)),)
    elif args.preset == "object-removal":
        boxes = (TexturedBox((-0.45, -0.3, 2.0), (0.45, 0.3, 2.5), masked=True),)
    elif args.preset == "moving":
        boxes = (TexturedBox((-1.3, -0.3, 2.4), (-0.7, 0.3, 3.0),
                             velocity=(0.25, 0.0, 0.0), tint=(1.0, 0.7, 0.6)),)
    return SynthScene(
        width=args.width,
        height=args.height,
        num_frames=args.num_frames,
        seed=args.seed,
        trajectory=args.trajectory,
        extent=args.extent,
        boxes=boxes,
    )


def cmd_synth(args) -> int:
    scene = _preset_scene(args)
    ds = render_scene(scene)
    if args.noise_sigma > 0:
        ds = add_noise(ds, args.noise_sigma, seed=args.seed + 1)
    write_dataset(args.output, ds)
    print(f"synth: {scene.num_frames} frames ({scene.width}x{scene.height}, "
          f"preset {args.preset}) -> {args.output}")
    return 0


def cmd_psnr(args) -> int:
    a = read_png_sequence(args.a)
    b = read_png_sequence(args.b)
    if not a or not b:
        raise DataError("psnr needs two non-empty PNG sequences")
    value = psnr(a, b)
    print(f"PSNR: {value:.4f} dB")
    return 0


def cmd_oracle_check(args) -> int:
    ds = load_dataset(args.input)
    inputs = prepare_inputs(ds)
    window = Window(inputs.frames, inputs.depths, inputs.cams)
    ls = args.l if args.l else [1.0, 3.0, 5.0]
    frames = inputs.cams
    if args.max_frames is not None:
        frames = frames[: args.max_frames]
    mismatches = 0
    pixels = 0
    samples = 0
    t0 = time.perf_counter()
    for cam_out in frames:
        h = inputs.frames[inputs.positions[cam_out.frame_index]].height
        w = inputs.frames[inputs.positions[cam_out.frame_index]].width
        for l in ls:
            for py in range(h):
                for px in range(w):
                    spec = FrustumSpec(px=(px, py), l=l)
                    a = gather(cam_out, spec, window)
                    b = gather_bruteforce(cam_out, spec, window)
                    pixels += 1
                    samples += len(a)
                    if not (np.array_equal(a.keys(), b.keys())
                            and np.array_equal(a.rgb, b.rgb)
                            and np.array_equal(a.xyz, b.xyz)):
                        mismatches += 1
    seconds = time.perf_counter() - t0
    if mismatches:
        print(f"oracle-check: FAIL ({mismatches} of {pixels} pixel queries "
              f"disagree)")
        return 1
    print(f"oracle-check: PASS ({pixels} pixel queries, {samples} samples, "
          f"{seconds:.1f}s)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
