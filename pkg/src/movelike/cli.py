"""Command line front end.

Every subcommand prints a JSON report on stdout and writes diagnostics to
stderr. Exit codes: 0 success, 2 invalid input or config, 3 processing
error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from PIL import Image, ImageDraw

from .config import PipelineConfig, load_config
from .enhance import EnhanceParams, upscale
from .errors import InvalidConfig, InvalidInput, IoError, MovelikeError
from .inpaint import inpaint
from .localization import LocalizedObject
from .motion import (DrivingSequence, dense_motion, frame_transforms, load_driving, load_keypoints,
                     auto_keypoints, normalized_grid, save_keypoints, to_pixels)
from .pipeline import background, enhance_factor, matte, run_pipeline, stage
from .raster import (PixelRect, RasterImage, quantize8, read_mask_png, read_png,
                     write_mask_png, write_png)

THREADS_ENV = "MOVELIKE_THREADS"


def _threads(value) -> int:
    if value is None:
        value = os.environ.get(THREADS_ENV, "1")
        where = THREADS_ENV
    else:
        where = "--threads"
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"{where} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise InvalidConfig(f"{where} must be a positive integer, got {n}")
    return n


def _emit(report: dict) -> None:
    json.dump(report, sys.stdout, indent=1)
    sys.stdout.write("\n")


def _write_json(path, obj) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1)
    except OSError as exc:
        raise IoError(f"cannot write {os.fspath(path)}: {exc}") from exc


# -- matte sidecar ------------------------------------------------------------

def save_matte(loc: LocalizedObject, out_dir) -> dict:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {os.fspath(out_dir)}: {exc}") from exc
    paths = {name: os.path.join(out_dir, f"{name}.png") for name in ("crop", "mask", "hole")}
    write_png(paths["crop"], loc.crop)
    write_mask_png(paths["mask"], loc.crop_mask)
    write_mask_png(paths["hole"], loc.hole_mask)
    sidecar = {
        "source_rect": loc.source_rect.as_dict(),
        "background_color": [float(c) for c in loc.background_color],
        **{k: os.path.basename(v) for k, v in paths.items()},
    }
    _write_json(os.path.join(out_dir, "matte.json"), sidecar)
    return sidecar


def load_matte(path) -> LocalizedObject:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidInput(f"matte sidecar not found: {os.fspath(path)}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{os.fspath(path)} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {os.fspath(path)}: {exc}") from exc
    fields = {"source_rect", "background_color", "crop", "mask", "hole"}
    if not isinstance(obj, dict) or set(obj) != fields:
        raise InvalidInput(f"{os.fspath(path)}: matte sidecar needs exactly the fields {sorted(fields)}")
    r = obj["source_rect"]
    if not isinstance(r, dict) or set(r) != {"x", "y", "w", "h"}:
        raise InvalidInput(f"{os.fspath(path)}: source_rect needs x, y, w, h")
    base = os.path.dirname(os.fspath(path))
    rect = PixelRect(**{k: int(v) for k, v in r.items()})
    crop = read_png(os.path.join(base, obj["crop"]))
    mask = read_mask_png(os.path.join(base, obj["mask"]))
    hole = read_mask_png(os.path.join(base, obj["hole"]))
    if crop.size != (rect.w, rect.h) or mask.size != crop.size:
        raise InvalidInput(f"{os.fspath(path)}: crop and mask must be {rect.w}x{rect.h}")
    return LocalizedObject(crop, mask, rect, hole, tuple(float(c) for c in obj["background_color"]))


def _localized(args, raw, cfg) -> LocalizedObject:
    if args.matte:
        loc = load_matte(args.matte)
        loc.source_rect.check(raw.width, raw.height)
        if loc.hole_mask.size != raw.size:
            raise InvalidInput(f"hole mask is {loc.hole_mask.size}, input image is {raw.size}")
        return loc
    with stage("localization"):
        return matte(raw, cfg)


# -- flow visualisation -------------------------------------------------------

def flow_colors(disp: np.ndarray) -> np.ndarray:
    """(H, W, 2) displacement -> RGB in [0, 1]: hue is direction, saturation is magnitude.

    Zero motion is white.
    """
    mag = np.hypot(disp[..., 0], disp[..., 1])
    peak = mag.max()
    s = mag / peak if peak > 0 else np.zeros_like(mag)
    h = (np.arctan2(disp[..., 1], disp[..., 0]) / (2 * np.pi)) % 1.0
    # hsv -> rgb with v = 1
    k = (np.array([5.0, 3.0, 1.0]) + h[..., None] * 6.0) % 6.0
    return 1.0 - s[..., None] * np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)


def render_preview(crop: RasterImage, src_kp, drv, seq: DrivingSequence, cfg: PipelineConfig):
    t = frame_transforms(src_kp, drv, seq.frames[0], seq.mode)
    field = dense_motion(t, cfg.motion, crop.size)
    grid = normalized_grid(crop.width, crop.height)
    px, py = to_pixels(field.coords[..., 0], field.coords[..., 1], crop.width, crop.height)
    gx, gy = to_pixels(grid[..., 0], grid[..., 1], crop.width, crop.height)
    disp = np.stack([px - gx, py - gy], axis=-1)
    rgb = np.floor(flow_colors(disp) * 255.0 + 0.5).astype(np.uint8)
    im = Image.fromarray(rgb, mode="RGB")
    draw = ImageDraw.Draw(im)
    r = max(2, crop.width // 64)
    for (sx, sy), (tx, ty) in zip(src_kp.positions, t.anchors):
        sx, sy = to_pixels(sx, sy, crop.width, crop.height)
        tx, ty = to_pixels(tx, ty, crop.width, crop.height)
        draw.line([(sx, sy), (tx, ty)], fill=(90, 90, 90))
        draw.ellipse([sx - r, sy - r, sx + r, sy + r], outline=(90, 90, 90))
        draw.line([(tx - r, ty), (tx + r, ty)], fill=(0, 0, 0))
        draw.line([(tx, ty - r), (tx, ty + r)], fill=(0, 0, 0))
    return im, float(np.hypot(disp[..., 0], disp[..., 1]).max())


# -- subcommands --------------------------------------------------------------

def cmd_matte(args) -> dict:
    cfg = load_config(args.config)
    raw = read_png(args.input)
    with stage("localization"):
        loc = matte(raw, cfg)
    sidecar = save_matte(loc, args.out_dir)
    return {**sidecar, "sidecar": os.path.join(args.out_dir, "matte.json")}


def cmd_inpaint(args) -> dict:
    cfg = load_config(args.config)
    threads = _threads(args.threads)
    raw = read_png(args.input)
    if (args.matte is None) == (args.hole is None):
        raise InvalidInput("inpaint needs exactly one of --matte or --hole")
    if args.matte:
        loc = load_matte(args.matte)
        with stage("inpaint"):
            bg = background(raw, loc, cfg, threads)
    else:
        hole = read_mask_png(args.hole)
        with stage("inpaint"):
            bg = quantize8(inpaint(raw, hole, cfg.inpaint_params(), threads))
    write_png(args.out, bg)
    return {"output": args.out, "size": list(bg.size)}


def cmd_enhance(args) -> dict:
    cfg = load_config(args.config)
    img = read_png(args.input)
    if args.mask:
        mask = read_mask_png(args.mask)
        if mask.size != img.size:
            raise InvalidInput(f"mask is {mask.size}, image is {img.size}")
        img = RasterImage.from_rgb(img.rgb, mask.data)
    factor = args.factor if args.factor is not None else enhance_factor(img.width, cfg.target_crop_side)
    with stage("enhance"):
        out = upscale(img, EnhanceParams(**{**cfg.enhance.as_dict(), "factor": factor}))
    write_png(args.out, out)
    return {"output": args.out, "factor": factor, "size": list(out.size)}


def _source_keypoints(args, loc, seq, cfg):
    if args.source_keypoints:
        return load_keypoints(args.source_keypoints)
    with stage("keypoints"):
        return auto_keypoints(loc.crop_mask, seq.num_keypoints, cfg.keypoint_seed)


def cmd_preview_motion(args) -> dict:
    cfg = load_config(args.config)
    seq = load_driving(args.driving)
    raw = read_png(args.input)
    loc = _localized(args, raw, cfg)
    src_kp = _source_keypoints(args, loc, seq, cfg)
    if not -len(seq) <= args.frame < len(seq):
        raise InvalidInput(f"--frame {args.frame} out of range for {len(seq)} frames")
    if src_kp.num_keypoints != seq.num_keypoints:
        raise InvalidInput(f"source has {src_kp.num_keypoints} keypoints, sequence declares {seq.num_keypoints}")
    with stage("motion"):
        im, peak = render_preview(loc.crop, src_kp, seq.frames[args.frame], seq, cfg)
    try:
        im.save(args.out, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {args.out}: {exc}") from exc
    if args.save_keypoints:
        save_keypoints(args.save_keypoints, src_kp)
    return {"output": args.out, "frame": args.frame % len(seq), "max_displacement_px": peak,
            "K": src_kp.num_keypoints}


def cmd_animate(args) -> dict:
    cfg = load_config(args.config)
    threads = _threads(args.threads)
    seq = load_driving(args.driving)
    raw = read_png(args.input)
    loc = load_matte(args.matte) if args.matte else None
    bg = read_png(args.background) if args.background else None
    kp = load_keypoints(args.source_keypoints) if args.source_keypoints else None
    if bg is not None and bg.size != raw.size:
        raise InvalidInput(f"background is {bg.size}, input image is {raw.size}")
    if loc is not None:
        loc.source_rect.check(raw.width, raw.height)
    result = run_pipeline(raw, seq, cfg, out=args.out, source_keypoints=kp, localized=loc,
                          background_image=bg, threads=threads)
    report = result.report.as_dict()
    if result.files:
        report["files"] = result.files
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="movelike", description="Animate the object in a product photo.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads=False):
        p.add_argument("--input", required=True, help="input PNG")
        p.add_argument("--config", help="pipeline config JSON")
        if threads:
            p.add_argument("--threads", help=f"worker threads (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("matte", help="localize the object: crop, mask, hole and a JSON sidecar")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(run=cmd_matte)

    p = sub.add_parser("inpaint", help="fill the hole behind the object")
    common(p, threads=True)
    p.add_argument("--matte", help="sidecar written by the matte subcommand")
    p.add_argument("--hole", help="full-size binary hole mask PNG")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_inpaint)

    p = sub.add_parser("enhance", help="upscale with back-projection")
    common(p)
    p.add_argument("--mask", help="alpha mask PNG carried through the upscale")
    p.add_argument("--factor", type=int, help="integer factor (default from target_crop_side)")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_enhance)

    p = sub.add_parser("preview-motion", help="colour-coded dense motion field for one driving frame")
    common(p)
    p.add_argument("--driving", required=True)
    p.add_argument("--frame", type=int, default=-1, help="driving frame index (default last)")
    p.add_argument("--matte")
    p.add_argument("--source-keypoints")
    p.add_argument("--save-keypoints", help="write the source keypoints used to this JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_preview_motion)

    p = sub.add_parser("animate", help="run the whole pipeline")
    common(p, threads=True)
    p.add_argument("--driving", required=True)
    p.add_argument("--out", required=True, help="GIF path, or directory for output=png_sequence")
    p.add_argument("--matte", help="reuse a matte sidecar instead of localizing")
    p.add_argument("--background", help="reuse an inpainted background PNG")
    p.add_argument("--source-keypoints", help="source keypoint JSON instead of auto placement")
    p.set_defaults(run=cmd_animate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = args.run(args)
    except MovelikeError as exc:
        print(f"movelike {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # anything unexpected is a processing failure
        print(f"movelike {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 3
    _emit(report)
    return 0
