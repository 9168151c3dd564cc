"""End-to-end animation of a product photo.

Stage order: localize the object, inpaint the background behind it, warp
the object crop to each driving frame, upscale, composite back into the
photo, encode. Stage outputs that the CLI can save to disk (crop, masks,
background) are snapped to the 8-bit grid here too, so running the stages
one at a time through files gives the same bytes as a single run.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
import math
import os
import time

import numpy as np

from .codec import AnimationJob, encode_gif, write_png_sequence
from .config import PipelineConfig
from .enhance import EnhanceParams, upscale
from .errors import IoError, MovelikeError
from .fusion import fuse_frame
from .inpaint import pure_background
from .localization import LocalizedObject, localize
from .motion import DrivingSequence, MotionFrame, animate, auto_keypoints
from .raster import AlphaMask, RasterImage, quantize8


@dataclass
class RunReport:
    source_rect: dict
    background_color: tuple
    num_keypoints: int
    frame_count: int
    durations: dict = field(default_factory=dict)
    output: str | None = None

    def as_dict(self) -> dict:
        return {
            "source_rect": self.source_rect,
            "background_color": list(self.background_color),
            "K": self.num_keypoints,
            "frame_count": self.frame_count,
            "durations": self.durations,
            "output": self.output,
        }


@dataclass(eq=False)
class PipelineResult:
    frames: list
    report: RunReport
    localized: LocalizedObject
    background: RasterImage
    source_keypoints: MotionFrame
    gif: bytes | None = None
    files: list = field(default_factory=list)


@contextmanager
def stage(name: str, durations: dict | None = None):
    """Tag errors with the stage they came from and record wall-clock time."""
    start = time.perf_counter()
    try:
        yield
    except MovelikeError as exc:
        if not getattr(exc, "stage", None):
            exc.stage = name
            exc.args = (f"[{name}] {exc}",) + exc.args[1:]
        raise
    finally:
        if durations is not None:
            durations[name] = round(time.perf_counter() - start, 6)


def matte(raw: RasterImage, cfg: PipelineConfig) -> LocalizedObject:
    loc = localize(raw, cfg.matting)
    return LocalizedObject(quantize8(loc.crop), quantize8(loc.crop_mask), loc.source_rect,
                           loc.hole_mask, loc.background_color)


def background(raw: RasterImage, loc: LocalizedObject, cfg: PipelineConfig, threads: int = 1) -> RasterImage:
    return quantize8(pure_background(raw, loc, cfg.inpaint_params(), threads))


def enhance_factor(crop_side: int, target_side: int) -> int:
    return max(1, math.ceil(target_side / crop_side))


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_pipeline(raw: RasterImage, seq: DrivingSequence, cfg: PipelineConfig | None = None, *,
                 out=None, source_keypoints: MotionFrame | None = None,
                 localized: LocalizedObject | None = None, background_image: RasterImage | None = None,
                 threads: int = 1) -> PipelineResult:
    """Animate ``raw`` with ``seq``.

    ``out`` is the GIF path, or the directory for a PNG sequence; with
    ``out=None`` nothing is written and the GIF bytes are only returned.
    ``localized`` and ``background_image`` skip the matting and inpainting
    stages when their results are already at hand.
    """
    cfg = cfg or PipelineConfig()
    durations = {}
    with stage("localization", durations):
        loc = localized if localized is not None else matte(raw, cfg)
    with stage("inpaint", durations):
        bg = background_image if background_image is not None else background(raw, loc, cfg, threads)
    with stage("keypoints", durations):
        src_kp = source_keypoints
        if src_kp is None:
            src_kp = auto_keypoints(loc.crop_mask, seq.num_keypoints, cfg.keypoint_seed)
    with stage("motion", durations):
        warped = animate(loc.crop, loc.crop_mask, src_kp, seq, cfg.motion, threads)
    with stage("enhance", durations):
        params = EnhanceParams(**{**cfg.enhance.as_dict(),
                                  "factor": enhance_factor(warped[0][0].width, cfg.target_crop_side)})
        enhanced = _map(lambda fa: upscale(RasterImage.from_rgb(fa[0].rgb, fa[1].data), params),
                        warped, threads)
    with stage("fusion", durations):
        fused = _map(lambda e: fuse_frame(raw, loc, bg, e, AlphaMask(e.alpha), cfg.fusion), enhanced, threads)

    result = PipelineResult(fused, None, loc, bg, src_kp)
    with stage("encode", durations):
        job = AnimationJob(fused, seq.fps, 0, cfg.max_colors, cfg.dither)
        if cfg.output == "gif":
            result.gif = encode_gif(job)
            if out is not None:
                try:
                    with open(out, "wb") as fh:
                        fh.write(result.gif)
                except OSError as exc:
                    raise IoError(f"cannot write {os.fspath(out)}: {exc}") from exc
        elif out is not None:
            result.files = write_png_sequence(job, out, "frame")

    result.report = RunReport(
        source_rect=loc.source_rect.as_dict(),
        background_color=tuple(loc.background_color),
        num_keypoints=src_kp.num_keypoints,
        frame_count=len(fused),
        durations=durations,
        output=None if out is None else os.fspath(out),
    )
    return result
