"""Sway a synthetic toy left and right and check that it follows the keypoint.

    python demos/toy_sway.py [out_dir]
"""
import io
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageSequence

from movelike import DrivingSequence, MotionFrame, PipelineConfig, run_pipeline
from movelike.codec import to_rgb8
from movelike.motion import save_driving
from movelike.raster import RasterImage, quantize8, write_png


def toy(n=128, side=40):
    rgb = np.ones((n, n, 3))
    o = (n - side) // 2
    rgb[o:o + side, o:o + side] = (0.85, 0.25, 0.2)
    rgb[o + side // 4:o + 3 * side // 4, o + side // 4:o + 3 * side // 4] = (0.2, 0.45, 0.85)
    return quantize8(RasterImage.from_rgb(rgb))


def centroid(rgb8):
    ys, xs = np.nonzero(np.abs(rgb8.astype(int) - 255).max(axis=2) > 64)
    return xs.mean(), ys.mean()


def main(out_dir="demo_out"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = toy()
    xs = 0.12 * np.sin(2 * np.pi * np.arange(8) / 8)
    seq = DrivingSequence(1, 10.0, [MotionFrame([[x, 0.0]], None) for x in xs], "relative")
    write_png(out / "toy.png", raw)
    save_driving(out / "sway.json", seq)

    # one keypoint moving the whole toy rigidly: no identity background term
    cfg = PipelineConfig.from_json({"motion": {"bg_weight": 0.0}})
    res = run_pipeline(raw, seq, cfg, out=out / "toy_sway.gif")
    rect = res.localized.source_rect
    cx0, _ = centroid(to_rgb8(raw))
    frames = ImageSequence.Iterator(Image.open(io.BytesIO(res.gif)))
    print("frame  commanded_x  measured_x")
    for i, (fr, x) in enumerate(zip(frames, xs)):
        cx, _ = centroid(np.asarray(fr.convert("RGB")))
        print(f"{i:5d}  {cx0 + x * (rect.w - 1) / 2:11.2f}  {cx:10.2f}")
    print("stage seconds:", res.report.durations)
    print("wrote", out / "toy_sway.gif")


if __name__ == "__main__":
    main(*sys.argv[1:])
