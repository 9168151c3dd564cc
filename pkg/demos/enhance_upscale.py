"""Upscale a small image and watch the back-projection residual shrink.

    python demos/enhance_upscale.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np
from scipy import ndimage

from movelike.enhance import EnhanceParams, back_project, upscale
from movelike.raster import RasterImage, quantize8, resample_array, write_png


def main(out_dir="demo_out"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(3)
    rgb = ndimage.gaussian_filter(rng.random((40, 40, 3)), (1.5, 1.5, 0))
    img = quantize8(RasterImage.from_rgb((rgb - rgb.min()) / (rgb.max() - rgb.min())))

    for factor in (2, 4):
        high = np.clip(resample_array(img.rgb, 40 * factor, 40 * factor, "lanczos3"), 0, 1)
        history = []
        back_project(img.rgb, high, 8, 1.0, history)
        print(f"x{factor} residual per iteration:", " ".join(f"{h:.5f}" for h in history))
        write_png(out / f"enhanced_x{factor}.png", upscale(img, EnhanceParams(factor=factor)))
    same = np.array_equal(upscale(img, EnhanceParams(factor=1)).data, img.data)
    print("factor 1 returns the input unchanged:", same)


if __name__ == "__main__":
    main(*sys.argv[1:])
