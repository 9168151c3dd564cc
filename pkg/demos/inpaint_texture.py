"""Fill a hole in a checkerboard and compare PatchMatch with exhaustive search.

    python demos/inpaint_texture.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from movelike.inpaint import InpaintParams, inpaint_with_field
from movelike.raster import AlphaMask, RasterImage, write_png


def main(out_dir="demo_out"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = 48
    yy, xx = np.mgrid[:n, :n]
    checker = ((xx // 4 + yy // 4) % 2)[..., None]
    img = RasterImage.from_rgb(np.where(checker, (0.9, 0.8, 0.3), (0.2, 0.3, 0.6)))
    hole = np.zeros((n, n))
    hole[18:30, 15:31] = 1

    holed = img.data.copy()
    holed[hole > 0, :3] = 0
    write_png(out / "checker_hole.png", RasterImage(holed))
    for seed in range(3):
        filled, field = inpaint_with_field(img, AlphaMask(hole), InpaintParams(seed=seed))
        err = np.abs(filled.rgb - img.rgb)[hole > 0].mean()
        blind = int((field.known == 0).sum())
        offsets, counts = np.unique(field.offsets, axis=0, return_counts=True)
        top = offsets[np.argmax(counts)].tolist()
        print(f"seed {seed}: total patch cost {field.total_cost:.3f}, mean error in hole {err:.4f}, "
              f"most common offset {top}, {blind} pixels without known neighbours")
        write_png(out / f"checker_filled_{seed}.png", filled)
    print("the exact optimum is 0: every offset that is a multiple of the 8 px period matches perfectly")
    print("hole pixels whose whole patch lies in the hole see no known pixels, so their cost is 0 for any")
    print("source: the error left in the hole comes from that unconstrained core, not from the search")


if __name__ == "__main__":
    main(*sys.argv[1:])
