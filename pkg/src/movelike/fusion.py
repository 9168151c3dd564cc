"""Compositing animated frames over the inpainted background and back into the photo."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidConfig, SizeMismatch
from .raster import AlphaMask, PixelRect, RasterImage, crop, distance_transform, resample


@dataclass(frozen=True)
class FusionParams:
    feather_radius: int = 6
    seam_width: int = 8

    def __post_init__(self):
        if self.feather_radius < 0:
            raise InvalidConfig(f"fusion feather_radius must be >= 0, got {self.feather_radius}")
        if self.seam_width < 0:
            raise InvalidConfig(f"fusion seam_width must be >= 0, got {self.seam_width}")

    def as_dict(self) -> dict:
        return asdict(self)


def feather(mask: AlphaMask, radius: float) -> AlphaMask:
    """Soften a mask edge: alpha ramps from 0 at the boundary to 1 at ``radius`` pixels inside."""
    if radius < 0:
        raise InvalidConfig(f"feather radius must be >= 0, got {radius}")
    binary = mask.binarized(0.5)
    if radius == 0:
        return binary
    return AlphaMask(np.clip(distance_transform(binary) / radius, 0.0, 1.0))


def composite(fg: RasterImage, alpha: AlphaMask, bg: RasterImage) -> RasterImage:
    if not (fg.size == alpha.size == bg.size):
        raise SizeMismatch(f"composite sizes differ: fg {fg.size}, alpha {alpha.size}, bg {bg.size}")
    a = alpha.data[..., None]
    rgb = a * fg.rgb + (1.0 - a) * bg.rgb
    rgb = np.clip(rgb, np.minimum(fg.rgb, bg.rgb), np.maximum(fg.rgb, bg.rgb))
    return RasterImage.from_rgb(rgb)


def seam_weights(rect: PixelRect, seam_width: float, full_size: tuple[int, int] | None = None) -> np.ndarray:
    """Blend weight of the patch: 0 just outside the rect, 1 once ``seam_width`` inside.

    Rect edges that coincide with the image border have nothing to blend
    with and get no ramp.
    """
    if seam_width <= 0:
        return np.ones((rect.h, rect.w))
    width, height = full_size if full_size is not None else (np.inf, np.inf)
    inf = np.full(1, np.inf)
    cols = np.arange(rect.w)
    rows = np.arange(rect.h)
    left = cols + 1.0 if rect.x > 0 else inf
    right = rect.w - cols + 0.0 if rect.x + rect.w < width else inf
    top = rows + 1.0 if rect.y > 0 else inf
    bottom = rect.h - rows + 0.0 if rect.y + rect.h < height else inf
    dx = np.minimum(left, right)
    dy = np.minimum(top, bottom)
    d = np.minimum(dy[:, None], dx[None, :])
    return np.clip(d / seam_width, 0.0, 1.0)


def stitch_back(full: RasterImage, rect: PixelRect, patch: RasterImage, seam_width: float) -> RasterImage:
    if (rect.w, rect.h) != patch.size:
        raise SizeMismatch(f"patch {patch.width}x{patch.height} vs rect {rect.w}x{rect.h}")
    rect.check(full.width, full.height)
    beta = seam_weights(rect, seam_width, full.size)[..., None]
    out = full.data.copy()
    region = full.data[rect.slices]
    # region + beta * diff keeps identical patches bit-exact; beta == 1 pastes verbatim
    blended = region + beta * (patch.data - region)
    out[rect.slices] = np.where(beta == 1.0, patch.data, blended)
    return RasterImage(out)


def fuse_frame(raw: RasterImage, loc, background: RasterImage, frame: RasterImage,
               frame_alpha: AlphaMask, p: FusionParams | None = None) -> RasterImage:
    """Put one animated frame back into the raw photo.

    ``background`` must be the pure background of ``raw``: identical to it
    everywhere except inside the hole left by the object.
    """
    p = p or FusionParams()
    rect = loc.source_rect
    if background.size != raw.size:
        raise SizeMismatch(f"background {background.size} vs raw {raw.size}")
    # bilinear is the shrink operator the back-projected upscale is consistent with
    if frame.size != (rect.w, rect.h):
        frame = resample(frame, rect.w, rect.h, "bilinear")
    if frame_alpha.size != (rect.w, rect.h):
        frame_alpha = resample(frame_alpha, rect.w, rect.h, "bilinear")
    alpha = feather(frame_alpha, p.feather_radius)
    fused = composite(frame, alpha, crop(background, rect))
    # the background equals raw outside the hole, so the exterior is still raw;
    # ramping into it instead of raw keeps the seam free of the original object
    return stitch_back(background, rect, fused, p.seam_width)
