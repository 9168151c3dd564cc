"""Foreground localization by backdrop color distance.

Product photos are mostly shot on a clean backdrop, so the backdrop color
is estimated from the image border and every pixel is scored by its RGB
distance to it. Two thresholds turn the distance into a soft alpha; the
binarized, closed alpha is reduced to its largest 4-connected component,
which becomes the object to animate.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall, InvalidConfig, ObjectNotFound
from .raster import AlphaMask, PixelRect, RasterImage

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class MattingParams:
    border_width: int = 4
    t_lo: float = 0.06
    t_hi: float = 0.14
    close_radius: int = 2
    margin_frac: float = 0.15

    def __post_init__(self):
        if not 0 <= self.t_lo < self.t_hi <= math.sqrt(3):
            raise InvalidConfig(
                f"matting thresholds must satisfy 0 <= t_lo < t_hi <= sqrt(3), "
                f"got t_lo={self.t_lo}, t_hi={self.t_hi}"
            )
        if self.border_width < 1:
            raise InvalidConfig(f"matting border_width must be >= 1, got {self.border_width}")
        if self.close_radius < 0:
            raise InvalidConfig(f"matting close_radius must be >= 0, got {self.close_radius}")
        if self.margin_frac < 0:
            raise InvalidConfig(f"matting margin_frac must be >= 0, got {self.margin_frac}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class LocalizedObject:
    crop: RasterImage
    crop_mask: AlphaMask
    source_rect: PixelRect
    hole_mask: AlphaMask
    background_color: tuple[float, float, float]


def disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius


def dilate(binary: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return binary.copy()
    return ndimage.binary_dilation(binary, structure=disk(radius))


def close(binary: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return binary.copy()
    # pad so the image border does not act as background during erosion
    pad = radius + 1
    padded = np.pad(binary, pad)
    closed = ndimage.binary_closing(padded, structure=disk(radius))
    return closed[pad:-pad, pad:-pad]


def largest_component(binary: np.ndarray) -> np.ndarray:
    """Largest 4-connected component; ties go to the one seen first in row-major order."""
    labels, n = ndimage.label(binary, structure=_FOUR_CONNECTED)
    if n == 0:
        return np.zeros_like(binary, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    # scipy numbers labels in order of each component's first row-major pixel
    return labels == int(np.argmax(sizes)) + 1


def estimate_background_color(img: RasterImage, border_width: int) -> tuple[float, float, float]:
    """Channel-wise median of the pixels within ``border_width`` of any edge."""
    if border_width < 1 or 2 * border_width >= min(img.width, img.height):
        raise ImageTooSmall(
            f"a {img.width}x{img.height} image cannot hold a border of width {border_width}"
        )
    band = np.ones((img.height, img.width), dtype=bool)
    band[border_width:-border_width, border_width:-border_width] = False
    med = np.median(img.rgb[band], axis=0)
    return tuple(float(c) for c in med)


def soft_alpha(img: RasterImage, bg, p: MattingParams) -> np.ndarray:
    d = np.linalg.norm(img.rgb - np.asarray(bg, dtype=np.float64), axis=-1)
    return np.clip((d - p.t_lo) / (p.t_hi - p.t_lo), 0.0, 1.0)


def compute_foreground_mask(img: RasterImage, bg, p: MattingParams) -> AlphaMask:
    binary = soft_alpha(img, bg, p) >= 0.5
    binary = largest_component(close(binary, p.close_radius))
    if not binary.any():
        raise ObjectNotFound("no foreground pixels differ from the backdrop color")
    return AlphaMask(binary.astype(np.float64))


def square_rect(box: tuple[int, int, int, int], margin_frac: float, width: int, height: int) -> PixelRect:
    """Expand a bounding box (x, y, w, h) by a margin, make it square and fit it in the image."""
    x, y, w, h = box
    m = int(math.floor(margin_frac * max(w, h) + 0.5))
    x0, y0, x1, y1 = x - m, y - m, x + w + m, y + h + m
    side = max(x1 - x0, y1 - y0)
    # grow the short side symmetrically; odd remainders go right/down
    gx, gy = side - (x1 - x0), side - (y1 - y0)
    x0 -= gx // 2
    y0 -= gy // 2
    side = min(side, width, height)
    # shift back inside the image, keeping the square
    x0 = min(max(x0, 0), width - side)
    y0 = min(max(y0, 0), height - side)
    if side < max(w, h):
        # square cannot hold the whole box: centre it on the box instead
        x0 = min(max(x + (w - side) // 2, 0), width - side)
        y0 = min(max(y + (h - side) // 2, 0), height - side)
    return PixelRect(int(x0), int(y0), int(side), int(side))


def localize(img: RasterImage, p: MattingParams | None = None) -> LocalizedObject:
    p = p or MattingParams()
    bg = estimate_background_color(img, p.border_width)
    mask = compute_foreground_mask(img, bg, p).data > 0
    ys, xs = np.nonzero(mask)
    box = (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
    rect = square_rect(box, p.margin_frac, img.width, img.height)

    inside = np.zeros_like(mask)
    inside[rect.slices] = True
    hole = dilate(mask, p.close_radius) & inside
    # soft alpha, limited to the chosen object and its dilation ring
    alpha = np.where(hole, soft_alpha(img, bg, p), 0.0)

    a = alpha[rect.slices][..., None]
    rgba = img.data[rect.slices]
    crop = a * rgba + (1.0 - a) * 1.0
    # the object is cut out onto an opaque white card
    crop[..., 3] = 1.0
    return LocalizedObject(
        crop=RasterImage(crop),
        crop_mask=AlphaMask(alpha[rect.slices]),
        source_rect=rect,
        hole_mask=AlphaMask(hole.astype(np.float64)),
        background_color=bg,
    )
