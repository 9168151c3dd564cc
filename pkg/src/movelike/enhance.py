"""Upscaling by Lanczos interpolation refined with iterative back-projection."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from .errors import InvalidConfig
from .raster import RasterImage, resample_array


@dataclass(frozen=True)
class EnhanceParams:
    factor: int = 2
    bp_iterations: int = 8
    bp_step: float = 1.0
    sharpen_amount: float = 0.0
    sharpen_sigma: float = 1.0

    def __post_init__(self):
        if not isinstance(self.factor, int) or self.factor < 1:
            raise InvalidConfig(f"enhance factor must be an integer >= 1, got {self.factor}")
        if self.bp_iterations < 0:
            raise InvalidConfig(f"enhance bp_iterations must be >= 0, got {self.bp_iterations}")
        if self.sharpen_amount < 0:
            raise InvalidConfig(f"enhance sharpen_amount must be >= 0, got {self.sharpen_amount}")
        if self.sharpen_sigma <= 0:
            raise InvalidConfig(f"enhance sharpen_sigma must be > 0, got {self.sharpen_sigma}")

    def as_dict(self) -> dict:
        return asdict(self)


def back_project(low: np.ndarray, high: np.ndarray, iterations: int, step: float = 1.0,
                 history: list | None = None) -> np.ndarray:
    """Refine ``high`` so that shrinking it reproduces ``low``.

    If ``history`` is given, the residual norm before every iteration and
    after the last one is appended to it.
    """
    h, w = low.shape[:2]
    hh, hw = high.shape[:2]
    for _ in range(iterations):
        residual = low - resample_array(high, w, h, "bilinear")
        if history is not None:
            history.append(float(np.linalg.norm(residual)))
        high = np.clip(high + step * resample_array(residual, hw, hh, "bilinear"), 0.0, 1.0)
    if history is not None:
        history.append(float(np.linalg.norm(low - resample_array(high, w, h, "bilinear"))))
    return high


def unsharp(arr: np.ndarray, amount: float, sigma: float) -> np.ndarray:
    blurred = ndimage.gaussian_filter(arr, sigma=(sigma, sigma, 0), mode="nearest")
    return np.clip(arr + amount * (arr - blurred), 0.0, 1.0)


def upscale(img: RasterImage, p: EnhanceParams | None = None) -> RasterImage:
    p = p or EnhanceParams()
    w, h = img.size
    out_w, out_h = w * p.factor, h * p.factor
    rgb = np.clip(resample_array(img.rgb, out_w, out_h, "lanczos3"), 0.0, 1.0)
    rgb = back_project(img.rgb, rgb, p.bp_iterations, p.bp_step)
    if p.sharpen_amount > 0:
        rgb = unsharp(rgb, p.sharpen_amount, p.sharpen_sigma)
    alpha = np.clip(resample_array(img.alpha, out_w, out_h, "lanczos3"), 0.0, 1.0)
    return RasterImage(np.dstack([rgb, alpha]))
