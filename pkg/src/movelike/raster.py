"""Image primitives shared by every pipeline stage.

Images are float64 arrays in [0, 1], row-major with the origin at the top
left. ``RasterImage`` holds (H, W, 4) RGBA data and ``AlphaMask`` holds
(H, W) coverage. Both copy and clamp their input and are read-only after
construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math
import os

import numba
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IoError, NonBinaryMask, RectOutOfBounds, SizeMismatch, InvalidInput

KERNELS = ("nearest", "bilinear", "bicubic", "lanczos3")


def _frozen(data, ndim, name):
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidInput(f"{name} expects a {ndim}-d array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInput(f"{name} must be at least 1x1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite values")
    np.clip(arr, 0.0, 1.0, out=arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    data: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.data, 3, "RasterImage")
        if arr.shape[2] != 4:
            raise InvalidInput(f"RasterImage needs 4 channels, got {arr.shape[2]}")
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_rgb(cls, rgb, alpha=None) -> "RasterImage":
        rgb = np.asarray(rgb, dtype=np.float64)
        a = np.ones(rgb.shape[:2]) if alpha is None else np.asarray(alpha, dtype=np.float64)
        return cls(np.dstack([rgb, a]))

    @classmethod
    def filled(cls, width: int, height: int, rgba=(1.0, 1.0, 1.0, 1.0)) -> "RasterImage":
        return cls(np.broadcast_to(np.asarray(rgba, dtype=np.float64), (height, width, 4)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def rgb(self) -> np.ndarray:
        return self.data[..., :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.data[..., 3]

    def __repr__(self):
        return f"RasterImage({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class AlphaMask:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, 2, "AlphaMask"))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def is_binary(self) -> bool:
        return bool(np.all((self.data == 0.0) | (self.data == 1.0)))

    def binarized(self, threshold: float = 0.5) -> "AlphaMask":
        return AlphaMask((self.data >= threshold).astype(np.float64))

    def __repr__(self):
        return f"AlphaMask({self.width}x{self.height})"


@dataclass(frozen=True)
class PixelRect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w < 1 or self.h < 1:
            raise RectOutOfBounds(f"invalid rect {self}")

    def fits(self, width: int, height: int) -> bool:
        return self.x + self.w <= width and self.y + self.h <= height

    def check(self, width: int, height: int) -> None:
        if not self.fits(width, height):
            raise RectOutOfBounds(f"{self} does not fit in a {width}x{height} image")

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


def crop(img: RasterImage, rect: PixelRect) -> RasterImage:
    rect.check(img.width, img.height)
    return RasterImage(img.data[rect.slices])


def crop_mask(mask: AlphaMask, rect: PixelRect) -> AlphaMask:
    rect.check(mask.width, mask.height)
    return AlphaMask(mask.data[rect.slices])


def paste(dst: RasterImage, src: RasterImage, at: PixelRect) -> RasterImage:
    if (at.w, at.h) != src.size:
        raise SizeMismatch(f"rect {at.w}x{at.h} vs source {src.width}x{src.height}")
    at.check(dst.width, dst.height)
    out = dst.data.copy()
    out[at.slices] = src.data
    return RasterImage(out)


def quantize8(img):
    """Snap values to the 8-bit grid used by PNG storage."""
    if isinstance(img, RasterImage):
        return RasterImage(np.floor(img.data * 255.0 + 0.5) / 255.0)
    return AlphaMask(np.floor(img.data * 255.0 + 0.5) / 255.0)


# -- resampling ---------------------------------------------------------------

def _kernel(name):
    if name == "nearest":
        return 0.5, None
    if name == "bilinear":
        return 1.0, lambda t: np.maximum(0.0, 1.0 - np.abs(t))
    if name == "bicubic":
        def cubic(t, a=-0.5):
            t = np.abs(t)
            out = np.zeros_like(t)
            near = t < 1
            far = (t >= 1) & (t < 2)
            out[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
            out[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
            return out
        return 2.0, cubic
    if name == "lanczos3":
        def lanczos(t):
            t = np.asarray(t, dtype=np.float64)
            out = np.where(np.abs(t) < 3, np.sinc(t) * np.sinc(t / 3), 0.0)
            # sinc is not exactly zero at nonzero integers in floating point
            whole = t == np.round(t)
            out[whole] = (t[whole] == 0).astype(np.float64)
            return out
        return 3.0, lanczos
    raise InvalidInput(f"unknown kernel {name!r}; expected one of {KERNELS}")


@lru_cache(maxsize=256)
def _axis_taps(n_in: int, n_out: int, kernel: str):
    """Tap indices, normalized weights and the anchor tap for one axis.

    Pixel centres sit at half-integers; when shrinking, the kernel is
    stretched by the scale factor. Out-of-range taps clamp to the edge.
    """
    scale = n_in / n_out
    centers = (np.arange(n_out) + 0.5) * scale - 0.5
    if kernel == "nearest":
        idx = np.clip(np.floor((np.arange(n_out) + 0.5) * scale), 0, n_in - 1).astype(np.int64)
        return idx[:, None], np.zeros((n_out, 1)), idx
    support, fn = _kernel(kernel)
    stretch = max(scale, 1.0)
    radius = support * stretch
    first = np.floor(centers - radius).astype(np.int64) + 1
    n_taps = int(math.ceil(2 * radius)) + 1
    pos = first[:, None] + np.arange(n_taps)[None, :]
    w = fn((pos - centers[:, None]) / stretch)
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(pos, 0, n_in - 1)
    anchor = idx[np.arange(n_out), np.argmax(w, axis=1)]
    idx.setflags(write=False)
    w.setflags(write=False)
    return idx, w, anchor


@numba.njit(cache=True, nogil=True)
def _resample_mid(a, idx, w, anchor):
    # resample the middle axis of an (A, N, B) array
    n_a, _, n_b = a.shape
    n_out, taps = idx.shape
    out = np.empty((n_a, n_out, n_b))
    for p in range(n_a):
        for i in range(n_out):
            k0 = anchor[i]
            for j in range(n_b):
                base = a[p, k0, j]
                acc = 0.0
                for t in range(taps):
                    acc += w[i, t] * (a[p, idx[i, t], j] - base)
                # anchor + weighted differences: constant input reproduces the anchor exactly
                out[p, i, j] = base + acc
    return out


def _resample_axis(arr: np.ndarray, axis: int, n_out: int, kernel: str) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_in == n_out and kernel == "nearest":
        return arr
    idx, w, anchor = _axis_taps(n_in, n_out, kernel)
    shape = arr.shape
    lead = int(np.prod(shape[:axis]))
    trail = int(np.prod(shape[axis + 1:]))
    view = np.ascontiguousarray(arr).reshape(lead, n_in, trail)
    out = _resample_mid(view, idx, w, anchor)
    return out.reshape(shape[:axis] + (n_out,) + shape[axis + 1:])


def resample_array(arr: np.ndarray, out_w: int, out_h: int, kernel: str = "bilinear") -> np.ndarray:
    """Separable resampling of an (H, W, ...) array without clamping."""
    if out_w < 1 or out_h < 1:
        raise InvalidInput(f"output size must be positive, got {out_w}x{out_h}")
    _kernel(kernel)
    arr = np.asarray(arr, dtype=np.float64)
    out = _resample_axis(arr, 0, out_h, kernel)
    return _resample_axis(out, 1, out_w, kernel)


def resample(img, out_w: int, out_h: int, kernel: str = "bilinear"):
    """Resample a RasterImage or AlphaMask; output is clamped to [0, 1]."""
    out = np.clip(resample_array(img.data, out_w, out_h, kernel), 0.0, 1.0)
    return type(img)(out)


# -- distance transform -------------------------------------------------------

_BIG = 1e20


@numba.njit(cache=True, nogil=True)
def _dt1d(f, out, v, z):
    # lower envelope of parabolas, Felzenszwalb & Huttenlocher
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d = q - v[k]
        out[q] = d * d + f[v[k]]


@numba.njit(cache=True, nogil=True)
def _edt_squared(zero):
    h, w = zero.shape
    n = max(h, w)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    f = np.empty(n, dtype=np.float64)
    col = np.empty(n, dtype=np.float64)
    tmp = np.empty((h, w), dtype=np.float64)
    for x in range(w):
        for y in range(h):
            f[y] = 0.0 if zero[y, x] else _BIG
        _dt1d(f[:h], col[:h], v, z)
        for y in range(h):
            tmp[y, x] = col[y]
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            f[x] = tmp[y, x]
        _dt1d(f[:w], col[:w], v, z)
        for x in range(w):
            out[y, x] = col[x]
    return out


def distance_transform(mask: AlphaMask) -> np.ndarray:
    """Exact Euclidean distance from each pixel to the nearest zero pixel.

    Returns an (H, W) float array; if the mask has no zero pixel every
    entry is ``inf``.
    """
    if not mask.is_binary():
        raise NonBinaryMask("distance_transform needs a binary mask")
    zero = mask.data == 0.0
    if not zero.any():
        return np.full(zero.shape, np.inf)
    return np.sqrt(_edt_squared(zero))


# -- PNG storage --------------------------------------------------------------

def _to_bytes(values: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def read_png(path) -> RasterImage:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
    except FileNotFoundError as exc:
        raise InvalidInput(f"image file not found: {os.fspath(path)}") from exc
    except (OSError, UnidentifiedImageError) as exc:
        raise IoError(f"cannot read image {os.fspath(path)}: {exc}") from exc
    return RasterImage(arr)


def write_png(path, img: RasterImage) -> None:
    try:
        Image.fromarray(_to_bytes(img.data), mode="RGBA").save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {os.fspath(path)}: {exc}") from exc


def read_mask_png(path) -> AlphaMask:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except FileNotFoundError as exc:
        raise InvalidInput(f"mask file not found: {os.fspath(path)}") from exc
    except (OSError, UnidentifiedImageError) as exc:
        raise IoError(f"cannot read mask {os.fspath(path)}: {exc}") from exc
    return AlphaMask(arr)


def write_mask_png(path, mask: AlphaMask) -> None:
    try:
        Image.fromarray(_to_bytes(mask.data), mode="L").save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {os.fspath(path)}: {exc}") from exc
