"""Animation export: palette quantization, GIF89a encoding, PNG sequences."""
from __future__ import annotations

from dataclasses import dataclass
import math
import os
import struct

import numba
import numpy as np

from .errors import FrameSizeMismatch, InvalidJob, IoError, TooManyColors
from .raster import RasterImage, write_png


@dataclass(frozen=True, eq=False)
class AnimationJob:
    frames: tuple
    fps: float
    loop: int = 0  # GIF convention: 0 loops forever, n > 0 repeats n times
    max_colors: int = 256
    dither: bool = True

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise InvalidJob("an animation needs at least one frame")
        size = self.frames[0].size
        for i, f in enumerate(self.frames):
            if f.size != size:
                raise FrameSizeMismatch(f"frame {i} is {f.width}x{f.height}, expected {size[0]}x{size[1]}")
        if not self.fps > 0:
            raise InvalidJob(f"fps must be > 0, got {self.fps}")
        if not 2 <= self.max_colors <= 256:
            raise InvalidJob(f"max_colors must lie in 2..256, got {self.max_colors}")
        if not 0 <= self.loop <= 0xFFFF:
            raise InvalidJob(f"loop count must lie in 0..65535, got {self.loop}")

    @property
    def size(self) -> tuple[int, int]:
        return self.frames[0].size


def to_rgb8(img: RasterImage) -> np.ndarray:
    return np.floor(img.rgb * 255.0 + 0.5).astype(np.uint8)


def frame_delay(fps: float) -> int:
    """Frame delay in centiseconds, floored at 2."""
    return max(2, int(math.floor(100.0 / fps + 0.5)))


# -- quantization -------------------------------------------------------------

def median_cut(colors: np.ndarray, counts: np.ndarray, max_colors: int) -> np.ndarray:
    """Weighted median cut over unique 8-bit colours; returns an (n, 3) uint8 palette."""
    colors = colors.astype(np.int64)

    def extent(box):
        c = colors[box]
        return c.max(axis=0) - c.min(axis=0)

    boxes = [np.arange(colors.shape[0])]
    extents = [extent(boxes[0])]
    while len(boxes) < max_colors:
        widest = [int(e.max()) for e in extents]
        best = int(np.argmax(widest))  # first box wins ties
        if widest[best] == 0:
            break
        box = boxes[best]
        ch = int(np.argmax(extents[best]))  # ties favour R, then G
        c = colors[box]
        order = box[np.lexsort((c[:, (ch + 2) % 3], c[:, (ch + 1) % 3], c[:, ch]))]
        cum = np.cumsum(counts[order])
        median = (int(cum[-1]) - 1) // 2
        # split just after the colour holding the median pixel
        cut = min(int(np.searchsorted(cum, median, side="right")) + 1, order.size - 1)
        boxes[best:best + 1] = [order[:cut], order[cut:]]
        extents[best:best + 1] = [extent(order[:cut]), extent(order[cut:])]
    palette = np.empty((len(boxes), 3), dtype=np.uint8)
    for i, b in enumerate(boxes):
        w = counts[b].astype(np.float64)
        mean = (colors[b] * w[:, None]).sum(axis=0) / w.sum()
        palette[i] = np.floor(mean + 0.5).astype(np.uint8)
    return palette


def nearest_entries(rgb: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Index of the closest palette entry (squared distance, lowest index on ties)."""
    flat = rgb.reshape(-1, 3).astype(np.int64)
    pal = palette.astype(np.int64)
    out = np.empty(flat.shape[0], dtype=np.uint8)
    for start in range(0, flat.shape[0], 4096):
        d = ((flat[start:start + 4096, None, :] - pal[None, :, :]) ** 2).sum(axis=-1)
        out[start:start + 4096] = np.argmin(d, axis=1)
    return out.reshape(rgb.shape[:-1])


@numba.njit(cache=True)
def _dither(rgb, palette):
    h, w, _ = rgb.shape
    n = palette.shape[0]
    buf = rgb.astype(np.float64)
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        rev = y % 2 == 1
        for k in range(w):
            x = w - 1 - k if rev else k
            best = 0
            best_d = np.inf
            r = min(max(buf[y, x, 0], 0.0), 255.0)
            g = min(max(buf[y, x, 1], 0.0), 255.0)
            b = min(max(buf[y, x, 2], 0.0), 255.0)
            for i in range(n):
                dr = r - palette[i, 0]
                dg = g - palette[i, 1]
                db = b - palette[i, 2]
                d = dr * dr + dg * dg + db * db
                if d < best_d:
                    best_d = d
                    best = i
            out[y, x] = best
            err = (r - palette[best, 0], g - palette[best, 1], b - palette[best, 2])
            fwd = x - 1 if rev else x + 1
            back = x + 1 if rev else x - 1
            for c in range(3):
                e = err[c]
                if 0 <= fwd < w:
                    buf[y, fwd, c] += e * 7.0 / 16.0
                if y + 1 < h:
                    if 0 <= back < w:
                        buf[y + 1, back, c] += e * 3.0 / 16.0
                    buf[y + 1, x, c] += e * 5.0 / 16.0
                    if 0 <= fwd < w:
                        buf[y + 1, fwd, c] += e * 1.0 / 16.0
    return out


def quantize(frames, max_colors: int = 256, dither: bool = True) -> tuple[np.ndarray, list[np.ndarray]]:
    """Shared palette for all frames plus one (H, W) index array per frame."""
    rgb = [to_rgb8(f) for f in frames]
    packed = np.concatenate([
        ((f[..., 0].astype(np.int64) << 16) | (f[..., 1].astype(np.int64) << 8) | f[..., 2]).ravel()
        for f in rgb
    ])
    uniq, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
    colors = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1)
    palette = median_cut(colors, counts, max_colors)
    if dither:
        return palette, [_dither(f, palette.astype(np.float64)) for f in rgb]
    flat = nearest_entries(colors, palette)[inverse.ravel()]
    sizes = np.cumsum([f.shape[0] * f.shape[1] for f in rgb])[:-1]
    return palette, [part.reshape(f.shape[:2]) for part, f in zip(np.split(flat, sizes), rgb)]


# -- GIF ----------------------------------------------------------------------

def lzw_encode(indices: np.ndarray, min_code_size: int) -> bytes:
    """GIF-flavoured variable-width LZW, including the clear and end codes."""
    clear = 1 << min_code_size
    end = clear + 1
    out = bytearray()
    bitbuf = 0
    nbits = 0

    def emit(code, width):
        nonlocal bitbuf, nbits
        bitbuf |= code << nbits
        nbits += width
        while nbits >= 8:
            out.append(bitbuf & 0xFF)
            bitbuf >>= 8
            nbits -= 8

    data = indices.ravel().tolist()
    width = min_code_size + 1
    table = {}
    next_code = end + 1
    emit(clear, width)
    prefix = data[0]
    for k in data[1:]:
        code = table.get((prefix, k))
        if code is not None:
            prefix = code
            continue
        emit(prefix, width)
        if next_code < 4096:
            table[(prefix, k)] = next_code
            next_code += 1
            # the decoder's table trails ours by one entry
            if next_code - 1 == 1 << width and width < 12:
                width += 1
        else:
            emit(clear, width)
            table = {}
            next_code = end + 1
            width = min_code_size + 1
        prefix = k
    emit(prefix, width)
    emit(end, width)
    if nbits:
        out.append(bitbuf & 0xFF)
    return bytes(out)


def _sub_blocks(data: bytes) -> bytes:
    out = bytearray()
    for i in range(0, len(data), 255):
        chunk = data[i:i + 255]
        out.append(len(chunk))
        out += chunk
    out.append(0)
    return bytes(out)


def encode_gif(job: AnimationJob) -> bytes:
    width, height = job.size
    if width > 0xFFFF or height > 0xFFFF:
        raise InvalidJob(f"GIF frames are limited to 65535 px per side, got {width}x{height}")
    palette, indexed = quantize(job.frames, job.max_colors, job.dither)
    if palette.shape[0] > job.max_colors or palette.shape[0] > 256:
        raise TooManyColors(f"palette has {palette.shape[0]} entries, budget {job.max_colors}")
    bits = max(1, math.ceil(math.log2(palette.shape[0]))) if palette.shape[0] > 1 else 1
    table = np.zeros((1 << bits, 3), dtype=np.uint8)
    table[:palette.shape[0]] = palette
    min_code = max(2, bits)
    delay = frame_delay(job.fps)

    out = bytearray(b"GIF89a")
    out += struct.pack("<HHBBB", width, height, 0x80 | (7 << 4) | (bits - 1), 0, 0)
    out += table.tobytes()
    out += b"\x21\xff\x0bNETSCAPE2.0" + struct.pack("<BBHB", 3, 1, job.loop, 0)
    for frame in indexed:
        # graphic control: disposal "do not dispose", no transparency
        out += b"\x21\xf9\x04" + struct.pack("<BHBB", 1 << 2, delay, 0, 0)
        out += b"\x2c" + struct.pack("<HHHHB", 0, 0, width, height, 0)
        out.append(min_code)
        out += _sub_blocks(lzw_encode(frame, min_code))
    out.append(0x3B)
    return bytes(out)


def write_gif(path, job: AnimationJob) -> bytes:
    data = encode_gif(job)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(f"cannot write {os.fspath(path)}: {exc}") from exc
    return data


def write_png_sequence(job: AnimationJob, directory, stem: str) -> list[str]:
    """Write ``stem_0000.png``, ``stem_0001.png``, ... and return their paths."""
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {os.fspath(directory)}: {exc}") from exc
    paths = []
    for i, frame in enumerate(job.frames):
        path = os.path.join(directory, f"{stem}_{i:04d}.png")
        write_png(path, frame)
        paths.append(path)
    return paths
