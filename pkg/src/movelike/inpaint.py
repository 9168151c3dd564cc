"""Coarse-to-fine PatchMatch inpainting.

The nearest-neighbour field maps every hole pixel to the centre of a
source patch that lies wholly in the known region. Patch distance is a
masked SSD over the target patch's known pixels only, so hole contents
never feed back into matching. Hole pixels are rebuilt by weighted voting
of the overlapping source patches.

Random numbers come from a counter-based hash of (seed, level, iteration,
pixel, draw), which makes results independent of how the per-pixel phases
are split across threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
import math

import numba
import numpy as np

from .errors import HoleCoversImage, InvalidConfig, NonBinaryMask, SizeMismatch
from .raster import AlphaMask, RasterImage

VOTE_SIGMA = 0.1


@dataclass(frozen=True)
class InpaintParams:
    patch_size: int = 7
    iterations: int = 5
    search_decay: float = 0.5
    pyramid_levels: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise InvalidConfig(f"inpaint patch_size must be odd and >= 3, got {self.patch_size}")
        if self.iterations < 1:
            raise InvalidConfig(f"inpaint iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.search_decay < 1.0:
            raise InvalidConfig(f"inpaint search_decay must lie in (0, 1), got {self.search_decay}")
        if self.pyramid_levels is not None and self.pyramid_levels < 1:
            raise InvalidConfig(f"inpaint pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig(f"inpaint seed must be a 64-bit unsigned integer, got {self.seed}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class NearestNeighborField:
    """Final-level field: one row per hole pixel, in row-major order."""
    positions: np.ndarray  # (N, 2) hole pixel (y, x)
    offsets: np.ndarray  # (N, 2) (dy, dx) to the source patch centre
    cost: np.ndarray  # (N,) masked SSD
    known: np.ndarray  # (N,) number of known pixels in the target patch

    @property
    def total_cost(self) -> float:
        return float(self.cost.sum())


# -- counter-based RNG --------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _mix(x):
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _draw(seed, stream, pixel, step):
    x = _mix(seed + np.uint64(0x9E3779B97F4A7C15) * (np.uint64(stream) + np.uint64(1)))
    x = _mix(x ^ np.uint64(pixel))
    return _mix(x ^ (np.uint64(step) * np.uint64(0xD6E8FEB86659FD93)))


@numba.njit(cache=True, nogil=True)
def _draw_many(seed, stream, pixels):
    out = np.empty(pixels.shape[0], dtype=np.uint64)
    for i in range(pixels.shape[0]):
        out[i] = _draw(seed, stream, pixels[i], 0)
    return out


# -- kernels ------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _cost(img, hole, ty, tx, sy, sx, r, limit):
    h, w = hole.shape
    total = 0.0
    for dy in range(-r, r + 1):
        y = ty + dy
        v = sy + dy
        if y < 0 or y >= h or v < 0 or v >= h:
            continue
        for dx in range(-r, r + 1):
            x = tx + dx
            u = sx + dx
            if x < 0 or x >= w or u < 0 or u >= w or hole[y, x] or hole[v, u]:
                continue
            for c in range(3):
                e = img[y, x, c] - img[v, u, c]
                total += e * e
        if total > limit:
            return total
    return total


@numba.njit(cache=True, nogil=True)
def _known_count(hole, ty, tx, r):
    h, w = hole.shape
    n = 0
    for y in range(max(ty - r, 0), min(ty + r + 1, h)):
        for x in range(max(tx - r, 0), min(tx + r + 1, w)):
            if not hole[y, x]:
                n += 1
    return n


@numba.njit(cache=True, nogil=True)
def _evaluate(img, hole, pts, src, cost, known, r, lo, hi):
    for i in range(lo, hi):
        cost[i] = _cost(img, hole, pts[i, 0], pts[i, 1], src[i, 0], src[i, 1], r, np.inf)
        known[i] = _known_count(hole, pts[i, 0], pts[i, 1], r)


@numba.njit(cache=True, nogil=True)
def _propagate(img, hole, valid, index, pts, src, cost, r, reverse):
    h, w = hole.shape
    n = pts.shape[0]
    step = -1 if reverse else 1
    for k in range(n):
        i = n - 1 - k if reverse else k
        y = pts[i, 0]
        x = pts[i, 1]
        for nb in range(2):
            ny = y - step if nb == 1 else y
            nx = x - step if nb == 0 else x
            if ny < 0 or ny >= h or nx < 0 or nx >= w:
                continue
            j = index[ny, nx]
            if j < 0:
                continue
            cy = src[j, 0] + (y - ny)
            cx = src[j, 1] + (x - nx)
            if cy < 0 or cy >= h or cx < 0 or cx >= w or not valid[cy, cx]:
                continue
            c = _cost(img, hole, y, x, cy, cx, r, cost[i])
            if c < cost[i]:
                cost[i] = c
                src[i, 0] = cy
                src[i, 1] = cx


@numba.njit(cache=True, nogil=True)
def _random_search(img, hole, valid, box, pts, src, cost, r, seed, stream, decay, lo, hi):
    h, w = hole.shape
    for i in range(lo, hi):
        y = pts[i, 0]
        x = pts[i, 1]
        radius = float(max(h, w))
        step = 0
        while radius >= 1.0:
            rad = int(radius)
            # window around the current match, cut to the box holding every valid centre
            y0 = max(src[i, 0] - rad, box[0])
            y1 = min(src[i, 0] + rad, box[1])
            x0 = max(src[i, 1] - rad, box[2])
            x1 = min(src[i, 1] + rad, box[3])
            bits = _draw(seed, stream, y * w + x, step)
            cx = x0 + int(bits % np.uint64(x1 - x0 + 1))
            cy = y0 + int((bits >> np.uint64(32)) % np.uint64(y1 - y0 + 1))
            if valid[cy, cx]:
                c = _cost(img, hole, y, x, cy, cx, r, cost[i])
                if c < cost[i]:
                    cost[i] = c
                    src[i, 0] = cy
                    src[i, 1] = cx
            radius *= decay
            step += 1


@numba.njit(cache=True, nogil=True)
def _vote(img, hole, index, src, cost, known, r, scale, out, pts, lo, hi):
    h, w = hole.shape
    ch = img.shape[2]
    acc = np.zeros(ch)
    anchor = np.zeros(ch)
    for i in range(lo, hi):
        y = pts[i, 0]
        x = pts[i, 1]
        acc[:] = 0.0
        wsum = 0.0
        for dy in range(-r, r + 1):
            py = y - dy
            if py < 0 or py >= h:
                continue
            for dx in range(-r, r + 1):
                px = x - dx
                if px < 0 or px >= w:
                    continue
                j = index[py, px]
                # patches with no known pixel carry no evidence
                if j < 0 or known[j] == 0:
                    continue
                sy = src[j, 0] + dy
                sx = src[j, 1] + dx
                if sy < 0 or sy >= h or sx < 0 or sx >= w or hole[sy, sx]:
                    continue
                if wsum == 0.0:
                    for c in range(ch):
                        anchor[c] = img[sy, sx, c]
                wt = math.exp(-cost[j] / scale)
                wsum += wt
                # accumulate offsets from the first vote so equal votes reproduce it exactly
                for c in range(ch):
                    acc[c] += wt * (img[sy, sx, c] - anchor[c])
        if wsum > 0.0:
            for c in range(ch):
                out[y, x, c] = anchor[c] + acc[c] / wsum


# -- pyramid helpers ----------------------------------------------------------

def _downsample(img: np.ndarray, hole: np.ndarray):
    """2x box downsample; a coarse pixel is a hole iff any contributor is."""
    h, w = hole.shape
    ph, pw = h + h % 2, w + w % 2
    pad_img = np.zeros((ph, pw, img.shape[2]))
    pad_img[:h, :w] = img
    present = np.zeros((ph, pw))
    present[:h, :w] = 1.0
    pad_hole = np.zeros((ph, pw), dtype=bool)
    pad_hole[:h, :w] = hole
    blocks = pad_img.reshape(ph // 2, 2, pw // 2, 2, -1)
    # every block has its top-left pixel; average offsets from it
    first = blocks[:, 0, :, 0]
    present = present.reshape(ph // 2, 2, pw // 2, 2)
    diffs = ((blocks - first[:, None, :, None]) * present[..., None]).sum(axis=(1, 3))
    counts = present.sum(axis=(1, 3))
    coarse_hole = pad_hole.reshape(ph // 2, 2, pw // 2, 2).any(axis=(1, 3))
    coarse = first + diffs / counts[..., None]
    coarse[coarse_hole] = 0.0
    return coarse, coarse_hole


def _valid_sources(hole: np.ndarray, r: int) -> np.ndarray:
    """Patch centres whose whole patch lies inside the image and off the hole."""
    h, w = hole.shape
    valid = np.zeros_like(hole)
    if h > 2 * r and w > 2 * r:
        # summed-area table over hole pixels
        sat = np.pad(hole.astype(np.int64), ((1, 0), (1, 0))).cumsum(0).cumsum(1)
        k = 2 * r + 1
        inside = sat[k:, k:] - sat[:-k, k:] - sat[k:, :-k] + sat[:-k, :-k]
        valid[r:h - r, r:w - r] = inside == 0
    if not valid.any():
        # degenerate geometry: accept any known pixel as a centre
        valid = ~hole
    return valid


def _boundary_fill(img: np.ndarray, hole: np.ndarray) -> np.ndarray:
    """Fill hole pixels with the inverse-square-distance average of boundary colours."""
    out = img.copy()
    known = ~hole
    near = np.zeros_like(hole)
    near[1:] |= hole[:-1]
    near[:-1] |= hole[1:]
    near[:, 1:] |= hole[:, :-1]
    near[:, :-1] |= hole[:, 1:]
    boundary = known & near
    by, bx = np.nonzero(boundary)
    colors = img[by, bx]
    hy, hx = np.nonzero(hole)
    for start in range(0, hy.size, 1024):
        sl = slice(start, start + 1024)
        d2 = (hy[sl, None] - by[None, :]) ** 2 + (hx[sl, None] - bx[None, :]) ** 2
        wts = 1.0 / d2
        out[hy[sl], hx[sl]] = colors[0] + (wts @ (colors - colors[0])) / wts.sum(axis=1, keepdims=True)
    return out


def auto_levels(width: int, height: int, patch_size: int) -> int:
    levels = max(1, math.ceil(math.log2(min(width, height) / 32))) if min(width, height) > 32 else 1
    # keep the coarsest level at least a few patches wide
    while levels > 1 and min(width, height) / 2 ** (levels - 1) < 2 * patch_size:
        levels -= 1
    return levels


def _chunks(n: int, threads: int):
    threads = max(1, min(threads, n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    return list(zip(bounds[:-1], bounds[1:]))


def _parallel(fn, n, threads, *args):
    parts = _chunks(n, threads)
    if len(parts) <= 1:
        for lo, hi in parts:
            fn(*args, lo, hi)
        return
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        list(pool.map(lambda b: fn(*args, b[0], b[1]), parts))


# -- driver -------------------------------------------------------------------

def _check(img: RasterImage, hole: AlphaMask):
    if hole.size != img.size:
        raise SizeMismatch(f"hole {hole.width}x{hole.height} vs image {img.width}x{img.height}")
    if not hole.is_binary():
        raise NonBinaryMask("inpainting hole mask must be binary")
    if hole.data.all():
        raise HoleCoversImage("the hole covers the entire image")


def inpaint_with_field(img: RasterImage, hole: AlphaMask, p: InpaintParams | None = None,
                       threads: int = 1) -> tuple[RasterImage, NearestNeighborField]:
    p = p or InpaintParams()
    _check(img, hole)
    full_hole = hole.data > 0
    if not full_hole.any():
        empty = np.zeros((0, 2), dtype=np.int64)
        return img, NearestNeighborField(empty, empty, np.zeros(0), np.zeros(0, dtype=np.int64))

    r = p.patch_size // 2
    scale = 2.0 * VOTE_SIGMA ** 2 * p.patch_size ** 2
    seed = np.uint64(p.seed)
    levels = p.pyramid_levels or auto_levels(img.width, img.height, p.patch_size)

    pyramid = [(img.data.copy(), full_hole)]
    for _ in range(levels - 1):
        c_img, c_hole = _downsample(*pyramid[-1])
        if c_hole.all():
            break
        pyramid.append((c_img, c_hole))

    prev_src = prev_index = prev_img = None
    for level in range(len(pyramid) - 1, -1, -1):
        cur, holes = pyramid[level]
        cur = cur.copy()
        h, w = holes.shape
        pts = np.argwhere(holes).astype(np.int64)
        n = pts.shape[0]
        index = np.full((h, w), -1, dtype=np.int64)
        index[pts[:, 0], pts[:, 1]] = np.arange(n)
        valid = _valid_sources(holes, r)
        vy, vx = np.nonzero(valid)
        box = np.array([vy.min(), vy.max(), vx.min(), vx.max()], dtype=np.int64)
        pixel_ids = (pts[:, 0] * w + pts[:, 1]).astype(np.uint64)

        # random valid source for every hole pixel
        bits = _draw_many(seed, level * 65536 + 65535, pixel_ids)
        pick = (bits % np.uint64(vy.size)).astype(np.int64)
        src = np.stack([vy[pick], vx[pick]], axis=1).astype(np.int64)

        if prev_src is None:
            cur = _boundary_fill(cur, holes)
        else:
            parent = prev_index[pts[:, 0] // 2, pts[:, 1] // 2]
            up = pts + 2 * (prev_src[parent] - pts // 2)
            ok = (
                (up[:, 0] >= 0) & (up[:, 0] < h) & (up[:, 1] >= 0) & (up[:, 1] < w)
            )
            ok[ok] = valid[up[ok, 0], up[ok, 1]]
            src[ok] = up[ok]
            cur[pts[:, 0], pts[:, 1]] = prev_img[pts[:, 0] // 2, pts[:, 1] // 2]

        cost = np.empty(n)
        known = np.empty(n, dtype=np.int64)
        _parallel(_evaluate, n, threads, cur, holes, pts, src, cost, known, r)
        for it in range(p.iterations):
            _propagate(cur, holes, valid, index, pts, src, cost, r, it % 2 == 1)
            _parallel(_random_search, n, threads, cur, holes, valid, box, pts, src, cost, r,
                      seed, level * 65536 + it, p.search_decay)

        out = cur.copy()
        _parallel(_vote, n, threads, cur, holes, index, src, cost, known, r, scale, out, pts)
        prev_src, prev_index, prev_img = src, index, out

    result = img.data.copy()
    result[full_hole] = prev_img[full_hole]
    field = NearestNeighborField(pts, src - pts, cost, known)
    return RasterImage(result), field


def inpaint(img: RasterImage, hole: AlphaMask, p: InpaintParams | None = None,
            threads: int = 1) -> RasterImage:
    """Fill ``hole`` (binary, 1 = missing) from the rest of the image."""
    return inpaint_with_field(img, hole, p, threads)[0]


def pure_background(raw: RasterImage, loc, p: InpaintParams | None = None, threads: int = 1) -> RasterImage:
    """The raw photo with the localized object removed and its hole filled."""
    return inpaint(raw, loc.hole_mask, p, threads)
