"""First-order motion transfer.

Each keypoint carries a position and a local 2x2 Jacobian. A driving frame
defines, per keypoint, an affine map from driving coordinates back to
source coordinates; Gaussian weights around the keypoints blend these maps
with an identity background map into a dense backward-sampling field, and
the source crop is warped through it.

Coordinates are normalized: x right, y down, (0, 0) at the image centre,
corners at +-1 (align-corners pixel mapping).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
import json
import math
import os

import numpy as np

from .errors import (InvalidConfig, InvalidInput, IoError, KeypointCountMismatch,
                     ObjectNotFound, SingularJacobian, SizeMismatch)
from .raster import AlphaMask, RasterImage, resample

MODES = ("absolute", "relative")
# sampling positions snap to 1/256 pixel, like fixed-point texture units
SUBPIXEL = 256.0
TRANSPARENT_WHITE = (1.0, 1.0, 1.0, 0.0)


@dataclass(frozen=True)
class MotionParams:
    sigma: float = 0.15
    bg_weight: float = 0.3
    grid: int | None = None  # working side length; None = crop resolution

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidConfig(f"motion sigma must be > 0, got {self.sigma}")
        if not self.bg_weight >= 0:
            raise InvalidConfig(f"motion bg_weight must be >= 0, got {self.bg_weight}")
        if self.grid is not None and self.grid < 1:
            raise InvalidConfig(f"motion grid must be >= 1, got {self.grid}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class MotionFrame:
    positions: np.ndarray  # (K, 2) normalized (x, y)
    jacobians: np.ndarray  # (K, 2, 2)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        k = pos.shape[0]
        if k < 1:
            raise InvalidInput("a motion frame needs at least one keypoint")
        if self.jacobians is None:
            jac = np.broadcast_to(np.eye(2), (k, 2, 2)).copy()
        else:
            jac = np.array(self.jacobians, dtype=np.float64).reshape(k, 2, 2)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(jac))):
            raise InvalidInput("keypoint positions and jacobians must be finite")
        det = np.abs(np.linalg.det(jac))
        if np.any(det <= 1e-6):
            raise SingularJacobian(f"keypoint jacobian with |det| <= 1e-6 at index {int(np.argmin(det))}")
        pos.setflags(write=False)
        jac.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "jacobians", jac)

    @property
    def num_keypoints(self) -> int:
        return self.positions.shape[0]

    def translated(self, delta) -> "MotionFrame":
        return MotionFrame(self.positions + np.asarray(delta, dtype=np.float64), self.jacobians)


@dataclass(frozen=True, eq=False)
class DrivingSequence:
    num_keypoints: int
    fps: float
    frames: tuple
    mode: str = "relative"

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.num_keypoints < 1:
            raise InvalidInput(f"num_keypoints must be >= 1, got {self.num_keypoints}")
        if not self.fps > 0:
            raise InvalidInput(f"fps must be > 0, got {self.fps}")
        if self.mode not in MODES:
            raise InvalidInput(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.frames:
            raise InvalidInput("a driving sequence needs at least one frame")
        for i, f in enumerate(self.frames):
            if f.num_keypoints != self.num_keypoints:
                raise KeypointCountMismatch(
                    f"frame {i} has {f.num_keypoints} keypoints, expected {self.num_keypoints}"
                )

    def __len__(self):
        return len(self.frames)

    # JSON wire format, version 1

    @classmethod
    def from_json(cls, obj) -> "DrivingSequence":
        _keys(obj, "driving sequence", {"version", "num_keypoints", "fps", "mode", "frames"}, {"mode"})
        if obj["version"] != 1 or isinstance(obj["version"], bool):
            raise InvalidInput(f"unsupported driving sequence version {obj['version']!r}")
        k = obj["num_keypoints"]
        if not isinstance(k, int) or isinstance(k, bool):
            raise InvalidInput("num_keypoints must be an integer")
        if not isinstance(obj["frames"], list):
            raise InvalidInput("frames must be a list")
        frames = []
        for i, fr in enumerate(obj["frames"]):
            _keys(fr, f"frame {i}", {"keypoints"})
            if not isinstance(fr["keypoints"], list):
                raise InvalidInput(f"frame {i}: keypoints must be a list")
            pos, jac = [], []
            for j, kp in enumerate(fr["keypoints"]):
                where = f"frame {i} keypoint {j}"
                _keys(kp, where, {"x", "y", "jacobian"}, {"jacobian"})
                pos.append((_number(kp["x"], where), _number(kp["y"], where)))
                m = kp.get("jacobian", [[1, 0], [0, 1]])
                if not (isinstance(m, list) and len(m) == 2
                        and all(isinstance(row, list) and len(row) == 2 for row in m)):
                    raise InvalidInput(f"{where}: jacobian must be a 2x2 list")
                jac.append([[_number(v, where) for v in row] for row in m])
            if not pos:
                raise InvalidInput(f"frame {i} has no keypoints")
            frames.append(MotionFrame(pos, jac))
        return cls(k, _number(obj["fps"], "fps"), frames, obj.get("mode", "relative"))

    def to_json(self) -> dict:
        frames = []
        for f in self.frames:
            kps = []
            for (x, y), m in zip(f.positions, f.jacobians):
                kp = {"x": float(x), "y": float(y)}
                if not np.array_equal(m, np.eye(2)):
                    kp["jacobian"] = m.tolist()
                kps.append(kp)
            frames.append({"keypoints": kps})
        return {"version": 1, "num_keypoints": self.num_keypoints, "fps": self.fps,
                "mode": self.mode, "frames": frames}


def _keys(obj, where, allowed, optional=frozenset()):
    if not isinstance(obj, dict):
        raise InvalidInput(f"{where}: expected a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise InvalidInput(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = allowed - set(optional) - set(obj)
    if missing:
        raise InvalidInput(f"{where}: missing field(s) {sorted(missing)}")


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InvalidInput(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def load_driving(path) -> DrivingSequence:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidInput(f"driving sequence file not found: {os.fspath(path)}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{os.fspath(path)} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {os.fspath(path)}: {exc}") from exc
    return DrivingSequence.from_json(obj)


def save_driving(path, seq: DrivingSequence) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(seq.to_json(), fh, indent=1)
    except OSError as exc:
        raise IoError(f"cannot write {os.fspath(path)}: {exc}") from exc


# -- coordinates --------------------------------------------------------------

def _norm(v, n):
    v = np.asarray(v, dtype=np.float64)
    return 2.0 * v / (n - 1) - 1.0 if n > 1 else np.zeros_like(v)


def to_normalized(col, row, width: int, height: int):
    return _norm(col, width), _norm(row, height)


def to_pixels(x, y, width: int, height: int):
    return (np.asarray(x) + 1.0) / 2.0 * (width - 1), (np.asarray(y) + 1.0) / 2.0 * (height - 1)


def normalized_grid(width: int, height: int) -> np.ndarray:
    """(H, W, 2) normalized (x, y) of every pixel centre."""
    x = _norm(np.arange(width), width)
    y = _norm(np.arange(height), height)
    return np.stack(np.broadcast_arrays(x[None, :], y[:, None]), axis=-1)


# -- keypoint placement -------------------------------------------------------

def auto_keypoints(mask: AlphaMask, k: int, seed: int = 0) -> MotionFrame:
    """Farthest-point sampling of foreground pixel centres.

    Starts at the foreground pixel nearest the centroid, then repeatedly
    takes the pixel farthest from all chosen ones (ties: first in row-major
    order). K is clamped to the number of foreground pixels. Fully
    deterministic; ``seed`` is accepted for interface symmetry with the
    other seeded stages and does not change the result.
    """
    if k < 1:
        raise InvalidInput(f"need at least one keypoint, got {k}")
    rows, cols = np.nonzero(mask.data >= 0.5)
    if rows.size == 0:
        raise ObjectNotFound("cannot place keypoints on an empty mask")
    pts = np.stack([cols, rows], axis=1).astype(np.float64)
    centroid = pts.mean(axis=0)
    chosen = [int(np.argmin(((pts - centroid) ** 2).sum(axis=1)))]
    mind = ((pts - pts[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(min(k, rows.size) - 1):
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, ((pts - pts[nxt]) ** 2).sum(axis=1))
    x, y = to_normalized(pts[chosen, 0], pts[chosen, 1], mask.width, mask.height)
    return MotionFrame(np.stack([x, y], axis=1), None)


# -- transforms and dense field -----------------------------------------------

@dataclass(frozen=True, eq=False)
class KeypointTransforms:
    """T_k(z) = targets[k] + matrices[k] @ (z - anchors[k])."""
    matrices: np.ndarray  # (K, 2, 2)
    targets: np.ndarray  # (K, 2)
    anchors: np.ndarray  # (K, 2)

    def __len__(self):
        return self.matrices.shape[0]

    def apply(self, k: int, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return self.targets[k] + (z - self.anchors[k]) @ self.matrices[k].T


def _right_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num @ inv(den) per keypoint, exactly the identity where num == den."""
    out = num @ np.linalg.inv(den)
    same = np.all(num == den, axis=(1, 2))
    out[same] = np.eye(2)
    return out


def frame_transforms(src: MotionFrame, drv: MotionFrame, drv_first: MotionFrame | None = None,
                     mode: str = "relative") -> KeypointTransforms:
    """Per-keypoint affine maps from driving-frame coordinates to source coordinates."""
    k = src.num_keypoints
    if mode not in MODES:
        raise InvalidInput(f"mode must be one of {MODES}, got {mode!r}")
    drv_first = drv if drv_first is None else drv_first
    if drv.num_keypoints != k or drv_first.num_keypoints != k:
        raise KeypointCountMismatch(
            f"source has {k} keypoints, driving frames have {drv.num_keypoints}/{drv_first.num_keypoints}"
        )
    for frame in (drv, drv_first):
        if np.any(np.abs(np.linalg.det(frame.jacobians)) <= 1e-6):
            raise SingularJacobian("driving jacobian is not invertible")
    if mode == "absolute":
        anchors = drv.positions.copy()
        matrices = _right_divide(src.jacobians, drv.jacobians)
    else:
        anchors = src.positions + (drv.positions - drv_first.positions)
        matrices = _right_divide(drv_first.jacobians, drv.jacobians)
    return KeypointTransforms(matrices, src.positions.copy(), anchors)


def keypoint_weights(transforms: KeypointTransforms, points: np.ndarray, p: MotionParams) -> np.ndarray:
    """Normalized weights (..., K+1); index 0 is the identity background map."""
    points = np.asarray(points, dtype=np.float64)
    d2 = ((points[..., None, :] - transforms.anchors) ** 2).sum(axis=-1)
    logs = np.empty(d2.shape[:-1] + (len(transforms) + 1,))
    logs[..., 0] = math.log(p.bg_weight) if p.bg_weight > 0 else -np.inf
    logs[..., 1:] = -d2 / (2.0 * p.sigma ** 2)
    # shift by the max so far-away pixels never underflow to 0/0
    logs -= logs.max(axis=-1, keepdims=True)
    u = np.exp(logs)
    return u / u.sum(axis=-1, keepdims=True)


def evaluate_field(transforms: KeypointTransforms, points, p: MotionParams) -> np.ndarray:
    """Backward-sampling coordinate for each normalized point (..., 2)."""
    points = np.asarray(points, dtype=np.float64)
    w = keypoint_weights(transforms, points, p)
    rel = points[..., None, :] - transforms.anchors  # (..., K, 2)
    moved = transforms.targets + np.einsum("kij,...kj->...ki", transforms.matrices, rel)
    return w[..., :1] * points + (w[..., 1:, None] * moved).sum(axis=-2)


@dataclass(frozen=True, eq=False)
class DenseMotionField:
    coords: np.ndarray  # (H, W, 2) normalized source (x, y) per output pixel

    @property
    def width(self) -> int:
        return self.coords.shape[1]

    @property
    def height(self) -> int:
        return self.coords.shape[0]


def dense_motion(transforms: KeypointTransforms, p: MotionParams, out_size: tuple[int, int]) -> DenseMotionField:
    width, height = out_size
    return DenseMotionField(evaluate_field(transforms, normalized_grid(width, height), p))


# -- warping ------------------------------------------------------------------

def warp_array(arr: np.ndarray, coords: np.ndarray, fill) -> np.ndarray:
    """Backward bilinear sampling of an (H, W, C) array at normalized coords."""
    h, w, ch = arr.shape
    fill = np.asarray(fill, dtype=np.float64)
    if fill.shape != (ch,):
        raise SizeMismatch(f"fill has {fill.size} channels, image has {ch}")
    px, py = to_pixels(coords[..., 0], coords[..., 1], w, h)
    px = np.round(px * SUBPIXEL) / SUBPIXEL
    py = np.round(py * SUBPIXEL) / SUBPIXEL
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(yy, xx):
        ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = arr[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(ok[..., None], vals, fill)

    return ((1.0 - fx) * (1.0 - fy) * tap(y0, x0) + fx * (1.0 - fy) * tap(y0, x0 + 1)
            + (1.0 - fx) * fy * tap(y0 + 1, x0) + fx * fy * tap(y0 + 1, x0 + 1))


def warp(img: RasterImage, field: DenseMotionField, fill=TRANSPARENT_WHITE) -> RasterImage:
    if (field.width, field.height) != img.size:
        raise SizeMismatch(
            f"field {field.width}x{field.height} does not match image {img.width}x{img.height}"
        )
    return RasterImage(warp_array(img.data, field.coords, fill))


def animate(crop: RasterImage, crop_mask: AlphaMask, src_kp: MotionFrame, seq: DrivingSequence,
            p: MotionParams | None = None, threads: int = 1) -> list[tuple[RasterImage, AlphaMask]]:
    """Warp the crop (and its mask) to every driving frame."""
    p = p or MotionParams()
    if src_kp.num_keypoints != seq.num_keypoints:
        raise KeypointCountMismatch(
            f"source has {src_kp.num_keypoints} keypoints, sequence declares {seq.num_keypoints}"
        )
    if crop_mask.size != crop.size:
        raise SizeMismatch(f"mask {crop_mask.size} vs crop {crop.size}")
    if p.grid is not None and p.grid != crop.width:
        crop = resample(crop, p.grid, p.grid, "lanczos3")
        crop_mask = resample(crop_mask, p.grid, p.grid, "lanczos3")
    stack = np.dstack([crop.data, crop_mask.data])
    fill = TRANSPARENT_WHITE + (0.0,)
    grid = normalized_grid(crop.width, crop.height)
    first = seq.frames[0]

    def one(drv):
        t = frame_transforms(src_kp, drv, first, seq.mode)
        out = warp_array(stack, evaluate_field(t, grid, p), fill)
        return RasterImage(out[..., :4]), AlphaMask(out[..., 4])

    if threads > 1 and len(seq.frames) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, seq.frames))
    return [one(f) for f in seq.frames]


# -- source keypoint files -----------------------------------------------------

def keypoints_from_json(obj) -> MotionFrame:
    """``{"version": 1, "keypoints": [{"x": .., "y": .., "jacobian": ..}, ...]}``"""
    _keys(obj, "keypoint file", {"version", "keypoints"})
    if obj["version"] != 1 or isinstance(obj["version"], bool):
        raise InvalidInput(f"unsupported keypoint file version {obj['version']!r}")
    if not isinstance(obj["keypoints"], list) or not obj["keypoints"]:
        raise InvalidInput("keypoint file: keypoints must be a non-empty list")
    seq = DrivingSequence.from_json({"version": 1, "num_keypoints": len(obj["keypoints"]), "fps": 1,
                                     "frames": [{"keypoints": obj["keypoints"]}]})
    return seq.frames[0]


def keypoints_to_json(frame: MotionFrame) -> dict:
    seq = DrivingSequence(frame.num_keypoints, 1.0, [frame])
    return {"version": 1, "keypoints": seq.to_json()["frames"][0]["keypoints"]}


def load_keypoints(path) -> MotionFrame:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidInput(f"keypoint file not found: {os.fspath(path)}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{os.fspath(path)} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {os.fspath(path)}: {exc}") from exc
    return keypoints_from_json(obj)


def save_keypoints(path, frame: MotionFrame) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(keypoints_to_json(frame), fh, indent=1)
    except OSError as exc:
        raise IoError(f"cannot write {os.fspath(path)}: {exc}") from exc
