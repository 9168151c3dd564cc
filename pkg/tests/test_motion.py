import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from movelike.errors import InvalidInput, KeypointCountMismatch, ObjectNotFound, SingularJacobian, SizeMismatch
from movelike.motion import (DenseMotionField, DrivingSequence, MotionFrame, MotionParams, animate,
                             auto_keypoints, dense_motion, evaluate_field, frame_transforms,
                             keypoint_weights, keypoints_from_json, keypoints_to_json, load_driving,
                             normalized_grid, save_driving, to_normalized, to_pixels, warp)
from movelike.raster import AlphaMask, RasterImage
from oracles import bilinear_sample


def rand_frame(rng, k, jac=True):
    pos = rng.uniform(-0.8, 0.8, (k, 2))
    j = None
    if jac:
        j = np.eye(2) + rng.uniform(-0.3, 0.3, (k, 2, 2))
    return MotionFrame(pos, j)


def rand_crop(rng, n):
    return RasterImage(rng.random((n, n, 4))), AlphaMask(rng.random((n, n)))


# -- types and file format ------------------------------------------------------

def test_frame_validation():
    with pytest.raises(SingularJacobian):
        MotionFrame([[0, 0]], [[[1, 0], [2, 0]]])
    with pytest.raises(InvalidInput):
        MotionFrame([[np.nan, 0]], None)
    with pytest.raises(InvalidInput):
        MotionFrame(np.zeros((0, 2)), None)
    f = MotionFrame([[0.1, 0.2]], None)
    assert np.array_equal(f.jacobians, np.eye(2)[None])


def test_sequence_validation():
    f1, f2 = MotionFrame([[0, 0]], None), MotionFrame([[0, 0], [1, 1]], None)
    with pytest.raises(KeypointCountMismatch):
        DrivingSequence(1, 10, [f1, f2])
    with pytest.raises(InvalidInput):
        DrivingSequence(1, 0, [f1])
    with pytest.raises(InvalidInput):
        DrivingSequence(1, 10, [f1], "sideways")
    with pytest.raises(InvalidInput):
        DrivingSequence(1, 10, [])


SAMPLE = {
    "version": 1, "num_keypoints": 2, "fps": 12.5, "mode": "absolute",
    "frames": [{"keypoints": [{"x": -0.13, "y": 0.40, "jacobian": [[1, 0.5], [0, 1]]}, {"x": 0.2, "y": 0}]}],
}


def test_json_round_trip(tmp_path):
    seq = DrivingSequence.from_json(SAMPLE)
    assert seq.mode == "absolute" and seq.fps == 12.5 and len(seq) == 1
    assert np.array_equal(seq.frames[0].jacobians[1], np.eye(2))
    save_driving(tmp_path / "s.json", seq)
    back = load_driving(tmp_path / "s.json")
    assert back.to_json() == seq.to_json()
    assert json.loads((tmp_path / "s.json").read_text())["frames"][0]["keypoints"][1] == {"x": 0.2, "y": 0.0}


def test_json_defaults_to_relative():
    obj = {k: v for k, v in SAMPLE.items() if k != "mode"}
    assert DrivingSequence.from_json(obj).mode == "relative"


@pytest.mark.parametrize("patch", [
    {"version": 2}, {"extra": 1}, {"num_keypoints": 3}, {"fps": -1}, {"frames": {}},
    {"frames": [{"keypoints": [{"x": 0, "y": 0, "z": 1}, {"x": 0, "y": 0}]}]},
    {"frames": [{"keypoints": [{"x": 0, "y": 0, "jacobian": [[1, 0]]}, {"x": 0, "y": 0}]}]},
    {"frames": [{"keypoints": [{"x": "0", "y": 0}, {"x": 0, "y": 0}]}]},
])
def test_json_rejections(patch):
    with pytest.raises(InvalidInput):
        DrivingSequence.from_json({**SAMPLE, **patch})


def test_missing_driving_file(tmp_path):
    with pytest.raises(InvalidInput, match="nope.json"):
        load_driving(tmp_path / "nope.json")


def test_keypoint_file_round_trip():
    f = MotionFrame([[0.25, -0.5], [0, 0]], [[[2, 0], [0, 1]], np.eye(2)])
    back = keypoints_from_json(keypoints_to_json(f))
    assert np.array_equal(back.positions, f.positions) and np.array_equal(back.jacobians, f.jacobians)
    with pytest.raises(InvalidInput):
        keypoints_from_json({"version": 1, "keypoints": []})


# -- coordinates ------------------------------------------------------------------

def test_align_corners_mapping():
    x, y = to_normalized(np.array([0, 4]), np.array([0, 2]), 5, 3)
    assert x.tolist() == [-1, 1] and y.tolist() == [-1, 1]
    px, py = to_pixels(0.0, 0.0, 5, 3)
    assert (px, py) == (2.0, 1.0)
    g = normalized_grid(5, 3)
    assert g.shape == (3, 5, 2) and g[0, 0].tolist() == [-1, -1] and g[2, 4].tolist() == [1, 1]


# -- keypoint placement ----------------------------------------------------------

def test_single_keypoint_on_disk_is_centre():
    yy, xx = np.mgrid[:21, :21]
    disk = ((yy - 10) ** 2 + (xx - 10) ** 2 <= 36).astype(float)
    f = auto_keypoints(AlphaMask(disk), 1)
    assert f.positions.tolist() == [[0.0, 0.0]]


def test_two_keypoints_on_bar_match_brute_force():
    m = np.zeros((9, 15))
    m[4, 2:13] = 1
    m[3:6, 2] = 1  # lopsided so the far end is unique
    f = auto_keypoints(AlphaMask(m), 2)
    px, py = to_pixels(f.positions[:, 0], f.positions[:, 1], 15, 9)
    ys, xs = np.nonzero(m)
    cy, cx = ys.mean(), xs.mean()
    first = min(zip(ys, xs), key=lambda p: ((p[0] - cy) ** 2 + (p[1] - cx) ** 2, p))
    best = max(zip(ys, xs), key=lambda p: ((p[0] - first[0]) ** 2 + (p[1] - first[1]) ** 2, -p[0], -p[1]))
    assert np.allclose([py[0], px[0]], first) and np.allclose([py[1], px[1]], best)


def test_keypoint_count_is_clamped():
    m = np.zeros((5, 5))
    m[1, 1] = m[3, 3] = 1
    assert auto_keypoints(AlphaMask(m), 10).num_keypoints == 2
    with pytest.raises(ObjectNotFound):
        auto_keypoints(AlphaMask(np.zeros((5, 5))), 1)


# -- transforms ------------------------------------------------------------------

def test_absolute_identity_transform():
    src = MotionFrame([[0.1, -0.2], [0.5, 0.5]], None)
    t = frame_transforms(src, src, src, "absolute")
    z = np.array([0.3, 0.7])
    for k in range(2):
        assert np.allclose(t.apply(k, z), z, atol=1e-15)


def test_absolute_pure_translation():
    src, drv = MotionFrame([[0, 0]], None), MotionFrame([[0.5, 0]], None)
    t = frame_transforms(src, drv, drv, "absolute")
    assert np.allclose(t.apply(0, [0.2, 0.1]), [0.2 - 0.5, 0.1])
    assert np.array_equal(t.apply(0, drv.positions[0]), src.positions[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_relative_zero_motion_is_identity(seed, k):
    rng = np.random.default_rng(seed)
    src, first = rand_frame(rng, k), rand_frame(rng, k)
    t = frame_transforms(src, first, first, "relative")
    assert np.array_equal(t.matrices, np.broadcast_to(np.eye(2), (k, 2, 2)))
    assert np.array_equal(t.anchors, t.targets)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.sampled_from(["absolute", "relative"]))
def test_anchor_maps_to_source_keypoint(seed, k, mode):
    rng = np.random.default_rng(seed)
    src, drv, first = rand_frame(rng, k), rand_frame(rng, k), rand_frame(rng, k)
    t = frame_transforms(src, drv, first, mode)
    expect_anchor = drv.positions if mode == "absolute" else src.positions + drv.positions - first.positions
    assert np.allclose(t.anchors, expect_anchor)
    for i in range(k):
        assert np.allclose(t.apply(i, t.anchors[i]), src.positions[i], atol=1e-12)


def test_relative_follows_driving_deformation():
    # the local affine change between first and current driving frame is applied to the source
    src = MotionFrame([[0, 0]], [[[2, 0], [0, 1]]])
    first = MotionFrame([[0.1, 0]], None)
    drv = MotionFrame([[0.1, 0]], [[[1.5, 0], [0, 1]]])
    t = frame_transforms(src, drv, first, "relative")
    assert np.allclose(t.matrices[0], [[1 / 1.5, 0], [0, 1]])


def test_singular_driving_jacobian():
    src = MotionFrame([[0, 0]], None)
    drv = MotionFrame.__new__(MotionFrame)
    object.__setattr__(drv, "positions", np.zeros((1, 2)))
    object.__setattr__(drv, "jacobians", np.zeros((1, 2, 2)))
    with pytest.raises(SingularJacobian):
        frame_transforms(src, drv, src, "absolute")


# -- dense field ------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(0.02, 1.0), st.floats(0.0, 2.0))
def test_weights_are_normalized(seed, k, sigma, bg):
    rng = np.random.default_rng(seed)
    src, drv = rand_frame(rng, k), rand_frame(rng, k)
    t = frame_transforms(src, drv, src, "absolute")
    w = keypoint_weights(t, rng.uniform(-3, 3, (50, 2)), MotionParams(sigma=sigma, bg_weight=bg))
    assert np.all(np.abs(w.sum(axis=-1) - 1) <= 1e-6) and np.all(w >= 0)


def test_identity_transforms_give_identity_field():
    src = MotionFrame([[0.2, 0.1], [-0.4, 0.3]], None)
    t = frame_transforms(src, src, src, "absolute")
    f = dense_motion(t, MotionParams(), (9, 7))
    assert np.allclose(f.coords, normalized_grid(9, 7), atol=1e-15)


def test_single_keypoint_without_background_is_that_transform():
    src, drv = MotionFrame([[0.1, 0.2]], [[[1.2, 0.1], [0, 0.9]]]), MotionFrame([[-0.3, 0]], None)
    t = frame_transforms(src, drv, drv, "absolute")
    grid = normalized_grid(6, 6)
    f = dense_motion(t, MotionParams(bg_weight=0.0), (6, 6))
    assert np.allclose(f.coords, t.apply(0, grid.reshape(-1, 2)).reshape(6, 6, 2), atol=1e-14)


def test_two_translations_match_scalar_formula():
    src = MotionFrame([[-0.3, 0.0], [0.4, 0.2]], None)
    drv = MotionFrame([[-0.2, 0.1], [0.3, 0.25]], None)
    t = frame_transforms(src, drv, drv, "absolute")
    p = MotionParams(sigma=0.15, bg_weight=0.3)
    f = dense_motion(t, p, (11, 11))
    for col, row in [(0, 0), (3, 5), (4, 5), (7, 6), (10, 10)]:
        x, y = 2 * col / 10 - 1, 2 * row / 10 - 1
        u = [0.3]
        maps = [(x, y)]
        for (sx, sy), (dx, dy) in zip(src.positions, drv.positions):
            u.append(math.exp(-((x - dx) ** 2 + (y - dy) ** 2) / (2 * 0.15 ** 2)))
            maps.append((sx + (x - dx), sy + (y - dy)))
        total = sum(u)
        ex = sum(ui * m[0] for ui, m in zip(u, maps)) / total
        ey = sum(ui * m[1] for ui, m in zip(u, maps)) / total
        assert f.coords[row, col] == pytest.approx((ex, ey), abs=1e-12)


def test_interpolation_at_separated_keypoints():
    src = MotionFrame([[-0.6, -0.6], [0.6, 0.6]], [[[1.1, 0], [0, 0.9]], np.eye(2)])
    drv = MotionFrame([[-0.5, -0.6], [0.6, 0.5]], None)
    p = MotionParams(sigma=0.15, bg_weight=0.0)
    t = frame_transforms(src, drv, drv, "absolute")
    vals = evaluate_field(t, t.anchors, p)
    assert np.all(np.abs(vals - t.targets) <= 1e-3)


# -- warping -------------------------------------------------------------------

def test_identity_warp_is_exact():
    img = RasterImage(np.random.default_rng(0).random((7, 9, 4)))
    out = warp(img, DenseMotionField(normalized_grid(9, 7)))
    assert np.array_equal(out.data, img.data)


def test_one_pixel_shift_exposes_fill_column():
    img = RasterImage(np.random.default_rng(1).random((4, 6, 4)))
    g = normalized_grid(6, 4).copy()
    g[..., 0] += 2 / 5
    out = warp(img, DenseMotionField(g), fill=(0, 0, 0, 0))
    assert np.array_equal(out.data[:, :5], img.data[:, 1:])
    assert np.array_equal(out.data[:, 5], np.zeros((4, 4)))


def test_half_pixel_shift_hand_oracle():
    img = RasterImage.from_rgb(np.array([[[0.0] * 3, [1.0] * 3]]))
    g = normalized_grid(2, 1).copy()
    g[..., 0] += 1.0  # half of the 2 / (W - 1) per-pixel step
    out = warp(img, DenseMotionField(g), fill=(1, 1, 1, 0))
    assert out.data[0, 0, 0] == 0.5
    # right pixel samples halfway between the last column and the fill
    assert out.data[0, 1].tolist() == [1.0, 1.0, 1.0, 0.5]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_warp_matches_bilinear_oracle(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(2, 8, size=2)
    img = RasterImage(rng.random((h, w, 4)))
    g = normalized_grid(w, h) * 0.8 + rng.uniform(-0.1, 0.1, (h, w, 2))
    out = warp(img, DenseMotionField(g))
    for row in range(h):
        for col in range(w):
            px, py = to_pixels(g[row, col, 0], g[row, col, 1], w, h)
            px, py = round(px * 256) / 256, round(py * 256) / 256
            assert np.allclose(out.data[row, col], bilinear_sample(img.data, px, py), atol=1e-12)


def test_warp_size_mismatch():
    with pytest.raises(SizeMismatch):
        warp(RasterImage.filled(3, 3), DenseMotionField(normalized_grid(4, 3)))


# -- animate -------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_absolute_identity_law(seed, k):
    rng = np.random.default_rng(seed)
    crop, mask = rand_crop(rng, 16)
    src = rand_frame(rng, k)
    frames = animate(crop, mask, src, DrivingSequence(k, 10, [src] * 3, "absolute"))
    for img, m in frames:
        assert np.array_equal(img.data, crop.data) and np.array_equal(m.data, mask.data)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_relative_identity_law(seed, k):
    rng = np.random.default_rng(seed)
    crop, mask = rand_crop(rng, 16)
    first = rand_frame(rng, k)
    frames = animate(crop, mask, rand_frame(rng, k), DrivingSequence(k, 10, [first] * 3, "relative"))
    for img, m in frames:
        assert np.array_equal(img.data, crop.data) and np.array_equal(m.data, mask.data)


def _centroid(mask):
    ys, xs = np.nonzero(mask >= 0.5)
    w = mask[ys, xs]
    return np.array([(xs * w).sum() / w.sum(), (ys * w).sum() / w.sum()])


def test_translation_moves_mask_centroid():
    n = 41
    m = np.zeros((n, n))
    m[15:26, 13:28] = 1
    crop = RasterImage.from_rgb(np.repeat(np.where(m[..., None] > 0, 0.2, 1.0), 3, axis=2))
    steps = [0.0, 0.05, 0.1, 0.15]
    seq = DrivingSequence(1, 10, [MotionFrame([[s, 0.0]], None) for s in steps], "relative")
    src = MotionFrame([[0.0, 0.0]], None)
    frames = animate(crop, AlphaMask(m), src, seq, MotionParams(bg_weight=0.0))
    c0 = _centroid(m)
    for s, (_, wm) in zip(steps, frames):
        expect = c0 + np.array([s * (n - 1) / 2, 0.0])
        assert np.all(np.abs(_centroid(wm.data) - expect) <= 0.5)


def test_frame_independence():
    rng = np.random.default_rng(3)
    crop, mask = rand_crop(rng, 12)
    src = rand_frame(rng, 2)
    frames = [rand_frame(rng, 2) for _ in range(4)]
    perm = [2, 0, 3, 1]
    # keep frames[0] first in both so relative anchoring is unchanged
    a = animate(crop, mask, src, DrivingSequence(2, 10, frames, "absolute"))
    b = animate(crop, mask, src, DrivingSequence(2, 10, [frames[i] for i in perm], "absolute"))
    for j, i in enumerate(perm):
        assert np.array_equal(b[j][0].data, a[i][0].data)


def test_threads_do_not_change_frames():
    rng = np.random.default_rng(4)
    crop, mask = rand_crop(rng, 20)
    src = rand_frame(rng, 3)
    seq = DrivingSequence(3, 10, [rand_frame(rng, 3) for _ in range(5)])
    a = animate(crop, mask, src, seq, threads=1)
    b = animate(crop, mask, src, seq, threads=4)
    assert all(np.array_equal(x[0].data, y[0].data) for x, y in zip(a, b))


def test_integer_translation_equivariance():
    rng = np.random.default_rng(5)
    n, shift = 33, 3
    base = rng.random((n, n, 4))
    crop = RasterImage(base)
    moved = RasterImage(np.roll(base, shift, axis=1))
    delta = np.array([2 * shift / (n - 1), 0.0])
    src, drv = rand_frame(rng, 2, jac=False), rand_frame(rng, 2, jac=False)
    src, drv = MotionFrame(src.positions * 0.3, None), MotionFrame(src.positions * 0.3 + 0.05, None)
    seq = DrivingSequence(2, 10, [drv], "absolute")
    seq_moved = DrivingSequence(2, 10, [drv.translated(delta)], "absolute")
    mask = AlphaMask(base[..., 0])
    (a, _), = animate(crop, mask, src, seq, MotionParams(bg_weight=0.0))
    (b, _), = animate(moved, AlphaMask(moved.data[..., 0]), src.translated(delta), seq_moved,
                      MotionParams(bg_weight=0.0))
    # compare away from the wrapped columns and the borders
    assert np.array_equal(b.data[8:-8, 8 + shift:-8], a.data[8:-8, 8:-8 - shift])


def test_keypoint_count_mismatch():
    crop, mask = rand_crop(np.random.default_rng(6), 8)
    with pytest.raises(KeypointCountMismatch):
        animate(crop, mask, MotionFrame([[0, 0]], None), DrivingSequence(2, 10, [MotionFrame([[0, 0], [1, 1]], None)]))


def test_grid_parameter_resizes_working_crop():
    crop, mask = rand_crop(np.random.default_rng(7), 10)
    f = MotionFrame([[0, 0]], None)
    (img, m), = animate(crop, mask, f, DrivingSequence(1, 10, [f]), MotionParams(grid=16))
    assert img.size == (16, 16) and m.size == (16, 16)
