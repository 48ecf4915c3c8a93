import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgerestore.errors import PlanError, ShapeError
from edgerestore.nn import forward_f32
from edgerestore.nn.graph import CONV2D, INPUT, LayerSpec, ModelGraph
from edgerestore.tiles import extract_tiles, make_triplet, plan_tiles, stitch


def test_full_image_gives_256_tiles():
    plan = plan_tiles(1024, 1024, 64, 0)
    assert len(plan) == 256
    img = np.zeros((1024, 1024, 3), np.float32)
    tiles = extract_tiles(img, plan)
    assert len(tiles) == 256 and all(t.shape == (1, 64, 64, 3) for t in tiles)


def test_single_tile_plan():
    assert plan_tiles(64, 64, 64, 0).entries == ((0, 0),)


def test_clamped_offsets_cover_everything():
    plan = plan_tiles(100, 100, 64, 0)
    assert {r for r, _ in plan.entries} == {0, 36} == {c for _, c in plan.entries}
    assert len(plan) == 4
    assert plan.coverage().min() >= 1


@settings(max_examples=60, deadline=None)
@given(st.integers(8, 120), st.integers(8, 120), st.integers(1, 8), st.integers(0, 3))
def test_coverage_bitmap(h, w, tile, half_overlap):
    overlap = 2 * half_overlap
    if overlap >= tile or h < tile or w < tile:
        with pytest.raises(PlanError):
            plan_tiles(h, w, tile, overlap)
        return
    plan = plan_tiles(h, w, tile, overlap)
    covered = np.zeros((h, w), bool)
    for r, c in plan.entries:
        assert 0 <= r <= h - tile and 0 <= c <= w - tile
        covered[r : r + tile, c : c + tile] = True
    assert covered.all()
    if overlap == 0 and h % tile == 0 and w % tile == 0:
        assert len(plan) == (h // tile) * (w // tile)
        assert plan.coverage().max() == 1


def test_plan_errors():
    for args in [(32, 64, 64, 0), (64, 64, 0, 0), (128, 128, 64, 3), (128, 128, 64, 64), (128, 128, 64, -2)]:
        with pytest.raises(PlanError):
            plan_tiles(*args)


def test_tiles_hold_their_source_window():
    h, w = 100, 130
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    img = np.stack([rows, cols], axis=-1).astype(np.float32)
    plan = plan_tiles(h, w, 64, 0)
    for (r, c), t in zip(plan.entries, extract_tiles(img, plan)):
        assert t[0, 0, 0].tolist() == [r, c]
        assert np.array_equal(t[0], img[r : r + 64, c : c + 64])


def test_constant_image_gives_constant_tiles():
    plan = plan_tiles(128, 128, 64, 8)
    assert all(np.all(t == 0.25) for t in extract_tiles(np.full((128, 128), 0.25, np.float32), plan))


@settings(max_examples=25, deadline=None)
@given(st.integers(64, 200), st.integers(64, 200), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_round_trip_is_bit_exact(h, w, c, seed):
    img = np.random.default_rng(seed).random((1, h, w, c)).astype(np.float32)
    plan = plan_tiles(h, w, 64, 0)
    assert stitch(extract_tiles(img, plan), plan).tobytes() == img.tobytes()


def test_average_band_of_two_constant_tiles():
    plan = plan_tiles(64, 96, 64, 32)
    assert plan.entries == ((0, 0), (0, 32))
    a = np.full((1, 64, 64, 1), 0.2, np.float32)
    b = np.full((1, 64, 64, 1), 0.6, np.float32)
    out = stitch([a, b], plan)[0, :, :, 0]
    assert np.allclose(out[:, :32], 0.2) and np.allclose(out[:, 64:], 0.6)
    assert np.allclose(out[:, 32:64], 0.4)


def test_overlapped_identity_reconstruction():
    img = np.random.default_rng(3).random((1, 150, 170, 1)).astype(np.float32)
    plan = plan_tiles(150, 170, 64, 8)
    out = stitch(extract_tiles(img, plan), plan)
    assert np.max(np.abs(out - img)) <= 1e-6


def test_stitch_is_order_independent():
    img = np.random.default_rng(4).random((1, 160, 160, 2)).astype(np.float32)
    plan = plan_tiles(160, 160, 64, 16)
    tiles = extract_tiles(img, plan)
    reference = stitch(tiles, plan)
    order = np.random.default_rng(0).permutation(len(tiles))
    shuffled = {int(k): tiles[k] for k in order}
    assert stitch(shuffled, plan).tobytes() == reference.tobytes()


def test_stitch_shape_errors():
    plan = plan_tiles(128, 128, 64, 0)
    tiles = extract_tiles(np.zeros((128, 128)), plan)
    with pytest.raises(ShapeError):
        stitch(tiles[:3], plan)
    with pytest.raises(ShapeError):
        stitch(tiles[:3] + [np.zeros((1, 32, 32, 1))], plan)
    with pytest.raises(ShapeError):
        stitch({0: tiles[0], 1: tiles[1], 2: tiles[2], 5: tiles[3]}, plan)
    with pytest.raises(ShapeError):
        extract_tiles(np.zeros((100, 128)), plan)


def test_seam_property_for_translation_equivariant_model():
    rng = np.random.default_rng(5)
    layers = [
        LayerSpec("c1", CONV2D, [INPUT], weights=rng.standard_normal((3, 3, 1, 4)).astype(np.float32),
                  bias=np.zeros(4, np.float32)),
        LayerSpec("c2", CONV2D, ["c1"], weights=rng.standard_normal((3, 3, 4, 1)).astype(np.float32),
                  bias=np.zeros(1, np.float32)),
    ]
    g = ModelGraph("convstack", [1, 64, 64, 1], layers)
    halo = 2
    h, w = 150, 140
    img = rng.random((1, h, w, 1)).astype(np.float32)
    whole = forward_f32(g, img)
    plan = plan_tiles(h, w, 64, 2 * halo + 4)
    outs = [forward_f32(g, t) for t in extract_tiles(img, plan)]
    good = np.ones((h, w), bool)
    for (r, c), o in zip(plan.entries, outs):
        # interior of each tile: a halo margin except where the tile edge is the image edge
        r0 = r + (halo if r > 0 else 0)
        c0 = c + (halo if c > 0 else 0)
        r1 = r + 64 - (halo if r + 64 < h else 0)
        c1 = c + 64 - (halo if c + 64 < w else 0)
        np.testing.assert_allclose(o[0, r0 - r : r1 - r, c0 - c : c1 - c], whole[0, r0:r1, c0:c1], atol=1e-5)
        inner = np.zeros((h, w), bool)
        inner[r0:r1, c0:c1] = True
        touched = np.zeros((h, w), bool)
        touched[r : r + 64, c : c + 64] = True
        good &= ~touched | inner
    stitched = stitch(outs, plan)
    assert good.mean() > 0.8
    np.testing.assert_allclose(stitched[0][good], whole[0][good], atol=1e-5)


def test_make_triplet_clamping():
    stack = [np.full((4, 4), float(i), np.float32) for i in range(5)]
    assert make_triplet(stack[:1], 0)[0, 0, 0].tolist() == [0, 0, 0]
    assert make_triplet(stack[:3], 1)[0, 0, 0].tolist() == [0, 1, 2]
    assert make_triplet(stack, 4)[0, 0, 0].tolist() == [3, 4, 4]
    assert make_triplet(stack, 0)[0, 0, 0].tolist() == [0, 0, 1]
    assert make_triplet(stack, 2).shape == (1, 4, 4, 3)
    with pytest.raises(IndexError):
        make_triplet(stack, 5)
    with pytest.raises(IndexError):
        make_triplet([], 0)
