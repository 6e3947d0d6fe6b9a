import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra import numpy as hnp
from PIL import Image

from edgesched.operator import DecodeError, encode_png, process_file, threshold_flood_fill
from oracles import bfs_flood_fill

images = hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=20))


def test_all_black_stays_black():
    assert not threshold_flood_fill(np.zeros((4, 4), np.uint8)).any()


def test_all_bright_unchanged():
    img = np.full((6, 5), 255, np.uint8)
    assert np.array_equal(threshold_flood_fill(img), img)


def test_dark_ring_filled_bright_center_kept():
    img = np.full((5, 5), 10, np.uint8)
    img[1:4, 1:4] = 200
    want = bfs_flood_fill(img)
    got = threshold_flood_fill(img)
    assert np.array_equal(got, want)
    assert not got[0].any() and not got[:, 0].any()
    assert (got[1:4, 1:4] == 200).all()


def test_enclosed_dark_pocket_untouched():
    img = np.full((5, 5), 200, np.uint8)
    img[2, 2] = 10
    assert np.array_equal(threshold_flood_fill(img), img)


def test_threshold_is_inclusive():
    img = np.array([[30, 31]], np.uint8)
    assert threshold_flood_fill(img, 30).tolist() == [[0, 31]]


def test_diagonal_leak_only_with_8_connectivity():
    img = np.full((5, 5), 200, np.uint8)
    img[0, 0] = 5
    img[1, 1] = 5
    assert threshold_flood_fill(img)[1, 1] == 5
    assert threshold_flood_fill(img, connectivity=8)[1, 1] == 0


@given(images)
def test_matches_bfs_oracle(img):
    assert np.array_equal(threshold_flood_fill(img), bfs_flood_fill(img))
    assert np.array_equal(threshold_flood_fill(img, connectivity=8), bfs_flood_fill(img, connectivity=8))


@given(images)
def test_idempotent(img):
    once = threshold_flood_fill(img)
    assert np.array_equal(threshold_flood_fill(once), once)


@given(images)
def test_only_dark_pixels_darken(img):
    out = threshold_flood_fill(img)
    assert (out <= img).all()
    changed = out != img
    assert (img[changed] <= 30).all()


def _save(path, arr):
    path.write_bytes(encode_png(arr))
    return path


def test_uniform_image_reencodes_to_same_size(tmp_path):
    src = _save(tmp_path / "u.png", np.full((64, 64), 200, np.uint8))
    rep = process_file(src, tmp_path / "o.png", 30)
    assert abs(rep.processed_size - rep.original_size) <= 0.01 * rep.original_size
    assert rep.cpu_seconds > 0


def test_noisy_dark_half_shrinks(tmp_path):
    rng = np.random.default_rng(0)
    img = np.full((128, 128), 200, np.uint8)
    img[:, :64] = rng.integers(0, 30, size=(128, 64), dtype=np.uint8)
    src = _save(tmp_path / "n.png", img)
    rep = process_file(src, tmp_path / "o.png", 30)
    assert rep.processed_size < rep.original_size
    assert rep.ratio > 0
    with Image.open(tmp_path / "o.png") as out:
        assert np.array_equal(np.asarray(out), bfs_flood_fill(img))


def test_color_input_rejected(tmp_path):
    p = tmp_path / "c.png"
    Image.new("RGB", (4, 4), (1, 2, 3)).save(p)
    with pytest.raises(DecodeError):
        process_file(p, tmp_path / "o.png")


def test_garbage_input_rejected(tmp_path):
    p = tmp_path / "g.png"
    p.write_bytes(b"not a png")
    with pytest.raises(DecodeError):
        process_file(p, tmp_path / "o.png")
