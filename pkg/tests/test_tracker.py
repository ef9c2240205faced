import numpy as np
import pytest

from fingernarx import _fallback
from fingernarx.errors import TrackingLossError
from fingernarx.projection import REFERENCE_COEFFICIENTS, PixelObservation, pixel_to_world
from fingernarx.tracker import (
    Blob,
    combine_pins,
    find_blobs,
    load_frame,
    median_filter,
    observe_frame,
    preprocess,
    render_pins,
    save_frame,
    track_directory,
    track_frame,
)


def uniform(blue, shape=(12, 16)):
    img = np.zeros((*shape, 3), dtype=np.uint8)
    img[:, :, 2] = blue
    return img


def disk_oracle(shape, cx, cy, radius):
    """Brute-force pixel membership of a rasterized disk."""
    pix = [(j, i) for i in range(shape[0]) for j in range(shape[1]) if (j - cx) ** 2 + (i - cy) ** 2 <= radius**2]
    xs, ys = zip(*pix)
    return len(pix), (sum(xs) / len(pix), sum(ys) / len(pix))


class TestPreprocess:
    def test_full_scale_on(self):
        assert preprocess(uniform(255)).all()

    def test_threshold_is_strict(self):
        assert not preprocess(uniform(38)).any()
        assert preprocess(uniform(39)).all()

    def test_salt_pixel_removed(self):
        img = uniform(0)
        img[5, 7, 2] = 255
        assert not preprocess(img).any()

    def test_red_green_ignored(self):
        img = uniform(0)
        img[:, :, 0] = 255
        img[:, :, 1] = 255
        assert not preprocess(img).any()

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            preprocess(uniform(100), median_window=4)

    @pytest.mark.parametrize("value", [0, 17, 200, 255])
    def test_median_identity_on_constant(self, value):
        ch = np.full((9, 11), value, dtype=np.uint8)
        np.testing.assert_array_equal(median_filter(ch, 3), ch)
        np.testing.assert_array_equal(median_filter(ch, 5), ch)

    def test_median_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        ch = rng.integers(0, 256, (7, 9)).astype(np.uint8)
        padded = np.pad(ch, 1, mode="edge")
        expected = np.array([[np.median(padded[i : i + 3, j : j + 3]) for j in range(9)] for i in range(7)])
        np.testing.assert_array_equal(median_filter(ch, 3), expected.astype(np.uint8))


class TestFindBlobs:
    def test_empty(self):
        assert find_blobs(np.zeros((10, 10), bool)) == []

    def test_disk(self):
        img = render_pins((100, 100), [(30, 40)], 5)
        blobs = find_blobs(img[:, :, 2] > 0)
        assert len(blobs) == 1
        area, centroid = disk_oracle((100, 100), 30, 40, 5)
        assert blobs[0].area_px == area
        assert abs(blobs[0].area_px - np.pi * 25) / (np.pi * 25) < 0.05
        assert np.hypot(blobs[0].centroid[0] - 30, blobs[0].centroid[1] - 40) < 0.5
        np.testing.assert_allclose(blobs[0].centroid, centroid, atol=1e-12)

    def test_two_disks_area_conservation(self):
        mask = render_pins((80, 120), [(20.3, 30.7), (80.6, 50.2)], 6)[:, :, 2] > 0
        blobs = find_blobs(mask)
        assert len(blobs) == 2
        assert sum(b.area_px for b in blobs) == mask.sum()
        for b, (cx, cy) in zip(blobs, [(20.3, 30.7), (80.6, 50.2)]):
            area, centroid = disk_oracle(mask.shape, cx, cy, 6)
            assert b.area_px == area
            np.testing.assert_allclose(b.centroid, centroid, atol=1e-12)

    def test_diagonal_is_connected(self):
        mask = np.eye(6, dtype=bool)
        assert len(find_blobs(mask)) == 1

    def test_random_masks_against_fallback_and_conservation(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            mask = rng.random((30, 40)) < 0.4
            blobs = find_blobs(mask)
            assert sum(b.area_px for b in blobs) == mask.sum()
            labels, n = _fallback.label_components(mask.astype(np.uint8))
            assert n == len(blobs)
            assert np.array_equal(np.bincount(labels.ravel())[1:], [b.area_px for b in blobs])


class TestTrackFrame:
    def test_midpoint(self):
        pin = combine_pins([Blob((20.0, 50.0), 30), Blob((40.0, 50.0), 30)])
        assert pin.centroid == (30.0, 50.0)

    def test_single_blob_loses_track(self):
        img = render_pins((60, 60), [(30, 30)], 4)
        with pytest.raises(TrackingLossError, match="frame-7"):
            track_frame(img, REFERENCE_COEFFICIENTS, frame="frame-7")

    def test_small_noise_blobs_do_not_count(self):
        with pytest.raises(TrackingLossError):
            combine_pins([Blob((1.0, 1.0), 3), Blob((5.0, 5.0), 50)])

    def test_label_order_symmetry(self):
        a, b = Blob((10.0, 12.0), 40), Blob((30.0, 22.0), 41)
        assert combine_pins([a, b]) == combine_pins([b, a])

    def test_composed_oracle(self):
        shape = (240, 320)
        pins = [(140.2, 101.5), (171.8, 108.9)]
        img = render_pins(shape, pins, 4.0, blue=220, background=10)
        areas, centroids = zip(*(disk_oracle(shape, cx, cy, 4.0) for cx, cy in pins))
        cx = (centroids[0][0] + centroids[1][0]) / 2 - (shape[1] - 1) / 2
        cy = (centroids[0][1] + centroids[1][1]) / 2 - (shape[0] - 1) / 2
        expected = pixel_to_world(PixelObservation(cx, cy, sum(areas) / 2), REFERENCE_COEFFICIENTS)
        got = track_frame(img, REFERENCE_COEFFICIENTS)
        np.testing.assert_allclose(got, expected, atol=1e-6)

    def test_observe_principal_point(self):
        img = render_pins((50, 50), [(10, 10), (20, 10)], 3)
        obs = observe_frame(img, principal_point=(0.0, 0.0))
        assert obs.x_px == pytest.approx(15.0) and obs.y_px == pytest.approx(10.0)


def test_directory_batch(tmp_path):
    frames = [[(40, 30), (60, 30)], [(50, 40), (70, 45)], [(20, 20), (30, 25)]]
    for k, pins in enumerate(frames):
        img = render_pins((80, 100), pins, 4)
        save_frame(img, tmp_path / f"f{k:03d}.png" if k != 1 else tmp_path / f"f{k:03d}.ppm")
    (tmp_path / "notes.txt").write_text("ignored")
    out = track_directory(tmp_path, REFERENCE_COEFFICIENTS)
    assert out.shape == (3, 3)
    for k, pins in enumerate(frames):
        img = load_frame(tmp_path / (f"f{k:03d}.ppm" if k == 1 else f"f{k:03d}.png"))
        np.testing.assert_array_equal(img, render_pins((80, 100), pins, 4))
        np.testing.assert_allclose(out[k], track_frame(img, REFERENCE_COEFFICIENTS))
