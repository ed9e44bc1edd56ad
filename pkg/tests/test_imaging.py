"""Corruption and augmentation checks: moment oracles for the noise models,
closed-form kernel/footprint checks for the blurs, colorsys as the HLS
reference, and label/pixel consistency sweeps for the geometric warps."""
import colorsys

import numpy as np
import pytest

from vptrack import imaging
from vptrack.frames import AnnotatedFrame
from vptrack.imaging import corruptions as C


def flat_image(value=128, h=64, w=64, c=3):
    return np.full((h, w, c), value, dtype=np.uint8)


def textured_image(rng, h=64, w=64):
    return rng.integers(30, 220, size=(h, w, 3)).astype(np.uint8)


class TestNoise:
    def test_severity_zero_is_identity(self, rng):
        img = textured_image(rng)
        for kind in imaging.KINDS:
            out = imaging.apply_corruption(img, imaging.CorruptionSpec(kind, 0, seed=3))
            np.testing.assert_array_equal(out, img)
            assert out is not img

    def test_gaussian_clamps_at_white(self, rng):
        out = imaging.gaussian_noise(flat_image(255), 5, rng)
        assert out.dtype == np.uint8 and out.max() <= 255

    def test_gaussian_moments(self):
        # severity 3 -> sigma 0.08; interior gray level avoids clipping
        img = flat_image(128, 320, 320)
        out = imaging.gaussian_noise(img, 3, np.random.default_rng(7))
        delta = (out.astype(np.float64) - img) / 255.0
        assert abs(delta.mean()) < 0.01
        assert abs(delta.std() - 0.08) < 0.008

    def test_shot_black_stays_black(self, rng):
        out = imaging.shot_noise(flat_image(0), 3, rng)
        assert out.max() == 0

    def test_shot_large_lambda_limit(self):
        img = flat_image(128, 128, 128)
        out = C.shot_noise(img, 1, np.random.default_rng(3), lam=1e4)
        mad = np.abs(out.astype(np.float64) - 128).mean()
        assert mad < 2.0

    def test_shot_unbiased(self):
        # severity 4 -> lambda 60; mean over many draws returns the input level
        img = flat_image(128, 50, 50, 1)
        acc = np.zeros(img.shape, dtype=np.float64)
        n = 200
        for i in range(n):
            acc += imaging.shot_noise(img, 4, np.random.default_rng(1000 + i))
        assert abs(acc.mean() / n - 128) < 2.0

    def test_impulse_zero_alpha_identity(self, rng):
        img = textured_image(rng)
        out = imaging.impulse_noise(img, 1, rng, alpha=0.0)
        np.testing.assert_array_equal(out, img)

    def test_impulse_full_alteration(self, rng):
        out = imaging.impulse_noise(flat_image(128, 200, 200), 5, rng, alpha=0.2)
        assert set(np.unique(out)) <= {0, 255}
        frac_salt = (out == 255).mean()
        assert abs(frac_salt - 0.5) < 0.02

    def test_impulse_fraction_and_balance(self):
        img = flat_image(128, 400, 250, 1)  # 1e5 px
        out = imaging.impulse_noise(img, 1, np.random.default_rng(11), alpha=0.1)
        altered = (out != 128)
        assert abs(altered.mean() - 0.1) < 0.01
        assert abs((out == 255).mean() - (out == 0).mean()) < 0.01

    def test_impulse_rejects_over_unity(self, rng):
        with pytest.raises(ValueError):
            imaging.impulse_noise(flat_image(), 5, rng, alpha=0.5)


class TestBlur:
    def test_disk_kernel_normalized_and_supported(self):
        for r in imaging.DEFOCUS_RADIUS:
            k = imaging.disk_kernel(r)
            assert abs(k.sum() - 1.0) < 1e-6
            yy, xx = np.meshgrid(*[np.arange(-r, r + 1)] * 2, indexing="ij")
            assert np.all(k[xx * xx + yy * yy > r * r] == 0)
            assert np.all(k[xx * xx + yy * yy <= r * r] > 0)

    def test_defocus_constant_fixed_point(self):
        img = flat_image(97)
        np.testing.assert_array_equal(imaging.defocus_blur(img, 3), img)

    def test_defocus_point_source_makes_disk(self):
        img = np.zeros((33, 33, 1), dtype=np.uint8)
        img[16, 16] = 255
        out = imaging.defocus_blur(img, 1)[:, :, 0]  # r = 2
        yy, xx = np.meshgrid(np.arange(33) - 16, np.arange(33) - 16, indexing="ij")
        inside = xx * xx + yy * yy <= 4
        assert len(np.unique(out[inside])) == 1 and out[inside][0] > 0
        assert np.all(out[~inside] == 0)

    def test_motion_kernel_normalized_taps(self):
        for r in imaging.MOTION_EXTENT:
            k = imaging.motion_kernel(r)
            assert abs(k.sum() - 1.0) < 1e-6
            # horizontal: one row of r+1 equal taps, centered
            mid = k.shape[0] // 2
            row = k[mid]
            assert (row > 0).sum() == r + 1
            np.testing.assert_allclose(row[row > 0], 1.0 / (r + 1))
            assert np.all(np.delete(k, mid, axis=0) == 0)
            np.testing.assert_allclose(k, k[::-1, ::-1])  # centered symmetry

    def test_motion_constant_fixed_point(self):
        img = flat_image(55)
        np.testing.assert_array_equal(imaging.motion_blur(img, 2), img)

    def test_motion_edge_ramp_span(self):
        img = np.zeros((16, 64, 1), dtype=np.uint8)
        img[:, 32:] = 255
        out = imaging.motion_blur(img, 1)[:, :, 0]  # r = 4, horizontal
        row = out[8].astype(int)
        ramp = np.sum((row > 0) & (row < 255))
        assert ramp == 4
        # centering: the half-intensity crossing stays at the edge
        cross = np.argmax(row >= 128)
        assert abs(cross - 32) <= 1

    def test_motion_blur_preserves_centroid(self):
        img = np.zeros((21, 21, 1), dtype=np.uint8)
        img[10, 10] = 255
        out = imaging.motion_blur(img, 1).astype(np.float64)[:, :, 0]
        xs = (out * np.arange(21)[None, :]).sum() / out.sum()
        assert abs(xs - 10) < 1e-9


class TestWeather:
    def test_snow_brightens(self, rng):
        img = textured_image(rng, 96, 96)
        out = imaging.snow(img, 3, np.random.default_rng(5))
        assert out.astype(np.float64).mean() > img.astype(np.float64).mean()

    def test_frost_never_darkens(self, rng):
        img = textured_image(rng, 80, 80)
        out = imaging.frost(img, 4, np.random.default_rng(5))
        assert np.all(out.astype(int) >= img.astype(int) - 1)  # rounding slack

    def test_frost_requires_templates(self, rng):
        with pytest.raises(ValueError):
            imaging.frost(flat_image(), 2, rng, templates=[])

    def test_bundled_templates_present(self):
        t = C._load_frost_templates()
        assert len(t) == 3
        for a in t:
            assert a.dtype == np.uint8

    def test_fog_weight_one_is_plasma(self):
        img = flat_image(40, 50, 70)
        out = imaging.fog(img, 2, np.random.default_rng(9), weight=1.0)
        plasma = imaging.diamond_square(7, np.random.default_rng(9))[:50, :70]
        want = np.clip(np.rint(plasma * 255.0), 0, 255).astype(np.uint8)
        np.testing.assert_array_equal(out[:, :, 0], want)
        np.testing.assert_array_equal(out[:, :, 1], want)

    def test_diamond_square_range_and_determinism(self):
        a = imaging.diamond_square(5, np.random.default_rng(3))
        b = imaging.diamond_square(5, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (33, 33)
        assert a.min() == 0.0 and a.max() == 1.0


class TestBrightness:
    def test_hls_matches_colorsys(self, rng):
        cols = rng.uniform(size=(200, 3))
        got = imaging.rgb_to_hls(cols)
        for i in range(200):
            want = colorsys.rgb_to_hls(*cols[i])
            np.testing.assert_allclose(got[i], want, atol=1e-12, err_msg=str(cols[i]))
        back = imaging.hls_to_rgb(got)
        np.testing.assert_allclose(back, cols, atol=1e-9)

    def test_hls_handles_grays(self):
        grays = np.stack([np.linspace(0, 1, 11)] * 3, axis=-1)
        hls = imaging.rgb_to_hls(grays)
        np.testing.assert_allclose(hls[:, 0], 0)
        np.testing.assert_allclose(hls[:, 2], 0)
        np.testing.assert_allclose(imaging.hls_to_rgb(hls), grays, atol=1e-12)

    def test_brightness_direction(self, rng):
        img = textured_image(rng)
        up = imaging.brightness(img, 3, sign=1)
        down = imaging.brightness(img, 3, sign=-1)
        assert up.astype(float).mean() > img.astype(float).mean()
        assert down.astype(float).mean() < img.astype(float).mean()

    def test_brightness_grayscale_path(self):
        img = flat_image(100, 8, 8, 1)
        out = imaging.brightness(img, 1, sign=1)  # +0.08 * 255 = 20.4
        assert np.all(out == 120)


class TestDispatch:
    @pytest.mark.parametrize("kind", imaging.KINDS)
    @pytest.mark.parametrize("severity", [1, 3, 5])
    def test_all_outputs_valid_and_deterministic(self, rng, kind, severity):
        img = textured_image(rng, 48, 40)
        spec = imaging.CorruptionSpec(kind, severity, seed=99)
        a = imaging.apply_corruption(img, spec)
        b = imaging.apply_corruption(img, spec)
        assert a.dtype == np.uint8 and a.shape == img.shape
        np.testing.assert_array_equal(a, b)

    def test_spec_json_roundtrip(self):
        spec = imaging.CorruptionSpec("fog", 4, seed=1234567)
        again = imaging.CorruptionSpec.from_json(spec.to_json())
        assert again == spec

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            imaging.CorruptionSpec("rain", 1)
        with pytest.raises(ValueError):
            imaging.CorruptionSpec("fog", 6)

    def test_corrupt_random_deterministic(self, rng):
        img = textured_image(rng, 32, 32)
        a, sa = imaging.corrupt_random(img, (1, 3), seed=42)
        b, sb = imaging.corrupt_random(img, (1, 3), seed=42)
        assert sa == sb
        np.testing.assert_array_equal(a, b)

    def test_corrupt_random_zero_range_identity(self, rng):
        img = textured_image(rng, 16, 16)
        out, spec = imaging.corrupt_random(img, (0, 0), seed=5)
        assert spec.severity == 0
        np.testing.assert_array_equal(out, img)

    def test_corrupt_random_kind_histogram(self):
        img = flat_image(128, 4, 4)
        gen = np.random.default_rng(0)
        counts = {k: 0 for k in imaging.KINDS}
        n = 4000
        for _ in range(n):
            _, spec = imaging.corrupt_random(img, (1, 1), rng=gen)
            counts[spec.kind] += 1
        for k, v in counts.items():
            assert abs(v / n - 1 / 9) < 0.03, (k, v)

    def test_corrupt_random_rejects_bad_input(self, rng):
        with pytest.raises(ValueError):
            imaging.corrupt_random(flat_image(), kinds=())
        with pytest.raises(ValueError):
            imaging.corrupt_random(flat_image(), severity_range=(2, 7))


def make_frame(rng, h=64, w=64, spread=6.0):
    img = rng.integers(0, 255, size=(h, w, 3)).astype(np.uint8)
    center = np.array([w / 2, h / 2])
    labels = center + rng.uniform(-spread, spread, (3, 2))
    return AnnotatedFrame(image=img, labels=labels, index=0, source="t")


class TestGeometricAugment:
    def test_hflip_edges_and_center(self, rng):
        f = make_frame(rng, 33, 41)
        f.labels[0] = [0.0, 5.0]
        f.labels[1] = [20.0, 7.0]  # center column of width 41
        out = imaging.hflip(f)
        assert out.labels[0][0] == 40.0
        assert out.labels[1][0] == 20.0

    def test_hflip_involution(self, rng):
        f = make_frame(rng)
        twice = imaging.hflip(imaging.hflip(f))
        np.testing.assert_array_equal(twice.image, f.image)
        np.testing.assert_allclose(twice.labels, f.labels)

    def test_rotate_zero_identity(self, rng):
        f = make_frame(rng)
        out = imaging.rotate(f, 0.0)
        np.testing.assert_allclose(out.labels, f.labels, atol=0.5)
        np.testing.assert_array_equal(out.image, f.image)

    def test_rotate_limit_enforced(self, rng):
        with pytest.raises(ValueError):
            imaging.rotate(make_frame(rng), 11.0)

    def test_rotate_90_matches_analytic(self, rng):
        f = make_frame(rng, 21, 21)
        f.labels[:] = [[15.0, 10.0], [10.0, 4.0], [6.0, 10.0]]
        out = imaging.rotate(f, 90.0, max_angle=90.0)
        # about center (10,10): (x,y) -> (cx - (y-cy), cy + (x-cx))
        want = np.stack([10.0 - (f.labels[:, 1] - 10.0), 10.0 + (f.labels[:, 0] - 10.0)], axis=1)
        np.testing.assert_allclose(out.labels, want, atol=0.5)

    def test_fiducial_tracks_rotation(self, rng):
        # paint a dot at a label, warp, re-detect at the mapped label
        for trial in range(5):
            f = make_frame(rng, 96, 96)
            f.image[:] = 30
            px = np.clip(np.round(f.labels[0]).astype(int), 2, 93)
            f.labels[0] = px.astype(float)
            f.image[px[1], px[0]] = 255
            out = imaging.rotate(f, float(rng.uniform(-10, 10)))
            my, mx = np.unravel_index(out.image[:, :, 0].argmax(), out.image.shape[:2])
            assert np.hypot(mx - out.labels[0][0], my - out.labels[0][1]) <= 1.0

    def test_fiducial_tracks_perspective(self, rng):
        for trial in range(5):
            f = make_frame(rng, 96, 96)
            f.image[:] = 30
            px = np.clip(np.round(f.labels[1]).astype(int), 4, 91)
            f.labels[1] = px.astype(float)
            f.image[px[1], px[0]] = 255
            off = rng.uniform(-0.05, 0.05, (4, 2)) * 96
            out = imaging.perspective(f, off)
            my, mx = np.unravel_index(out.image[:, :, 0].argmax(), out.image.shape[:2])
            assert np.hypot(mx - out.labels[1][0], my - out.labels[1][1]) <= 1.0

    def test_perspective_zero_identity(self, rng):
        f = make_frame(rng)
        out = imaging.perspective(f, np.zeros((4, 2)))
        np.testing.assert_allclose(out.labels, f.labels, atol=0.5)
        np.testing.assert_array_equal(out.image, f.image)

    def test_perspective_rejects_excess_jitter(self, rng):
        f = make_frame(rng, 50, 50)
        off = np.zeros((4, 2))
        off[0] = [10.0, 0.0]  # 20% of side
        with pytest.raises(ValueError):
            imaging.perspective(f, off)

    def test_degenerate_homography_rejected(self):
        src = np.array([[0, 0], [9, 0], [9, 9], [0, 9]], dtype=float)
        dst = np.array([[0, 0], [3, 3], [6, 6], [9, 9]], dtype=float)  # collinear
        with pytest.raises(ValueError):
            imaging.homography_from_corners(src, dst)

    def test_occlude_keeps_labels(self, rng):
        f = make_frame(rng)
        out = imaging.occlude(f, (5, 5, 10, 12), rng)
        np.testing.assert_array_equal(out.labels, f.labels)
        assert not np.array_equal(out.image[5:17, 5:15], f.image[5:17, 5:15])
        np.testing.assert_array_equal(out.image[:5], f.image[:5])

    def test_occlude_bounds_checked(self, rng):
        with pytest.raises(ValueError):
            imaging.occlude(make_frame(rng, 32, 32), (30, 30, 10, 10))

    def test_labels_leaving_frame_invalidate(self, rng):
        f = make_frame(rng, 64, 64)
        f.labels[0] = [2.0, 2.0]
        out = imaging.rotate(f, 10.0)
        # corner label swings out near the frame edge for this geometry
        assert out.valid == out.labels_in_bounds()


class TestRandomCrop:
    def test_translation_arithmetic(self, rng):
        f = make_frame(rng, 80, 80, spread=3.0)
        crops = imaging.random_crop_roi(f, n=5, size=32, margin=4, rng=rng)
        assert len(crops) == 5
        for c in crops:
            assert c.image.shape == (32, 32, 3)
            # recover offset from label shift and compare pixel content
            off = f.labels[0] - c.labels[0]
            np.testing.assert_allclose(f.labels - off, c.labels)
            oy, ox = int(round(off[1])), int(round(off[0]))
            np.testing.assert_array_equal(c.image, f.image[oy:oy + 32, ox:ox + 32])

    def test_containment_sweep(self):
        gen = np.random.default_rng(77)
        emitted = 0
        for _ in range(1000):
            h = w = 64
            img = np.zeros((h, w, 3), dtype=np.uint8)
            center = gen.uniform(20, 44, 2)
            labels = center + gen.uniform(-5, 5, (3, 2))
            f = AnnotatedFrame(image=img, labels=labels)
            for c in imaging.random_crop_roi(f, n=3, size=32, margin=4, rng=gen):
                emitted += 1
                assert np.all(c.labels >= 4 - 1e-9)
                assert np.all(c.labels <= 32 - 1 - 4 + 1e-9)
        assert emitted == 3000

    def test_no_window_emits_fewer_with_warning(self, rng, caplog):
        f = make_frame(rng, 64, 64)
        f.labels[:] = [[5.0, 32.0], [59.0, 32.0], [32.0, 32.0]]  # spread > size-2*margin
        with caplog.at_level("WARNING"):
            crops = imaging.random_crop_roi(f, n=5, size=32, margin=4, rng=rng)
        assert crops == []
        assert any("no valid" in r.message for r in caplog.records)

    def test_crop_larger_than_source_rejected(self, rng):
        with pytest.raises(ValueError):
            imaging.random_crop_roi(make_frame(rng, 32, 32), size=64, rng=rng)

    def test_augment_spec_roundtrip_and_dispatch(self, rng):
        f = make_frame(rng, 64, 64, spread=3.0)
        spec = imaging.AugmentSpec("rotation", seed=5)
        assert imaging.AugmentSpec.from_json(spec.to_json()) == spec
        a = imaging.apply_augment(f, spec)
        b = imaging.apply_augment(f, spec)
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_allclose(a.labels, b.labels)
        crops = imaging.apply_augment(f, imaging.AugmentSpec("random_crop", seed=1, crop_size=32))
        assert isinstance(crops, list) and len(crops) == 5
