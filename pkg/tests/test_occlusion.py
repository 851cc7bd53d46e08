import numpy as np
import pytest

from scenelayout import EmptyMaskError, MaskSet, adjacency_pairs, normalize_crop, occlusion_flags


def rect_mask(shape, r0, r1, c0, c1):
    m = np.zeros(shape, dtype=bool)
    m[r0:r1, c0:c1] = True
    return m


def brute_force_adjacent(a, b, radius):
    """Oracle: a pixel-level check that some pixel of a and some pixel of b are
    within the square-dilation reach (Chebyshev distance <= radius)."""
    ra, ca = np.nonzero(a)
    rb, cb = np.nonzero(b)
    for i in range(len(ra)):
        d = np.maximum(np.abs(rb - ra[i]), np.abs(cb - ca[i]))
        if (d <= radius).any():
            return True
    return False


class TestAdjacency:
    def test_touching_rectangles(self):
        shape = (32, 32)
        masks = MaskSet(masks=(rect_mask(shape, 4, 10, 4, 10),
                               rect_mask(shape, 4, 10, 10, 16)),
                        per_object_mean_depth=(2.0, 3.0))
        assert adjacency_pairs(masks) == {(0, 1)}

    def test_distant_rectangles(self):
        # nearest pixels are 11 apart (columns 9 and 20)
        shape = (48, 48)
        masks = MaskSet(masks=(rect_mask(shape, 4, 10, 4, 10),
                               rect_mask(shape, 4, 10, 20, 26)),
                        per_object_mean_depth=(2.0, 3.0))
        assert adjacency_pairs(masks, dilation_radius=3) == set()
        assert adjacency_pairs(masks, dilation_radius=10) == set()
        assert adjacency_pairs(masks, dilation_radius=11) == {(0, 1)}

    def test_chain_against_bruteforce(self):
        shape = (40, 60)
        a = rect_mask(shape, 10, 20, 5, 15)
        b = rect_mask(shape, 10, 20, 15, 25)
        c = rect_mask(shape, 10, 20, 27, 37)
        masks = MaskSet(masks=(a, b, c), per_object_mean_depth=(1.0, 2.0, 3.0))
        pairs = adjacency_pairs(masks, dilation_radius=3)
        expected = set()
        for i, mi in enumerate((a, b, c)):
            for j in range(i + 1, 3):
                if brute_force_adjacent(mi, (a, b, c)[j], 3):
                    expected.add((i, j))
        assert pairs == expected == {(0, 1), (1, 2)}

    def test_empty_mask_yields_no_pairs(self):
        shape = (16, 16)
        masks = MaskSet(masks=(np.zeros(shape, dtype=bool),
                               rect_mask(shape, 2, 6, 2, 6)),
                        per_object_mean_depth=(0.0, 1.0))
        assert adjacency_pairs(masks) == set()

    def test_requires_two_masks(self):
        masks = MaskSet(masks=(rect_mask((8, 8), 1, 3, 1, 3),),
                        per_object_mean_depth=(1.0,))
        with pytest.raises(ValueError):
            adjacency_pairs(masks)


class TestOcclusionFlags:
    def test_pair_deeper_is_occluded(self):
        shape = (16, 16)
        masks = MaskSet(masks=(rect_mask(shape, 2, 8, 2, 8),
                               rect_mask(shape, 2, 8, 8, 14)),
                        per_object_mean_depth=(2.0, 3.0))
        assert occlusion_flags(masks, {(0, 1)}) == [False, True]

    def test_isolated_object_unoccluded(self):
        shape = (16, 16)
        masks = MaskSet(masks=(rect_mask(shape, 2, 6, 2, 6),
                               rect_mask(shape, 10, 14, 10, 14)),
                        per_object_mean_depth=(5.0, 1.0))
        assert occlusion_flags(masks, set()) == [False, False]

    def test_chain(self):
        shape = (16, 48)
        masks = MaskSet(masks=(rect_mask(shape, 2, 8, 2, 14),
                               rect_mask(shape, 2, 8, 14, 26),
                               rect_mask(shape, 2, 8, 26, 38)),
                        per_object_mean_depth=(1.0, 2.0, 3.0))
        pairs = {(0, 1), (1, 2)}
        # pairwise rule applied by brute force: 0<1 marks 1; 1<2 marks 2
        assert occlusion_flags(masks, pairs) == [False, True, True]

    def test_equal_depths_mark_neither(self):
        shape = (16, 16)
        masks = MaskSet(masks=(rect_mask(shape, 2, 8, 2, 8),
                               rect_mask(shape, 2, 8, 8, 14)),
                        per_object_mean_depth=(2.0, 2.0 * (1 + 1e-9)))
        assert occlusion_flags(masks, {(0, 1)}) == [False, False]

    def test_symmetric_in_pair_orientation(self):
        shape = (16, 16)
        masks = MaskSet(masks=(rect_mask(shape, 2, 8, 2, 8),
                               rect_mask(shape, 2, 8, 8, 14)),
                        per_object_mean_depth=(4.0, 3.0))
        assert occlusion_flags(masks, {(0, 1)}) == occlusion_flags(masks, {(1, 0)})


class TestNormalizeCrop:
    def test_documented_example(self):
        mask = rect_mask((512, 512), 100, 150, 50, 150)  # 100 wide x 50 tall
        scale, offset = normalize_crop(mask, (512, 512), alpha=0.6)
        assert scale == pytest.approx(0.6 * 512 / 100)
        assert scale == pytest.approx(3.072)

    def test_fixed_point(self):
        # bbox already centered with its larger side at alpha * max(w, h)
        w = h = 500
        side = int(0.6 * 500)  # 300
        c0 = (w - side) // 2
        mask = rect_mask((h, w), c0, c0 + side, c0, c0 + side)
        scale, offset = normalize_crop(mask, (w, h), alpha=0.6)
        assert scale == pytest.approx(1.0)
        assert np.allclose(offset, 0.0, atol=1e-9)

    def test_square_mask_centered_output(self):
        mask = rect_mask((512, 512), 20, 60, 300, 340)
        scale, offset = normalize_crop(mask, (512, 512), alpha=0.6)
        center = np.array([320.0, 40.0])  # (x, y) of the mask bbox center
        new_center = scale * center + offset
        assert np.allclose(new_center, [256.0, 256.0], atol=1e-9)

    def test_idempotent(self):
        # Applying the similarity analytically and recomputing yields scale 1.
        from scenelayout.occlusion import normalize_crop_bbox
        rng = np.random.default_rng(2)
        for _ in range(20):
            w, h = rng.integers(100, 800, size=2)
            c0, r0 = rng.integers(0, 40, size=2)
            bw, bh = rng.integers(5, 50, size=2)
            scale, offset = normalize_crop_bbox(c0, c0 + bw, r0, r0 + bh, (w, h))
            # transform the continuous bbox and recompute
            x0 = scale * c0 + offset[0]
            x1 = scale * (c0 + bw + 1) + offset[0]
            y0 = scale * r0 + offset[1]
            y1 = scale * (r0 + bh + 1) + offset[1]
            scale2, offset2 = normalize_crop_bbox(x0, x1 - 1, y0, y1 - 1, (w, h))
            assert scale2 == pytest.approx(1.0, abs=1e-9)
            assert np.allclose(offset2, 0.0, atol=1e-6)

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMaskError):
            normalize_crop(np.zeros((8, 8), dtype=bool), (8, 8))


class TestMaskSetValidation:
    def test_mismatched_shapes_rejected(self):
        with pytest.raises(ValueError):
            MaskSet(masks=(np.zeros((4, 4), dtype=bool), np.zeros((5, 4), dtype=bool)),
                    per_object_mean_depth=(1.0, 1.0))

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(ValueError):
            MaskSet(masks=(rect_mask((4, 4), 0, 2, 0, 2),),
                    per_object_mean_depth=(0.0,))
