import numpy as np
import pytest

from oneseg import (
    DimensionMismatchError,
    DisplacementField,
    LabelMap,
    ProbMask,
    ScalarField,
    warp_labels,
    warp_prob_channels,
    warp_scalar,
)

from conftest import naive_nn_warp_labels, naive_warp_linear, random_labels


class TestContainers:
    def test_scalar_field_2d_promotes_to_depth_one(self):
        f = ScalarField(np.zeros((4, 5)))
        assert f.dims == (4, 5, 1)

    def test_scalar_field_rejects_nan(self):
        data = np.zeros((3, 3, 1))
        data[1, 1, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            ScalarField(data)

    def test_scalar_field_immutable(self):
        f = ScalarField(np.zeros((3, 3, 1)))
        with pytest.raises(ValueError):
            f.data[0, 0, 0] = 1.0

    def test_label_map_range_check(self):
        with pytest.raises(ValueError, match=r"\[0, 2\)"):
            LabelMap(np.full((2, 2, 1), 5, dtype=np.int32), 2)

    def test_label_map_needs_two_classes(self):
        with pytest.raises(ValueError, match="K >= 2"):
            LabelMap(np.zeros((2, 2, 1), dtype=np.int32), 1)

    def test_prob_mask_sum_check(self):
        bad = np.full((2, 2, 1, 2), 0.6)
        with pytest.raises(ValueError, match="sum to 1"):
            ProbMask(bad)

    def test_prob_mask_roundtrip_argmax(self, rng):
        labels = random_labels(rng, (4, 4, 2), 3)
        lm = LabelMap(labels, 3)
        pm = ProbMask(lm.one_hot())
        assert np.array_equal(pm.argmax_labels().labels, labels)

    def test_displacement_zeros(self):
        d = DisplacementField.zeros((3, 4, 2))
        assert d.dims == (3, 4, 2)
        assert d.vectors.shape == (3, 4, 2, 3)


class TestWarpScalar:
    def test_zero_displacement_is_identity_bitwise(self, rng):
        img = ScalarField(rng.standard_normal((6, 5, 4)))
        out = warp_scalar(img, DisplacementField.zeros(img.dims))
        assert np.array_equal(out.data, img.data)

    def test_1d_shift_with_edge_clamp(self):
        # values [0,1,2,3] along x, displacement +1 => [1,2,3,3]
        img = ScalarField(np.arange(4.0).reshape(4, 1, 1))
        vec = np.zeros((4, 1, 1, 3))
        vec[..., 0] = 1.0
        out = warp_scalar(img, DisplacementField(vec))
        assert np.allclose(out.data.ravel(), [1.0, 2.0, 3.0, 3.0])

    def test_constant_image_stays_constant(self, rng):
        img = ScalarField(np.full((5, 4, 3), 2.5))
        vec = rng.uniform(-3, 3, size=(5, 4, 3, 3))
        out = warp_scalar(img, DisplacementField(vec))
        assert np.allclose(out.data, 2.5, atol=1e-12)

    def test_dims_mismatch_names_both(self):
        img = ScalarField(np.zeros((3, 3, 1)))
        disp = DisplacementField.zeros((4, 4, 1))
        with pytest.raises(DimensionMismatchError) as exc:
            warp_scalar(img, disp)
        assert exc.value.dims_a == (3, 3, 1)
        assert exc.value.dims_b == (4, 4, 1)

    def test_rejects_unknown_mode(self):
        img = ScalarField(np.zeros((3, 3, 1)))
        with pytest.raises(ValueError, match="mode"):
            warp_scalar(img, DisplacementField.zeros(img.dims), mode="cubic")

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_naive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        img = ScalarField(rng.standard_normal((7, 6, 4)))
        vec = rng.uniform(-2.5, 2.5, size=(7, 6, 4, 3))
        out = warp_scalar(img, DisplacementField(vec))
        expected = naive_warp_linear(img.data, vec)
        assert np.allclose(out.data, expected, atol=1e-12)

    def test_preserves_min_max_bounds(self, rng):
        img = ScalarField(rng.standard_normal((8, 8, 1)))
        vec = rng.uniform(-5, 5, size=(8, 8, 1, 3))
        out = warp_scalar(img, DisplacementField(vec))
        assert out.data.min() >= img.data.min() - 1e-12
        assert out.data.max() <= img.data.max() + 1e-12


class TestWarpLabels:
    def test_zero_displacement_identity(self, rng):
        lm = LabelMap(random_labels(rng, (5, 5, 3), 4), 4)
        out = warp_labels(lm, DisplacementField.zeros(lm.dims))
        assert np.array_equal(out.labels, lm.labels)

    def test_single_class_constant(self, rng):
        lm = LabelMap(np.ones((4, 4, 1), dtype=np.int32), 2)
        vec = rng.uniform(-2, 2, size=(4, 4, 1, 3))
        out = warp_labels(lm, DisplacementField(vec))
        assert np.all(out.labels == 1)

    def test_integer_shift_matches_hand_result(self):
        # two regions along x shifted by +2 with edge clamp
        labels = np.array([0, 0, 0, 1, 1, 1], dtype=np.int32).reshape(6, 1, 1)
        lm = LabelMap(labels, 2)
        vec = np.zeros((6, 1, 1, 3))
        vec[..., 0] = 2.0
        out = warp_labels(lm, DisplacementField(vec))
        assert np.array_equal(out.labels.ravel(), [0, 1, 1, 1, 1, 1])

    @pytest.mark.parametrize("seed", [0, 3])
    def test_agrees_with_nearest_neighbor_on_integer_disp(self, seed):
        rng = np.random.default_rng(seed)
        labels = random_labels(rng, (6, 5, 4), 3)
        lm = LabelMap(labels, 3)
        vec = rng.integers(-3, 4, size=(6, 5, 4, 3)).astype(np.float64)
        out = warp_labels(lm, DisplacementField(vec))
        expected = naive_nn_warp_labels(labels, vec)
        assert np.array_equal(out.labels, expected)

    def test_label_set_inclusion(self, rng):
        labels = random_labels(rng, (6, 6, 1), 4)
        labels[labels == 2] = 1  # drop class 2 from the input
        lm = LabelMap(labels, 4)
        vec = rng.uniform(-2, 2, size=(6, 6, 1, 3))
        out = warp_labels(lm, DisplacementField(vec))
        assert set(np.unique(out.labels)) <= set(np.unique(labels))

    def test_soft_channels_are_valid_prob_mask(self, rng):
        lm = LabelMap(random_labels(rng, (5, 5, 2), 3), 3)
        vec = rng.uniform(-1.5, 1.5, size=(5, 5, 2, 3))
        pm = warp_prob_channels(lm, DisplacementField(vec))
        assert np.abs(pm.probs.sum(axis=-1) - 1.0).max() <= 1e-6
