import numpy as np
import pytest

from oneseg import NlccConfig, ScalarField, extract_features, fcc_loss
from oneseg.features import features_backward, features_forward
from oneseg.phantom import PhantomConfig, sample_anatomy
from oneseg import windows as W


def _phantom_image(seed=0, dims=(32, 32, 1)):
    cfg = PhantomConfig(dims=dims, num_classes=3)
    anatomy = sample_anatomy(np.random.default_rng(seed), cfg)
    return anatomy.base_image


class TestAdjoints:
    """The filter bank relies on exact adjoints; verify <Ax, y> == <x, A'y>."""

    @pytest.mark.parametrize("shape", [(7, 5, 3), (9, 8, 1), (6, 1, 1)])
    def test_box_sum_adjoint(self, rng, shape):
        x = rng.standard_normal(shape)
        y = rng.standard_normal(shape)
        for lo, hi in [(-3, 4), (-1, 1), (0, 1)]:
            lhs = (W.box_sum(x, lo, hi) * y).sum()
            rhs = (x * W.box_sum_adjoint(y, lo, hi)).sum()
            assert abs(lhs - rhs) < 1e-9

    @pytest.mark.parametrize("sigma", [1.0, 2.0, 4.0])
    def test_gaussian_adjoint(self, rng, sigma):
        x = rng.standard_normal((9, 7, 4))
        y = rng.standard_normal((9, 7, 4))
        lhs = (W.gaussian_clamped(x, sigma) * y).sum()
        rhs = (x * W.gaussian_clamped_adjoint(y, sigma)).sum()
        assert abs(lhs - rhs) < 1e-9

    def test_stencil_adjoints(self, rng):
        x = rng.standard_normal((8, 6, 3))
        y = rng.standard_normal((8, 6, 3))
        for ax in range(3):
            lhs = (W.central_diff(x, ax) * y).sum()
            rhs = (x * W.central_diff_adjoint(y, ax)).sum()
            assert abs(lhs - rhs) < 1e-9
        lhs = (W.laplacian(x) * y).sum()
        rhs = (x * W.laplacian_adjoint(y)).sum()
        assert abs(lhs - rhs) < 1e-9


class TestExtractFeatures:
    def test_channel_count_and_dims(self, rng):
        img = ScalarField(rng.standard_normal((12, 10, 1)))
        stack = extract_features(img)
        assert stack.dims == img.dims
        assert stack.num_channels == 9

    def test_intensity_shift_invariance(self):
        img = _phantom_image()
        a = features_forward(img)[0]
        b = features_forward(img + 7.5)[0]
        assert np.abs(a - b).max() < 1e-5

    def test_positive_scale_invariance(self):
        img = _phantom_image()
        a = features_forward(img)[0]
        b = features_forward(3.0 * img)[0]
        assert np.abs(a - b).max() < 1e-5

    def test_constant_image_gives_zero_channels(self):
        img = ScalarField(np.full((16, 16, 1), 4.2))
        stack = extract_features(img)
        assert np.abs(stack.data).max() < 1e-5

    def test_determinism_across_runs(self, rng):
        img = rng.standard_normal((14, 12, 1))
        a = features_forward(img)[0]
        b = features_forward(img.copy())[0]
        assert np.array_equal(a, b)

    def test_backward_matches_finite_differences(self, rng):
        img = rng.standard_normal((8, 7, 1))
        feats, cache = features_forward(img)
        gout = rng.standard_normal(feats.shape)
        grad = features_backward(cache, gout)
        h = 1e-6
        worst = 0.0
        for _ in range(15):
            i = tuple(rng.integers(0, s) for s in img.shape)
            hi = img.copy()
            lo = img.copy()
            hi[i] += h
            lo[i] -= h
            fd = (
                (features_forward(hi)[0] * gout).sum()
                - (features_forward(lo)[0] * gout).sum()
            ) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / max(abs(fd), 1e-8))
        assert worst < 1e-4


# frozen from the seeded run that also satisfies the < -0.8 bound
FCC_REMAP_GOLDEN = -0.9370186987265358


class TestFccLoss:
    def test_self_loss_is_minus_one(self):
        img = _phantom_image(seed=1)
        stack = extract_features(ScalarField(img))
        assert abs(fcc_loss(stack, stack, NlccConfig()) + 1.0) < 1e-6

    def test_style_remap_keeps_content_similarity(self):
        # same content, squared intensities: features should stay aligned
        img = _phantom_image(seed=2) + 0.2  # keep positive for monotone x^2
        fa = extract_features(ScalarField(img))
        fb = extract_features(ScalarField(img * img))
        value = fcc_loss(fa, fb, NlccConfig())
        assert value < -0.8
        # golden pin of the seeded value
        assert abs(value - FCC_REMAP_GOLDEN) < 1e-9

    def test_independent_noise_features_weakly_correlated(self):
        r1, r2 = np.random.default_rng(41), np.random.default_rng(42)
        fa = extract_features(ScalarField(r1.standard_normal((32, 32, 1))))
        fb = extract_features(ScalarField(r2.standard_normal((32, 32, 1))))
        assert fcc_loss(fa, fb, NlccConfig()) > -0.2

    def test_content_discrimination_beats_different_content(self):
        # same anatomy under a monotone remap vs an entirely different anatomy
        cfg = PhantomConfig(dims=(32, 32, 1), num_classes=3)
        base = sample_anatomy(np.random.default_rng(3), cfg).base_image
        remapped = np.power(np.clip(base, 0.0, 1.0) + 0.1, 2.0)
        other = sample_anatomy(np.random.default_rng(9), cfg).base_image
        f_base = extract_features(ScalarField(base))
        same_content = -fcc_loss(f_base, extract_features(ScalarField(remapped)), NlccConfig())
        diff_content = -fcc_loss(f_base, extract_features(ScalarField(other)), NlccConfig())
        assert same_content > diff_content

    def test_channel_mismatch_rejected(self, rng):
        from oneseg import FeatureStack

        fa = FeatureStack(rng.standard_normal((6, 6, 1, 9)))
        fb = FeatureStack(rng.standard_normal((6, 6, 1, 3)))
        with pytest.raises(ValueError, match="stacks disagree"):
            fcc_loss(fa, fb, NlccConfig())

