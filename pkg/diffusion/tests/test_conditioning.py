import numpy as np
from django.test import SimpleTestCase

from difashion.exceptions import ConfigError, ContractError
from diffusion.conditioning import (
    MUTUAL_HIDDEN,
    ConditionBundle,
    MaskFlags,
    history_condition,
    init_mutual_encoder,
    mix_mutual,
    mutual_condition,
    null_condition,
    sample_mask,
)
from diffusion.guidance import BRANCH_MASKS, GuidanceScales, compose_cfg
from engine.gradcheck import gradient_check
from engine.rng import Rng
from engine.tensor import Tensor, mse

SHAPE = (3, 4, 4)


def constant(value, shape=SHAPE):
    return Tensor(np.full(shape, float(value)))


def sample_encoder(mlp=False, seed=0):
    """Create a mutual encoder, passing the average through by default"""
    return init_mutual_encoder(Rng(seed), mlp=mlp)


class MutualConditionTests(SimpleTestCase):
    def test_average_stage(self):
        """Test co-items 0, 3 and 6 average to 3 before the MLP"""
        out = mutual_condition([constant(0), constant(3), constant(6)], sample_encoder())

        np.testing.assert_allclose(out.data, 3.0)

    def test_single_co_item(self):
        """Test a single co-item passes through the average unchanged"""
        item = Tensor(Rng(1).normal(SHAPE))
        out = mutual_condition([item], sample_encoder())

        np.testing.assert_array_equal(out.data, item.data)

    def test_hidden_width(self):
        """Test the encoder MLP has 256 hidden units"""
        encoder = sample_encoder(mlp=True)

        self.assertEqual(MUTUAL_HIDDEN, 256)
        self.assertEqual(encoder["fc1.weight"].shape, (256, 3, 1, 1))
        self.assertEqual(encoder["fc2.weight"].shape, (3, 256, 1, 1))

    def test_mlp_acts_per_position(self):
        """Test the MLP maps equal pixels to equal outputs and keeps the shape"""
        encoder = sample_encoder(mlp=True)
        out = mutual_condition([constant(0.4), constant(-0.2)], encoder)

        self.assertEqual(out.shape, SHAPE)
        np.testing.assert_allclose(out.data, out.data[:, :1, :1] * np.ones(SHAPE))

    def test_permutation_invariant(self):
        """Test the co-item order does not change the condition"""
        rng = Rng(2)
        items = [Tensor(rng.normal(SHAPE)) for _ in range(3)]
        encoder = sample_encoder(mlp=True)
        forward = mutual_condition(items, encoder).data
        reverse = mutual_condition(items[::-1], encoder).data

        np.testing.assert_allclose(forward, reverse, rtol=1e-12, atol=1e-14)

    def test_empty_co_items(self):
        """Test an empty co-item list must use the null condition instead"""
        with self.assertRaises(ContractError):
            mutual_condition([], sample_encoder())

    def test_gradient_wrt_encoder(self):
        """Test encoder gradients match finite differences"""
        rng = Rng(3)
        encoder = init_mutual_encoder(rng, mlp=True, hidden=8)
        items = [Tensor(rng.normal((1, 3, 3, 3))) for _ in range(3)]
        target = Tensor(rng.normal((1, 3, 3, 3)))
        error = gradient_check(
            lambda: mse(mutual_condition(items, encoder), target),
            list(encoder.tensors.values()),
        )

        self.assertLess(error, 1e-3)


class MixMutualTests(SimpleTestCase):
    def test_mixing_ratio(self):
        """Test eta 0.1 mixes a unit image with a zero condition to 0.9"""
        np.testing.assert_allclose(mix_mutual(constant(1), constant(0), 0.1).data, 0.9)

    def test_degenerate_ratios(self):
        """Test eta 0 and 1 return exactly the image and the condition"""
        rng = Rng(4)
        image, condition = Tensor(rng.normal(SHAPE)), Tensor(rng.normal(SHAPE))

        np.testing.assert_array_equal(mix_mutual(image, condition, 0.0).data, image.data)
        np.testing.assert_array_equal(mix_mutual(image, condition, 1.0).data, condition.data)

    def test_affine(self):
        """Test scaling both inputs scales the mix"""
        rng = Rng(5)
        image, condition = rng.normal(SHAPE), rng.normal(SHAPE)
        scaled = mix_mutual(Tensor(2.5 * image), Tensor(2.5 * condition), 0.3).data
        plain = mix_mutual(Tensor(image), Tensor(condition), 0.3).data

        np.testing.assert_allclose(scaled, 2.5 * plain)

    def test_eta_out_of_range(self):
        """Test eta outside [0, 1] is a config error"""
        with self.assertRaises(ConfigError):
            mix_mutual(constant(1), constant(0), 1.5)


class HistoryConditionTests(SimpleTestCase):
    def test_mean(self):
        """Test images valued 0.2 and 0.8 average to 0.5"""
        out, masked = history_condition([np.full(SHAPE, 0.2), np.full(SHAPE, 0.8)], SHAPE)

        np.testing.assert_allclose(out.data, 0.5)
        self.assertFalse(masked)

    def test_single_image(self):
        """Test one history image is its own condition"""
        image = Rng(6).normal(SHAPE)
        out, _ = history_condition([image], SHAPE)

        np.testing.assert_array_equal(out.data, image)

    def test_empty_history(self):
        """Test an empty history falls back to zeros and reports masked"""
        out, masked = history_condition([], SHAPE)

        np.testing.assert_array_equal(out.data, np.zeros(SHAPE))
        self.assertTrue(masked)

    def test_mixed_shapes(self):
        """Test images of different shapes are a contract error"""
        with self.assertRaises(ContractError):
            history_condition([np.zeros(SHAPE), np.zeros((3, 2, 2))], SHAPE)


class SampleMaskTests(SimpleTestCase):
    def test_two_stage_frequencies(self):
        """Test 10^5 draws match the joint-then-independent closed forms"""
        rng = Rng(7)
        draws = [sample_mask(rng) for _ in range(100_000)]
        joint = np.mean([flags.mutual and flags.history for flags in draws])
        category = np.mean([flags.category for flags in draws])

        self.assertAlmostEqual(joint, 0.3 + 0.7 * 0.04, delta=0.01)
        self.assertAlmostEqual(category, 0.7 * 0.2, delta=0.01)

    def test_zero_ratios(self):
        """Test zero ratios never mask anything"""
        rng = Rng(8)

        for _ in range(1000):
            self.assertEqual(sample_mask(rng, 0.0, 0.0), MaskFlags())

    def test_deterministic(self):
        """Test the same seed draws the same masks"""
        first, second = Rng(9), Rng(9)
        first = [sample_mask(first) for _ in range(50)]
        second = [sample_mask(second) for _ in range(50)]

        self.assertEqual(first, second)

    def test_ratio_out_of_range(self):
        """Test ratios outside [0, 1] are config errors"""
        with self.assertRaises(ConfigError):
            sample_mask(Rng(0), 1.2, 0.2)


class NullConditionTests(SimpleTestCase):
    def test_null_forms(self):
        """Test null mutual and history are zeros and the null category is reserved"""
        mutual = null_condition("mutual", SHAPE)
        history = null_condition("history", SHAPE)

        np.testing.assert_array_equal(mutual.data, np.zeros(SHAPE))
        self.assertEqual(mutual.shape, history.shape)
        self.assertNotIn(null_condition("category"), range(4))

    def test_unknown_kind(self):
        """Test an unknown condition kind is refused"""
        with self.assertRaises(ContractError):
            null_condition("style", SHAPE)

    def test_bundle_masking(self):
        """Test masking a bundle swaps in the null payloads"""
        bundle = ConditionBundle(category_id=2, mutual=constant(0.5), history=constant(-0.5))
        masked = bundle.masked(BRANCH_MASKS[0])
        masked.clean()

        self.assertEqual(masked.category_id, 4)
        np.testing.assert_array_equal(masked.mutual.data, 0.0)
        np.testing.assert_array_equal(masked.history.data, 0.0)
        self.assertEqual(bundle.masked(BRANCH_MASKS[3]).category_id, 2)

    def test_bundle_clean_rejects_leaks(self):
        """Test a masked flag with a non-null payload is a contract error"""
        bundle = ConditionBundle(
            category_id=1,
            mutual=constant(0.5),
            history=constant(0.0),
            flags=MaskFlags(mutual=True),
        )
        with self.assertRaises(ContractError):
            bundle.clean()


class ComposeCfgTests(SimpleTestCase):
    def test_direct_substitution(self):
        """Test constants 0, 1, 2, 3 at scales (2, 2, 2) compose to 6"""
        out = compose_cfg(constant(0), constant(1), constant(2), constant(3), GuidanceScales(2, 2, 2))

        np.testing.assert_allclose(out, 6.0)

    def test_telescoping_and_fixed_point(self):
        """Test unit scales return the full branch and equal inputs are fixed points"""
        rng = Rng(10)
        unit = GuidanceScales(1.0, 1.0, 1.0)
        for _ in range(1000):
            branches = [rng.normal(SHAPE) for _ in range(4)]
            scales = GuidanceScales(*rng.uniform(0.0, 15.0, size=3))

            np.testing.assert_array_equal(compose_cfg(*branches, unit), branches[3])
            np.testing.assert_array_equal(compose_cfg(*[branches[0]] * 4, scales), branches[0])

    def test_independence_at_zero_scale(self):
        """Test zero scales cut off the corresponding branches exactly"""
        rng = Rng(11)
        none, t, tm, tmh = (rng.normal(SHAPE) for _ in range(4))
        other = rng.normal(SHAPE)

        no_history = GuidanceScales(12.0, 4.0, 0.0)
        np.testing.assert_array_equal(
            compose_cfg(none, t, tm, tmh, no_history), compose_cfg(none, t, tm, other, no_history)
        )
        category_only = GuidanceScales(12.0, 0.0, 0.0)
        np.testing.assert_array_equal(
            compose_cfg(none, t, tm, tmh, category_only), compose_cfg(none, t, other, other, category_only)
        )

    def test_linear(self):
        """Test composition is linear in the branch predictions"""
        rng = Rng(12)
        first = [rng.normal(SHAPE) for _ in range(4)]
        second = [rng.normal(SHAPE) for _ in range(4)]
        scales = GuidanceScales()
        combined = compose_cfg(*[a + 2.0 * b for a, b in zip(first, second)], scales)

        np.testing.assert_allclose(
            combined, compose_cfg(*first, scales) + 2.0 * compose_cfg(*second, scales), rtol=1e-10, atol=1e-10
        )

    def test_shape_mismatch(self):
        """Test branches of different shapes are a contract error"""
        with self.assertRaises(ContractError):
            compose_cfg(constant(0), constant(0), constant(0), constant(0, (3, 2, 2)), GuidanceScales())

    def test_negative_scale(self):
        """Test negative or infinite scales are config errors"""
        for scales in (GuidanceScales(-1.0, 4.0, 4.0), GuidanceScales(12.0, float("inf"), 4.0)):
            with self.assertRaises(ConfigError):
                scales.clean()
