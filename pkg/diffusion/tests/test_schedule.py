import numpy as np
from django.test import SimpleTestCase

from difashion.exceptions import ConfigError, ContractError
from diffusion.schedule import linear_schedule, posterior_step, q_sample, scaled_betas
from engine.rng import Rng
from engine.tensor import Tensor


def sample_schedule(**params):
    """Create a two-step schedule with beta = 0.5 throughout"""
    defaults = {"steps": 2, "beta_start": 0.5, "beta_end": 0.5}
    defaults.update(params)
    return linear_schedule(**defaults)


class LinearScheduleTests(SimpleTestCase):
    def test_hand_product(self):
        """Test T=2 with beta 0.5 gives alphas 0.5 and alpha bars 0.5, 0.25"""
        schedule = sample_schedule()

        np.testing.assert_array_equal(schedule.alphas, [0.5, 0.5])
        np.testing.assert_array_equal(schedule.alpha_bars, [0.5, 0.25])

    def test_single_step(self):
        """Test a single step of beta 0.1 keeps 0.9 of the signal power"""
        schedule = linear_schedule(1, 0.1, 0.1)

        self.assertAlmostEqual(schedule.alpha_bar(1), 0.9, places=15)

    def test_default_schedule_reaches_noise(self):
        """Test the default 1000-step schedule ends with alpha bar below 5e-5"""
        schedule = linear_schedule()

        self.assertEqual(schedule.steps, 1000)
        self.assertLess(schedule.alpha_bar(1000), 5e-5)

    def test_endpoints_and_recurrence(self):
        """Test betas hit both endpoints and alpha bars follow the product recurrence"""
        schedule = linear_schedule(50, 1e-3, 0.05)

        self.assertEqual(schedule.betas[0], 1e-3)
        self.assertAlmostEqual(schedule.betas[-1], 0.05, places=15)
        np.testing.assert_array_equal(schedule.alphas, 1.0 - schedule.betas)
        for t in range(1, 50):
            self.assertEqual(
                schedule.alpha_bars[t], schedule.alpha_bars[t - 1] * schedule.alphas[t]
            )
        self.assertTrue(np.all(np.diff(schedule.alpha_bars) < 0))

    def test_bounds(self):
        """Test out-of-range step counts and betas are config errors"""
        for params in ({"steps": 0}, {"beta_start": 0.0}, {"beta_end": 1.0}, {"beta_start": 0.6}):
            with self.assertRaises(ConfigError):
                sample_schedule(**params)

    def test_header_round_trip(self):
        """Test a schedule rebuilt from its header has identical arrays"""
        schedule = linear_schedule(30, 1e-3, 0.1)
        rebuilt = type(schedule).from_header(schedule.to_header())

        np.testing.assert_array_equal(rebuilt.alpha_bars, schedule.alpha_bars)

    def test_scaled_betas(self):
        """Test short chains get stretched betas capped at 0.5"""
        self.assertEqual(scaled_betas(1000), (1e-4, 0.02))
        start, end = scaled_betas(200)
        self.assertAlmostEqual(start, 5e-4)
        self.assertAlmostEqual(end, 0.1)
        self.assertEqual(scaled_betas(5)[1], 0.5)
        self.assertLess(linear_schedule(200, *scaled_betas(200)).alpha_bar(200), 1e-4)


class ForwardProcessTests(SimpleTestCase):
    def test_zero_noise(self):
        """Test zero noise scales x0 by the square root of alpha bar"""
        schedule = sample_schedule()
        x0 = Tensor(np.arange(6.0).reshape(2, 3))
        x_t = q_sample(x0, 2, Tensor(np.zeros((2, 3))), schedule)

        np.testing.assert_allclose(x_t.data, 0.5 * x0.data)

    def test_unit_noise_on_zero_image(self):
        """Test x0 = 0 and unit noise at alpha bar 0.25 gives sqrt(0.75)"""
        x_t = q_sample(Tensor(np.zeros((3, 4))), 2, Tensor(np.ones((3, 4))), sample_schedule())

        np.testing.assert_allclose(x_t.data, np.sqrt(0.75))

    def test_per_row_steps(self):
        """Test one timestep per row applies each row's own coefficients"""
        schedule = sample_schedule()
        x_t = q_sample(Tensor(np.ones((2, 3))), [1, 2], Tensor(np.zeros((2, 3))), schedule)

        np.testing.assert_allclose(x_t.data[0], np.sqrt(0.5))
        np.testing.assert_allclose(x_t.data[1], 0.5)

    def test_step_out_of_range(self):
        """Test timesteps outside [1, T] are contract errors"""
        for t in (0, 3):
            with self.assertRaises(ContractError):
                q_sample(Tensor(np.zeros(2)), t, Tensor(np.zeros(2)), sample_schedule())

    def test_converges_to_standard_normal(self):
        """Test 10^4 samples at t = T have zero mean and unit spread per element"""
        schedule = linear_schedule()
        rng = Rng(3)
        x0 = Tensor(np.ones((10_000, 3)))
        x_t = q_sample(x0, schedule.steps, Tensor(rng.normal((10_000, 3))), schedule)

        self.assertTrue(np.all(np.abs(x_t.data.mean(axis=0)) < 0.05))
        self.assertTrue(np.all(np.abs(x_t.data.std(axis=0) - 1.0) < 0.05))


class PosteriorStepTests(SimpleTestCase):
    def test_zero_prediction_mean(self):
        """Test zero predicted noise divides x_t by the square root of alpha"""
        schedule = sample_schedule()
        x_t = Tensor(np.full(4, 2.0))
        out = posterior_step(x_t, Tensor(np.zeros(4)), 1, schedule)

        np.testing.assert_allclose(out.data, 2.0 / np.sqrt(0.5))

    def test_closed_form_mean(self):
        """Test x_t = 0, alpha 0.5, alpha bar 0.25, unit noise gives -0.8165"""
        out = posterior_step(
            Tensor(np.zeros(3)),
            Tensor(np.ones(3)),
            2,
            sample_schedule(),
            noise=Tensor(np.zeros(3)),
        )

        np.testing.assert_allclose(out.data, -(0.5 / np.sqrt(0.75)) / np.sqrt(0.5))
        self.assertAlmostEqual(out.data[0], -0.8165, places=4)

    def test_noise_scaled_by_beta(self):
        """Test the added noise has standard deviation sqrt(beta_t)"""
        schedule = sample_schedule()
        out = posterior_step(
            Tensor(np.zeros(2)), Tensor(np.zeros(2)), 2, schedule, noise=Tensor(np.ones(2))
        )

        np.testing.assert_allclose(out.data, np.sqrt(0.5))

    def test_last_step_is_deterministic(self):
        """Test t = 1 ignores noise and needs none"""
        schedule = sample_schedule()
        x_t, eps = Tensor(np.ones(3)), Tensor(np.full(3, 0.2))
        plain = posterior_step(x_t, eps, 1, schedule)
        noisy = posterior_step(x_t, eps, 1, schedule, noise=Tensor(np.full(3, 9.0)))

        np.testing.assert_array_equal(plain.data, noisy.data)

    def test_missing_noise(self):
        """Test steps above 1 refuse to run without noise"""
        with self.assertRaises(ContractError):
            posterior_step(Tensor(np.ones(3)), Tensor(np.ones(3)), 2, sample_schedule())

    def test_true_noise_round_trip(self):
        """Test the reverse chain fed the true noise returns to x0 on average"""
        schedule = linear_schedule(100, 1e-3, 0.1)
        rng = Rng(5)
        x0 = 0.7
        x = Tensor(rng.normal((1000, 1)))
        for t in range(schedule.steps, 0, -1):
            alpha_bar = schedule.alpha_bar(t)
            eps = (x.data - np.sqrt(alpha_bar) * x0) / np.sqrt(1.0 - alpha_bar)
            noise = Tensor(rng.normal((1000, 1))) if t > 1 else None
            x = posterior_step(x, Tensor(eps), t, schedule, noise)

        self.assertLess(abs(x.data.mean() - x0), 0.1)
