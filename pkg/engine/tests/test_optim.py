import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from difashion.exceptions import CheckpointError, ConfigError, ContractError
from engine.container import read_tensors, write_tensors
from engine.optim import AdamState, adam_step, clip_grad_norm
from engine.rng import Rng
from engine.tensor import Tensor


def sample_params(**shapes):
    """Create named zero parameters"""
    defaults = {"w": (2, 3)}
    defaults.update(shapes)
    return {name: Tensor(np.zeros(shape), requires_grad=True) for name, shape in defaults.items()}


class AdamTests(SimpleTestCase):
    def test_first_step_closed_form(self):
        """Test the first Adam step with unit gradient moves by lr/(1+eps)"""
        params = sample_params()
        state = AdamState(lr=0.1)
        adam_step(params, {"w": np.ones((2, 3))}, state)

        np.testing.assert_allclose(params["w"].data, -0.1 / (1.0 + 1e-8), rtol=1e-12)
        self.assertEqual(state.step, 1)

    def test_zero_gradient_leaves_params(self):
        """Test a zero gradient does not move parameters"""
        params = sample_params()
        adam_step(params, {"w": np.zeros((2, 3))}, AdamState(lr=0.1))

        np.testing.assert_array_equal(params["w"].data, np.zeros((2, 3)))

    def test_two_steps_monotone(self):
        """Test two steps with the same gradient keep moving against its sign"""
        params = sample_params()
        state = AdamState(lr=0.01)
        grad = np.array([[1.0, -2.0, 0.5], [-0.1, 3.0, -4.0]])
        adam_step(params, {"w": grad}, state)
        first = params["w"].data.copy()
        adam_step(params, {"w": grad}, state)

        self.assertTrue(np.all(np.sign(first) == -np.sign(grad)))
        self.assertTrue(np.all(np.abs(params["w"].data) > np.abs(first)))

    def test_shape_mismatch(self):
        """Test a gradient of the wrong shape is refused"""
        with self.assertRaises(ContractError):
            adam_step(sample_params(), {"w": np.ones(6)}, AdamState())

    def test_learning_rate_must_be_positive(self):
        """Test a non-positive learning rate is a config error"""
        with self.assertRaises(ConfigError):
            AdamState(lr=0.0)

    def test_clip_grad_norm(self):
        """Test clipping rescales to the requested global norm"""
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped, norm = clip_grad_norm(grads, 1.0)

        self.assertAlmostEqual(norm, 5.0)
        self.assertAlmostEqual(float(np.sqrt(clipped["a"] ** 2 + clipped["b"] ** 2)), 1.0)


class ContainerTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "tensors.nt"

    def tearDown(self):
        self.tmp.cleanup()

    def test_bit_exact_round_trip(self):
        """Test tensors and header survive a write/read round trip bit for bit"""
        rng = Rng(0)
        tensors = {
            "conv.weight": rng.normal((4, 3, 3, 3)),
            "scalar": np.array(np.pi),
            "émbed": rng.normal((5,)),
        }
        write_tensors(self.path, tensors, {"step": 3})
        loaded, header = read_tensors(self.path)

        self.assertEqual(header, {"step": 3})
        self.assertEqual(list(loaded), list(tensors))
        for name, value in tensors.items():
            self.assertEqual(loaded[name].shape, value.shape)
            self.assertEqual(loaded[name].tobytes(), value.tobytes())

    def test_truncated_file(self):
        """Test a truncated container raises instead of returning partial state"""
        write_tensors(self.path, {"w": np.ones((10, 10))})
        payload = self.path.read_bytes()
        self.path.write_bytes(payload[:-16])

        with self.assertRaises(CheckpointError):
            read_tensors(self.path)

    def test_version_mismatch(self):
        """Test an unknown format version is reported as incompatible"""
        write_tensors(self.path, {"w": np.ones(2)})
        payload = bytearray(self.path.read_bytes())
        payload[4] = 99
        self.path.write_bytes(bytes(payload))

        with self.assertRaises(CheckpointError) as ctx:
            read_tensors(self.path)
        self.assertIn("format 99", str(ctx.exception))

    def test_no_temporary_left_behind(self):
        """Test the atomic write leaves only the final file"""
        write_tensors(self.path, {"w": np.ones(2)})

        self.assertEqual([p.name for p in self.path.parent.iterdir()], ["tensors.nt"])
