import numpy as np
import pytest

from skeletor.autodiff import Tensor
from skeletor.errors import NumericalError, ShapeError
from skeletor.optim import AdamState, adam_step, xavier_init


class TestXavierInit:
    def test_bound_for_square_shape(self):
        # fan_in + fan_out = 6 gives a = 1.
        w = xavier_init((3, 3), np.random.default_rng(0))
        assert np.abs(w).max() <= 1.0

    def test_same_seed_identical(self):
        a = xavier_init((8, 4), np.random.default_rng(42))
        b = xavier_init((8, 4), np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_empirical_variance_matches_uniform_law(self):
        # Var of U(-a, a) is a^2/3 = 2 / (fan_in + fan_out).
        w = xavier_init((500, 200), np.random.default_rng(1))
        expected = 2.0 / 700.0
        assert abs(w.var() - expected) / expected < 0.1

    def test_rejects_non_2d(self):
        with pytest.raises(ShapeError):
            xavier_init((3, 3, 3), np.random.default_rng(0))


class TestAdam:
    def test_zero_gradients_leave_parameters_unchanged(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        state = AdamState(learning_rate=0.1)
        adam_step(state, {"p": p}, {"p": np.zeros(2)})
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert state.step == 1

    def test_first_step_is_signed_learning_rate(self):
        # With bias correction, step 1 moves by lr * g/(|g| + eps) ~ lr * sign(g).
        p = Tensor(np.array([0.0, 0.0]), requires_grad=True)
        state = AdamState(learning_rate=1e-3)
        adam_step(state, {"p": p}, {"p": np.array([0.5, -2.0])})
        np.testing.assert_allclose(p.data, [-1e-3, 1e-3], rtol=1e-6)

    def test_missing_gradient_treated_as_zero(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        adam_step(AdamState(), {"p": p}, {})
        np.testing.assert_array_equal(p.data, [3.0])

    def test_two_runs_bitwise_identical(self):
        def run():
            rng = np.random.default_rng(5)
            p = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
            state = AdamState(learning_rate=1e-2)
            for _ in range(25):
                adam_step(state, {"p": p}, {"p": p.data * 0.3 - 1.0})
            return p.data

        np.testing.assert_array_equal(run(), run())

    def test_nan_gradient_names_parameter(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        with pytest.raises(NumericalError, match="embed.weight"):
            adam_step(AdamState(), {"embed.weight": p}, {"embed.weight": np.array([np.nan])})

    def test_shape_mismatch(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ShapeError):
            adam_step(AdamState(), {"p": p}, {"p": np.zeros(4)})
