"""
Unit tests for the differentiable core: gradients, guarded primitives and ADAM.
"""

import numpy as np
import pytest
import torch

from services.act.core.exceptions import StructuralError
from services.act.engine.diffcore import (
    AdamOptimizer,
    AdamState,
    adam_step,
    evaluate_with_gradients,
    finite_difference_check,
    log_sigmoid,
    row_mean,
    safe_div,
    safe_log,
    squared_norm,
)


@pytest.mark.unit
class TestEvaluateWithGradients:
    def test_sum_of_squares(self):
        """Gradient of sum(x^2) is 2x."""
        # Arrange
        x = np.array([1.0, -2.0, 3.0])

        # Act
        value, grads = evaluate_with_gradients(squared_norm, {"x": x})

        # Assert
        assert value == pytest.approx(14.0)
        np.testing.assert_allclose(grads["x"], 2 * x)

    def test_mean_of_ones(self):
        value, grads = evaluate_with_gradients(lambda x: row_mean(x).mean(), {"x": np.ones((2, 2))})
        assert value == 1.0
        np.testing.assert_array_equal(grads["x"], np.full((2, 2), 0.25))

    def test_unused_input_gets_zero_gradient(self):
        _, grads = evaluate_with_gradients(lambda x, y: x.sum(), {"x": np.ones(2), "y": np.ones((2, 2))})
        np.testing.assert_array_equal(grads["y"], np.zeros((2, 2)))

    def test_non_scalar_output_is_rejected(self):
        with pytest.raises(StructuralError):
            evaluate_with_gradients(lambda x: x * 2, {"x": np.ones(3)})

    def test_shape_mismatch_is_structural_error(self):
        with pytest.raises(StructuralError):
            evaluate_with_gradients(lambda a, b: (a @ b).sum(), {"a": np.ones((2, 3)), "b": np.ones((2, 3))})


@pytest.mark.unit
class TestFiniteDifferences:
    def test_log_sigmoid_matmul_matches(self):
        """Analytic and central-difference gradients agree for a small network."""
        rng = np.random.default_rng(0)
        inputs = {"w": rng.normal(size=(3, 2)), "x": rng.normal(size=(4, 3))}

        error = finite_difference_check(lambda w, x: -log_sigmoid((x @ w).sum(dim=1)).mean(), inputs)

        assert error < 1e-6

    def test_invalid_step(self):
        with pytest.raises(ValueError):
            finite_difference_check(lambda x: x.sum(), {"x": np.ones(2)}, h=0.0)


@pytest.mark.unit
class TestGuardedPrimitives:
    def test_safe_log_is_finite_at_zero(self):
        assert torch.isfinite(safe_log(torch.zeros(1, dtype=torch.float64))).all()

    def test_safe_div_by_zero(self):
        out = safe_div(torch.ones(1, dtype=torch.float64), torch.zeros(1, dtype=torch.float64))
        assert torch.isfinite(out).all()

    def test_log_sigmoid_saturation(self):
        out = log_sigmoid(torch.tensor([-1000.0, 1000.0], dtype=torch.float64))
        assert out[0] == pytest.approx(-1000.0)
        assert out[1] == pytest.approx(0.0)


@pytest.mark.unit
class TestAdam:
    def test_first_step_moves_by_lr_times_sign(self):
        """With bias correction the first update is lr * g / (|g| + eps)."""
        params = {"w": np.array([1.0, 1.0, 1.0])}
        grads = {"w": np.array([0.5, -2.0, 1e-3])}

        updated, state = adam_step(params, grads, AdamState(lr=0.1))

        np.testing.assert_allclose(updated["w"], [0.9, 1.1, 0.9], atol=1e-5)
        assert state.step == 1

    def test_zero_gradient_is_identity(self):
        params = {"w": np.array([1.0, 2.0]), "b": np.array([3.0])}
        _, state = adam_step(params, {"w": np.array([1.0, 1.0]), "b": np.array([1.0])}, AdamState(lr=0.1))

        updated, new_state = adam_step(params, {"w": np.zeros(2), "b": np.array([1.0])}, state)

        np.testing.assert_array_equal(updated["w"], params["w"])
        np.testing.assert_array_equal(new_state.first_moment["w"], state.first_moment["w"])
        np.testing.assert_array_equal(new_state.second_moment["w"], state.second_moment["w"])

    def test_matches_numpy_recurrence_with_skipped_steps(self):
        """Bias-corrected ADAM written out by hand; a zero gradient leaves that parameter's clock alone."""
        rng = np.random.default_rng(3)
        lr, beta1, beta2, eps = 0.01, 0.9, 0.999, 1e-8
        start = {"w": rng.normal(size=4), "b": rng.normal(size=1)}
        schedule = []
        for k in range(6):
            schedule.append({
                "w": np.zeros(4) if k == 2 else rng.normal(size=4),
                "b": np.zeros(1) if k in (0, 4) else rng.normal(size=1),
            })

        expected = {name: value.copy() for name, value in start.items()}
        m = {name: np.zeros_like(value) for name, value in start.items()}
        v = {name: np.zeros_like(value) for name, value in start.items()}
        t = {name: 0 for name in start}
        for grads in schedule:
            for name, g in grads.items():
                if not np.any(g):
                    continue
                t[name] += 1
                m[name] = beta1 * m[name] + (1 - beta1) * g
                v[name] = beta2 * v[name] + (1 - beta2) * g * g
                m_hat = m[name] / (1 - beta1 ** t[name])
                v_hat = v[name] / (1 - beta2 ** t[name])
                expected[name] = expected[name] - lr * m_hat / (np.sqrt(v_hat) + eps)

        params, state = start, AdamState(lr=lr)
        for grads in schedule:
            params, state = adam_step(params, grads, state)

        for name in start:
            np.testing.assert_allclose(params[name], expected[name], rtol=0, atol=1e-12)
            np.testing.assert_allclose(state.first_moment[name], m[name], rtol=0, atol=1e-15)
            np.testing.assert_allclose(state.second_moment[name], v[name], rtol=0, atol=1e-15)
        assert state.param_steps == {"w": 5, "b": 4}
        assert state.step == 6

    def test_shape_mismatch(self):
        with pytest.raises(StructuralError):
            adam_step({"w": np.ones(3)}, {"w": np.ones(2)}, AdamState(lr=0.1))

    def test_missing_gradient(self):
        with pytest.raises(StructuralError):
            adam_step({"w": np.ones(3)}, {}, AdamState(lr=0.1))

    def test_non_positive_lr(self):
        with pytest.raises(ValueError):
            AdamState(lr=0.0)

    def test_optimizer_skips_zero_gradients(self):
        a = torch.nn.Parameter(torch.ones(2, dtype=torch.float64))
        b = torch.nn.Parameter(torch.ones(2, dtype=torch.float64))
        optimizer = AdamOptimizer([a, b], lr=0.1)
        a.grad = torch.zeros(2, dtype=torch.float64)
        b.grad = torch.ones(2, dtype=torch.float64)

        optimizer.step()

        assert torch.equal(a.detach(), torch.ones(2, dtype=torch.float64))
        assert torch.all(b.detach() < 1.0)
        assert optimizer.steps == 1
