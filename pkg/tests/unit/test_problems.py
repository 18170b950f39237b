# tests/unit/test_problems.py
"""
Unit tests for the manufactured problem bank
"""

import math

import numpy as np
import pytest

from shared.exceptions import ParameterDomainError
from services.solver.problems import (
    PROBLEMS, example_51, example_52, get_problem, memory_image, pde_residual, spatial_energy_constant,
)

ALPHAS = [0.2, 0.5, 0.8]


@pytest.fixture
def points():
    rng = np.random.default_rng(11)
    return rng.uniform(0.0, 1.0, size=(2, 40))


class TestEnergyConstants:
    """C = ||grad w||^2 frozen against closed forms"""

    def test_sine_profile(self):
        expected = 2.0 * (math.pi ** 2 / 6 + 0.25) * (1.0 / 6 - 1.0 / (4 * math.pi ** 2))
        assert example_51(0.5).energy_constant == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.535646, abs=5e-6)

    def test_polynomial_profile(self):
        assert example_52(0.5).energy_constant == pytest.approx(1.0 / 45.0, rel=1e-13)

    def test_quadrature_order(self):
        grad = lambda x, y: np.stack([np.ones_like(x), 2 * y], axis=-1)
        assert spatial_energy_constant(grad, order=5) == pytest.approx(1.0 + 4.0 / 3.0, rel=1e-14)

    def test_grad_norm_sq_scaling(self):
        spec = example_52(0.6)
        assert spec.grad_norm_sq(0.5) == pytest.approx(0.5 ** 1.2 / 45.0, rel=1e-12)


class TestExactSolutions:

    @pytest.mark.parametrize("factory", [example_51, example_52])
    def test_vanishes_at_initial_time_and_boundary(self, factory):
        spec = factory(0.4)
        s = np.linspace(0.0, 1.0, 7)
        assert np.all(spec.exact(s, s, 0.0) == 0.0)
        np.testing.assert_allclose(spec.exact(np.zeros(7), s, 0.7), 0.0, atol=1e-15)
        np.testing.assert_allclose(spec.exact(s, np.ones(7), 0.7), 0.0, atol=1e-15)

    @pytest.mark.parametrize("factory", [example_51, example_52])
    def test_gradient_by_finite_differences(self, factory, points):
        spec = factory(0.5)
        x, y = points
        eps = 1e-6
        g = spec.exact_grad(x, y, 0.8)
        gx = (spec.exact(x + eps, y, 0.8) - spec.exact(x - eps, y, 0.8)) / (2 * eps)
        gy = (spec.exact(x, y + eps, 0.8) - spec.exact(x, y - eps, 0.8)) / (2 * eps)
        np.testing.assert_allclose(g[..., 0], gx, atol=1e-8)
        np.testing.assert_allclose(g[..., 1], gy, atol=1e-8)

    @pytest.mark.parametrize("factory", [example_51, example_52])
    def test_hessian_by_finite_differences(self, factory, points):
        spec = factory(0.5)
        x, y = points
        eps = 1e-6
        H = spec.profile_hessian(x, y)
        dgx = (spec.profile_grad(x + eps, y) - spec.profile_grad(x - eps, y)) / (2 * eps)
        dgy = (spec.profile_grad(x, y + eps) - spec.profile_grad(x, y - eps)) / (2 * eps)
        np.testing.assert_allclose(H[..., 0, :], dgx, atol=1e-7)
        np.testing.assert_allclose(H[..., 1, :], dgy, atol=1e-7)


class TestForcingConsistency:
    """The hand-expanded forcing agrees with the operator applied to the exact solution"""

    @pytest.mark.parametrize("alpha", ALPHAS)
    @pytest.mark.parametrize("factory", [example_51, example_52])
    def test_pde_residual_vanishes(self, factory, alpha, points):
        spec = factory(alpha)
        x, y = points
        for t in (1e-3, 0.3, 1.0):
            assert np.max(np.abs(pde_residual(spec, x, y, t))) <= 1e-10

    def test_residual_detects_wrong_forcing(self, points):
        spec = example_51(0.5)
        broken = type(spec)(**{**spec.__dict__, "forcing": lambda x, y, t: spec.forcing(x, y, t) + 1e-3})
        x, y = points
        assert np.max(np.abs(pde_residual(broken, x, y, 0.5))) > 1e-4

    def test_residual_rejects_initial_time(self, points):
        with pytest.raises(ParameterDomainError):
            pde_residual(example_51(0.5), points[0], points[1], 0.0)

    def test_polynomial_memory_image_at_centre(self):
        spec = example_52(0.5)
        value = memory_image(spec.memory.terms[0], spec, np.array(0.5), np.array(0.5))
        assert float(value) == pytest.approx(105.0 / 64.0, rel=1e-14)

    def test_sine_memory_image_is_negative_laplacian(self, points):
        spec = example_51(0.5)
        x, y = points
        lap = np.trace(spec.profile_hessian(x, y), axis1=-2, axis2=-1)
        np.testing.assert_allclose(memory_image(spec.memory.terms[0], spec, x, y), -lap, atol=1e-14)


class TestRegistry:

    def test_problem_ids(self):
        assert set(PROBLEMS) == {"kirchhoff-sin", "kirchhoff-poly"}
        assert get_problem("kirchhoff-poly", 0.3).id == "kirchhoff-poly"

    def test_unknown_problem(self):
        with pytest.raises(ParameterDomainError) as exc_info:
            get_problem("heat", 0.5)
        assert exc_info.value.details["field"] == "problem"

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_rejects_alpha(self, alpha):
        with pytest.raises(ParameterDomainError):
            example_51(alpha)

    def test_kirchhoff_coefficient(self):
        spec = example_51(0.5)
        assert spec.M_fn(2.0) == 3.0 and spec.M_prime(2.0) == 1.0


class TestRegularity:
    """Near t = 0 increments behave like |t - tau|^alpha"""

    @pytest.mark.parametrize("alpha", ALPHAS)
    @pytest.mark.parametrize("factory", [example_51, example_52])
    def test_holder_exponent_at_origin(self, factory, alpha):
        spec = factory(alpha)
        s = np.linspace(0.0, 1.0, 21)
        x, y = np.meshgrid(s, s)
        tau = 1e-10

        def increment(h):
            return np.max(np.abs(spec.exact(x, y, tau + h) - spec.exact(x, y, tau)))

        slope = math.log(increment(1e-3) / increment(1e-5)) / math.log(1e2)
        assert slope == pytest.approx(alpha, abs=0.1)
