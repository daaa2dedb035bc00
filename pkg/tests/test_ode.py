"""Tests for the fixed-step ODE integrator and motion evolution."""

from __future__ import annotations

import math

import pytest
import torch
from torch import nn

from motion_evolve.exceptions import NumericalDivergenceError
from motion_evolve.models import OdeConfig
from motion_evolve.motion import MotionDynamics
from motion_evolve.ode import evolve_field, integrate


class LinearDynamics(nn.Module):
    """dT/dt = rate * T."""

    def __init__(self, rate: float) -> None:
        super().__init__()
        self.rate = nn.Parameter(torch.tensor(rate, dtype=torch.float64))

    def forward(self, t: float, field: torch.Tensor) -> torch.Tensor:
        return self.rate * field


class ZeroDynamics(nn.Module):
    """dT/dt = 0."""

    def forward(self, t: float, field: torch.Tensor) -> torch.Tensor:
        return torch.zeros_like(field)


def _exp_error(steps: int, solver: str) -> float:
    (final,) = integrate(
        lambda t, s: (s[0],),
        (torch.ones(1, dtype=torch.float64),),
        0.0,
        1.0,
        steps,
        solver,
    )
    return abs(final.item() - math.e)


class TestIntegrate:
    """Tests for integrate."""

    @pytest.mark.parametrize(("solver", "low", "high"), [("euler", 0.5, 1.5), ("rk4", 3.5, 4.5)])
    def test_convergence_order(self, solver: str, low: float, high: float) -> None:
        """Test that halving the step shrinks the error at the solver's order."""
        order = math.log2(_exp_error(4, solver) / _exp_error(8, solver))
        assert low <= order <= high

    def test_time_argument_passed(self) -> None:
        """Test that dy/dt = t integrates to t**2 / 2 exactly under RK4."""
        (final,) = integrate(
            lambda t, s: (torch.full_like(s[0], t),),
            (torch.zeros(1, dtype=torch.float64),),
            0.0,
            1.0,
            3,
            "rk4",
        )
        assert final.item() == pytest.approx(0.5, abs=1e-12)

    def test_backward_in_time(self) -> None:
        """Test that integrating from 1 to 0 undoes the forward growth."""
        (final,) = integrate(
            lambda t, s: (s[0],),
            (torch.full((1,), math.e, dtype=torch.float64),),
            1.0,
            0.0,
            16,
            "rk4",
        )
        assert final.item() == pytest.approx(1.0, abs=1e-6)

    def test_divergence_reports_step(self) -> None:
        """Test that an overflowing state raises with the 1-based step index."""
        with pytest.raises(NumericalDivergenceError) as info:
            integrate(
                lambda t, s: (1e200 * s[0],),
                (torch.ones(1, dtype=torch.float64),),
                0.0,
                1.0,
                2,
                "euler",
            )
        assert info.value.step == 2


class TestEvolveField:
    """Tests for evolve_field."""

    def test_linear_dynamics_rk4(self) -> None:
        """Test that dT/dt = T with four RK4 steps gives e * T(0)."""
        initial = torch.rand(2, 4, 4, 2, dtype=torch.float64) * 2 - 1
        final = evolve_field(initial, LinearDynamics(1.0), OdeConfig(solver="rk4", steps=4))
        assert torch.allclose(final, math.e * initial, atol=1e-4, rtol=0)

    def test_zero_dynamics_is_identity(self) -> None:
        """Test that vanishing dynamics return the initial field."""
        initial = torch.randn(1, 3, 5, 2)
        final = evolve_field(initial, ZeroDynamics(), OdeConfig(solver="euler", steps=3))
        assert torch.equal(final, initial)

    def test_non_finite_initial_field(self) -> None:
        """Test that a NaN initial field raises at step 0."""
        initial = torch.zeros(1, 2, 2, 2)
        initial[0, 0, 0, 0] = float("inf")
        with pytest.raises(NumericalDivergenceError) as info:
            evolve_field(initial, ZeroDynamics(), OdeConfig())
        assert info.value.step == 0

    def test_adjoint_forward_matches_backprop(self) -> None:
        """Test that both gradient modes integrate to the same field."""
        dynamics = MotionDynamics(hidden=6).double()
        initial = 0.2 * torch.randn(2, 4, 4, 2, dtype=torch.float64)
        direct = evolve_field(initial, dynamics, OdeConfig(steps=3))
        adjoint = evolve_field(initial, dynamics, OdeConfig(steps=3, gradient_mode="adjoint"))
        assert torch.allclose(direct, adjoint, atol=1e-12)

    def test_adjoint_gradients_linear(self) -> None:
        """Test adjoint gradients against the closed form for dT/dt = rT."""
        dynamics = LinearDynamics(0.5)
        initial = torch.rand(1, 3, 3, 2, dtype=torch.float64, requires_grad=True)
        config = OdeConfig(solver="rk4", steps=8, gradient_mode="adjoint")
        evolve_field(initial, dynamics, config).sum().backward()
        assert initial.grad is not None
        assert dynamics.rate.grad is not None
        growth = math.exp(0.5)
        assert torch.allclose(initial.grad, torch.full_like(initial, growth), rtol=1e-4)
        expected_rate = initial.detach().sum().item() * growth
        assert dynamics.rate.grad.item() == pytest.approx(expected_rate, rel=1e-4)

    def test_adjoint_gradients_match_backprop(self) -> None:
        """Test that adjoint and backprop gradients agree on learned dynamics."""
        dynamics = MotionDynamics(hidden=6).double()
        initial = 0.2 * torch.randn(1, 4, 4, 2, dtype=torch.float64)
        weights = torch.randn(1, 4, 4, 2, dtype=torch.float64)

        grads = {}
        for mode in ("backprop", "adjoint"):
            start = initial.clone().requires_grad_(True)
            dynamics.zero_grad()
            config = OdeConfig(solver="rk4", steps=8, gradient_mode=mode)
            (evolve_field(start, dynamics, config) * weights).sum().backward()
            assert start.grad is not None
            grads[mode] = [start.grad.clone()] + [
                p.grad.clone() for p in dynamics.parameters() if p.grad is not None
            ]

        assert len(grads["backprop"]) == len(grads["adjoint"])
        for direct, adjoint in zip(grads["backprop"], grads["adjoint"], strict=True):
            assert torch.allclose(direct, adjoint, rtol=1e-3, atol=1e-6)

    def test_backprop_gradcheck(self) -> None:
        """Test backprop gradients through the solver against finite differences."""
        dynamics = MotionDynamics(hidden=4).double()
        initial = 0.1 * torch.randn(1, 3, 3, 2, dtype=torch.float64)
        initial.requires_grad_(True)
        config = OdeConfig(solver="rk4", steps=2)
        assert torch.autograd.gradcheck(
            lambda x: evolve_field(x, dynamics, config), (initial,), eps=1e-5, rtol=1e-4
        )


class TestMotionDynamics:
    """Tests for MotionDynamics."""

    def test_shape_preserved(self) -> None:
        """Test that the derivative has the field's shape."""
        field = torch.randn(2, 5, 7, 2)
        assert MotionDynamics(hidden=8)(0.3, field).shape == field.shape

    def test_depends_on_time(self) -> None:
        """Test that the time channel changes the derivative."""
        dynamics = MotionDynamics(hidden=8)
        field = torch.zeros(1, 4, 4, 2)
        assert not torch.equal(dynamics(0.0, field), dynamics(1.0, field))
