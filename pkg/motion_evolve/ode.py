"""Fixed-step ODE integration over t in [0, 1] with two gradient modes.

Integration runs on a uniform time grid through ``torchdiffeq``. ``backprop``
differentiates through the solver steps directly. ``adjoint`` stores only
the grid states and recovers gradients by integrating the augmented adjoint
system backwards in time with the same solver over the same grid.
"""

from __future__ import annotations

import logging
from collections.abc import Callable

import torch
from torch import nn
from torchdiffeq import odeint, odeint_adjoint

from .const import GRADIENT_ADJOINT
from .exceptions import NumericalDivergenceError
from .models import OdeConfig

_LOGGER = logging.getLogger(__name__)

State = tuple[torch.Tensor, ...]
Derivative = Callable[[float, State], State]


class _FloatTime(nn.Module):
    """Call dynamics with a Python float time, as the package dynamics expect."""

    def __init__(self, dynamics: nn.Module) -> None:
        super().__init__()
        self.dynamics = dynamics

    def forward(self, t: torch.Tensor, state: torch.Tensor) -> torch.Tensor:
        result: torch.Tensor = self.dynamics(float(t), state)
        return result


def _time_grid(t0: float, t1: float, steps: int, like: torch.Tensor) -> torch.Tensor:
    return torch.linspace(t0, t1, steps + 1, dtype=like.dtype, device=like.device)


def _check_trajectory(trajectory: State, grid: torch.Tensor) -> None:
    """Raise at the first grid state that is not finite; ``step`` is 1-based."""
    steps = grid.shape[0] - 1
    finite = torch.stack([part.flatten(1).isfinite().all(dim=1) for part in trajectory]).all(dim=0)
    for index in range(1, steps + 1):
        if not bool(finite[index]):
            raise NumericalDivergenceError(
                f"ODE state became non-finite at step {index} of {steps}", step=index
            )
        _LOGGER.debug("ODE step %d/%d reached t=%.4f", index, steps, float(grid[index]))


def integrate(
    func: Derivative,
    state: State,
    t0: float,
    t1: float,
    steps: int,
    solver: str,
) -> State:
    """Integrate a tuple-valued ODE from t0 to t1 with fixed steps.

    Raises:
        NumericalDivergenceError: If the state stops being finite; ``step`` is 1-based.
    """
    grid = _time_grid(t0, t1, steps, state[0])
    trajectory: State = odeint(lambda t, s: func(float(t), s), state, grid, method=solver)
    _check_trajectory(trajectory, grid)
    return tuple(part[-1] for part in trajectory)


def evolve_field(initial: torch.Tensor, dynamics: nn.Module, config: OdeConfig) -> torch.Tensor:
    """Integrate a deformation field through learned dynamics from t=0 to t=1.

    Args:
        initial: Field T(0), shape (B, h, w, 2).
        dynamics: Module called as ``dynamics(t, field)`` returning a field-shaped derivative.
        config: Solver, step count and gradient mode.

    Returns:
        Field T(1) of the same shape.

    Raises:
        NumericalDivergenceError: If an intermediate state is non-finite.
    """
    if not torch.isfinite(initial).all():
        raise NumericalDivergenceError("Initial field is non-finite", step=0)
    grid = _time_grid(0.0, 1.0, config.steps, initial)
    solve = odeint_adjoint if config.gradient_mode == GRADIENT_ADJOINT else odeint
    trajectory: torch.Tensor = solve(_FloatTime(dynamics), initial, grid, method=config.solver)
    _check_trajectory((trajectory,), grid)
    return trajectory[-1]
