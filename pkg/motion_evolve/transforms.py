"""Random geometric transforms for the equivariance constraint.

A transform maps normalized points p to A p + b + sum_k w_k U(|p - c_k|^2)
where (A, b) is a random similarity, c_k are control points on a regular
grid and U(r2) = r2 log(r2). The same closed form moves keypoints and
builds the sampling field used to warp images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .const import (
    TRANSFORM_MAX_ROTATION_DEG,
    TRANSFORM_MAX_TRANSLATION,
    TRANSFORM_SCALE_RANGE,
    TRANSFORM_TPS_GRID,
    TRANSFORM_TPS_SIGMA,
)
from .exceptions import InvalidArgumentError
from .primitives import identity_grid, warp

RADIAL_EPS = 1e-9


@dataclass
class GeometricTransform:
    """A batch of affine plus thin-plate transforms.

    Attributes:
        theta: Affine matrices (B, 2, 3).
        control_points: Thin-plate control points (G*G, 2).
        control_params: Thin-plate weights (B, G*G, 2).
    """

    theta: torch.Tensor
    control_points: torch.Tensor
    control_params: torch.Tensor

    @property
    def batch_size(self) -> int:
        return int(self.theta.shape[0])

    @classmethod
    def identity(
        cls,
        batch_size: int,
        *,
        grid_size: int = TRANSFORM_TPS_GRID,
        dtype: torch.dtype = torch.float32,
    ) -> GeometricTransform:
        """Return transforms that leave every point in place."""
        theta = torch.eye(2, 3, dtype=dtype).expand(batch_size, 2, 3).clone()
        points = identity_grid(grid_size, grid_size, dtype=dtype).view(-1, 2)
        params = torch.zeros(batch_size, grid_size * grid_size, 2, dtype=dtype)
        return cls(theta=theta, control_points=points, control_params=params)

    @classmethod
    def random(
        cls,
        batch_size: int,
        generator: torch.Generator | int = 0,
        *,
        max_rotation_deg: float = TRANSFORM_MAX_ROTATION_DEG,
        scale_range: tuple[float, float] = TRANSFORM_SCALE_RANGE,
        max_translation: float = TRANSFORM_MAX_TRANSLATION,
        grid_size: int = TRANSFORM_TPS_GRID,
        tps_sigma: float = TRANSFORM_TPS_SIGMA,
        dtype: torch.dtype = torch.float32,
    ) -> GeometricTransform:
        """Draw random transforms.

        Args:
            batch_size: Number of transforms.
            generator: Random source, or a seed for a fresh local generator.
                The global random state is never read.
            max_rotation_deg: Rotation is uniform in +/- this many degrees.
            scale_range: Isotropic scale is uniform in this range.
            max_translation: Each translation component is uniform in +/- this value.
            grid_size: Control grid side.
            tps_sigma: Standard deviation of the thin-plate weights (0 disables them).
            dtype: Floating dtype.

        Returns:
            The sampled transforms.
        """
        if batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
        if tps_sigma < 0:
            raise InvalidArgumentError(f"tps_sigma must be >= 0, got {tps_sigma}")
        source = torch.Generator().manual_seed(generator) if isinstance(generator, int) else generator

        def uniform(low: float, high: float) -> torch.Tensor:
            draw = torch.rand(batch_size, generator=source, dtype=dtype)
            return low + (high - low) * draw

        angle = uniform(-max_rotation_deg, max_rotation_deg) * (math.pi / 180)
        scale = uniform(*scale_range)
        shift_x = uniform(-max_translation, max_translation)
        shift_y = uniform(-max_translation, max_translation)
        cos, sin = scale * torch.cos(angle), scale * torch.sin(angle)
        theta = torch.stack(
            [torch.stack([cos, -sin, shift_x], dim=-1), torch.stack([sin, cos, shift_y], dim=-1)],
            dim=1,
        )
        points = identity_grid(grid_size, grid_size, dtype=dtype).view(-1, 2)
        params = tps_sigma * torch.randn(
            batch_size, grid_size * grid_size, 2, generator=source, dtype=dtype
        )
        return cls(theta=theta, control_points=points, control_params=params)

    def transform_points(self, points: torch.Tensor) -> torch.Tensor:
        """Map normalized points (B, P, 2) through the transforms."""
        if points.dim() != 3 or points.shape[0] != self.batch_size:
            raise InvalidArgumentError(
                f"Expected ({self.batch_size}, P, 2) points, got {tuple(points.shape)}"
            )
        theta = self.theta.to(points)
        moved = points @ theta[:, :, :2].transpose(1, 2) + theta[:, :, 2].unsqueeze(1)
        offsets = points.unsqueeze(2) - self.control_points.to(points).view(1, 1, -1, 2)
        r2 = (offsets**2).sum(-1)
        radial = r2 * torch.log(r2 + RADIAL_EPS)
        return moved + radial @ self.control_params.to(points)

    def warp_image(self, frame: torch.Tensor) -> torch.Tensor:
        """Resample frames (B, C, H, W) at the transformed grid positions."""
        height, width = frame.shape[-2:]
        grid = identity_grid(height, width, dtype=frame.dtype, device=frame.device)
        flat = grid.view(1, -1, 2).expand(self.batch_size, -1, -1)
        moved = self.transform_points(flat).view(self.batch_size, height, width, 2)
        return warp(frame, moved - grid)
