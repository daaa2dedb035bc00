"""Differentiable image and field primitives.

Coordinates are normalized to [-1, 1] with pixel centers on the grid points:
(-1, -1) is the center of the top-left pixel and (+1, +1) the center of the
bottom-right one. Deformation fields are stored as offsets from the identity
grid, shaped (B, H, W, 2) with the last axis ordered (x, y).
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .exceptions import InvalidArgumentError

# Tolerance on the per-channel mass of a heatmap fed to soft_argmax
HEATMAP_MASS_TOLERANCE = 1e-4


def identity_grid(
    height: int,
    width: int,
    *,
    dtype: torch.dtype = torch.float32,
    device: torch.device | None = None,
) -> torch.Tensor:
    """Create the identity sampling grid.

    Args:
        height: Number of rows (>= 2).
        width: Number of columns (>= 2).
        dtype: Floating dtype of the grid.
        device: Target device.

    Returns:
        Tensor of shape (height, width, 2) holding (x, y) per pixel.

    Raises:
        InvalidArgumentError: If a dimension is below 2.
    """
    if height < 2 or width < 2:
        raise InvalidArgumentError(f"Grid dimensions must be >= 2, got {height}x{width}")
    ys = torch.linspace(-1.0, 1.0, height, dtype=dtype, device=device)
    xs = torch.linspace(-1.0, 1.0, width, dtype=dtype, device=device)
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack((grid_x, grid_y), dim=-1)


def _base_positions(
    size_out: int,
    size_in: int,
    dtype: torch.dtype,
    device: torch.device,
) -> torch.Tensor:
    """Return the pixel position in the input of each output pixel under the zero field."""
    if size_out == 1:
        return torch.zeros(1, dtype=dtype, device=device)
    ratio = (size_in - 1) / (size_out - 1)
    return torch.arange(size_out, dtype=dtype, device=device) * ratio


def warp(inputs: torch.Tensor, field: torch.Tensor) -> torch.Tensor:
    """Bilinearly resample an image or feature map through a deformation field.

    At output pixel x the input is sampled at grid(x) + field(x). Coordinates
    outside the input clamp to the border. Sampling positions are computed in
    pixel units from exact integer bases, so the zero field reproduces the
    input bit for bit when the sizes match.

    Args:
        inputs: Tensor of shape (B, C, H_in, W_in).
        field: Offsets of shape (B, H_out, W_out, 2) in normalized units.

    Returns:
        Tensor of shape (B, C, H_out, W_out).

    Raises:
        InvalidArgumentError: On shape mismatch or non-finite field values.
    """
    if inputs.dim() != 4:
        raise InvalidArgumentError(f"warp expects (B, C, H, W) inputs, got {tuple(inputs.shape)}")
    if field.dim() != 4 or field.shape[-1] != 2:
        raise InvalidArgumentError(f"warp expects (B, H, W, 2) fields, got {tuple(field.shape)}")
    if field.shape[0] != inputs.shape[0]:
        raise InvalidArgumentError(
            f"Batch mismatch: inputs {inputs.shape[0]} vs field {field.shape[0]}"
        )
    if not torch.isfinite(field).all():
        raise InvalidArgumentError("Deformation field contains non-finite values")

    batch, channels, height_in, width_in = inputs.shape
    _, height_out, width_out, _ = field.shape
    dtype, device = field.dtype, field.device

    base_x = _base_positions(width_out, width_in, dtype, device).view(1, 1, width_out)
    base_y = _base_positions(height_out, height_in, dtype, device).view(1, height_out, 1)
    x = (base_x + field[..., 0] * ((width_in - 1) / 2)).clamp(0, width_in - 1)
    y = (base_y + field[..., 1] * ((height_in - 1) / 2)).clamp(0, height_in - 1)

    x0 = torch.floor(x).clamp(max=max(width_in - 2, 0))
    y0 = torch.floor(y).clamp(max=max(height_in - 2, 0))
    wx = (x - x0).unsqueeze(1)
    wy = (y - y0).unsqueeze(1)

    x0i = x0.long()
    y0i = y0.long()
    x1i = (x0i + 1).clamp(max=width_in - 1)
    y1i = (y0i + 1).clamp(max=height_in - 1)

    flat = inputs.reshape(batch, channels, height_in * width_in)

    def gather(yi: torch.Tensor, xi: torch.Tensor) -> torch.Tensor:
        index = (yi * width_in + xi).view(batch, 1, -1).expand(batch, channels, -1)
        return flat.gather(2, index).view(batch, channels, height_out, width_out)

    top = gather(y0i, x0i) * (1 - wx) + gather(y0i, x1i) * wx
    bottom = gather(y1i, x0i) * (1 - wx) + gather(y1i, x1i) * wx
    return top * (1 - wy) + bottom * wy


def normalize_heatmap(logits: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """Apply a per-channel spatial softmax.

    Args:
        logits: Tensor of shape (B, K, H, W).
        temperature: Softmax temperature (> 0).

    Returns:
        Heatmap of the same shape whose channels each sum to one.
    """
    if temperature <= 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {temperature}")
    batch, channels, height, width = logits.shape
    flat = F.softmax(logits.reshape(batch, channels, -1) / temperature, dim=-1)
    return flat.view(batch, channels, height, width)


def soft_argmax(heatmap: torch.Tensor) -> torch.Tensor:
    """Compute the expected grid coordinate of each heatmap channel.

    Args:
        heatmap: Spatially normalized tensor of shape (B, K, H, W).

    Returns:
        Keypoints of shape (B, K, 2) in (x, y) order.

    Raises:
        InvalidArgumentError: If a channel does not sum to one.
    """
    if heatmap.dim() != 4:
        raise InvalidArgumentError(f"soft_argmax expects (B, K, H, W), got {tuple(heatmap.shape)}")
    mass = heatmap.sum(dim=(-2, -1))
    deviation = (mass - 1).abs().max().item()
    if deviation > HEATMAP_MASS_TOLERANCE:
        raise InvalidArgumentError(
            f"Heatmap channels must sum to 1, worst deviation is {deviation:.3g}"
        )
    height, width = heatmap.shape[-2:]
    grid = identity_grid(height, width, dtype=heatmap.dtype, device=heatmap.device)
    return torch.einsum("bkhw,hwc->bkc", heatmap, grid)


def gaussian_heatmap(
    keypoints: torch.Tensor,
    sigma: float,
    height: int,
    width: int,
    *,
    normalize: bool = True,
) -> torch.Tensor:
    """Encode keypoints as isotropic Gaussian maps.

    Args:
        keypoints: Tensor of shape (B, K, 2) in normalized (x, y).
        sigma: Standard deviation in normalized units (> 0).
        height: Map height.
        width: Map width.
        normalize: Normalize each channel to unit mass; otherwise the peak is 1.

    Returns:
        Tensor of shape (B, K, height, width).

    Raises:
        InvalidArgumentError: If sigma is not positive.
    """
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma}")
    grid = identity_grid(height, width, dtype=keypoints.dtype, device=keypoints.device)
    diff = grid.view(1, 1, height, width, 2) - keypoints.view(*keypoints.shape[:2], 1, 1, 2)
    logits = -0.5 * (diff**2).sum(-1) / sigma**2
    if normalize:
        return normalize_heatmap(logits)
    return torch.exp(logits)


def downsample_pyramid(frame: torch.Tensor, levels: int, min_size: int = 4) -> list[torch.Tensor]:
    """Build an average-pooled image pyramid.

    Args:
        frame: Tensor of shape (B, C, H, W).
        levels: Number of levels, level 0 being the input.
        min_size: Smallest allowed side of the coarsest level.

    Returns:
        List of tensors at scales 1, 1/2, ..., 1/2**(levels - 1).

    Raises:
        InvalidArgumentError: If levels < 1 or the coarsest level is too small.
    """
    if levels < 1:
        raise InvalidArgumentError(f"levels must be >= 1, got {levels}")
    factor = 2 ** (levels - 1)
    height, width = frame.shape[-2:]
    if height // factor < min_size or width // factor < min_size:
        raise InvalidArgumentError(
            f"A {height}x{width} frame cannot form {levels} levels with a "
            f"{min_size}x{min_size} minimum"
        )
    pyramid = [frame]
    for _ in range(levels - 1):
        pyramid.append(F.avg_pool2d(pyramid[-1], kernel_size=2))
    return pyramid


def resize_field(field: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinearly resample a deformation field to another resolution.

    Offsets are in normalized units, so their values carry over unchanged.
    """
    if tuple(field.shape[1:3]) == tuple(size):
        return field
    channels_first = field.permute(0, 3, 1, 2)
    resized = F.interpolate(channels_first, size=size, mode="bilinear", align_corners=True)
    return resized.permute(0, 2, 3, 1)


def max_pyramid_levels(height: int, width: int, min_size: int = 4) -> int:
    """Return the most pyramid levels a frame supports with the given minimum side."""
    levels = 1
    while min(height, width) // (2**levels) >= min_size:
        levels += 1
    return levels
