"""Differentiable loss terms for the generator.

Four terms: orientation dot-product loss, windowed-DFT spectral band
energy, total variation target and a branching regularizer driven by a
smoothed dot-loss indicator.  The two training phases use disjoint subsets
(phase 1: dot + spectral + TV, phase 2: dot + TV + branching).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

GRAD_MAG_FLOOR = 1e-6
INDICATOR_MARGIN = 5       # px zeroed at the domain edge
INDICATOR_SIGMA = 2.0      # px, Gaussian smoothing of the dot surface


@dataclass(frozen=True)
class LossWeights:
    lambda_omega: float = 1.0
    lambda_tau: float = 1.0
    lambda_b: float = 0.0
    epsilon_i: float = 10.0
    band_width: float = 4.0

    def __post_init__(self):
        if self.epsilon_i <= 2.0:
            raise ValueError("wave-length must exceed 2 cells (Nyquist)")
        if self.band_width < 1.0:
            raise ValueError("frequency band width must be >= 1 pixel")
        if min(self.lambda_omega, self.lambda_tau, self.lambda_b) < 0:
            raise ValueError("loss weights must be nonnegative")

    @property
    def tau(self) -> float:
        # per-cell total-variation target for the configured wave-length
        return (2.0 / self.epsilon_i) ** 2


def _as_batched(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[:, None]
    return x


def _sobel_kernels(dtype, device):
    gx = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]],
                      dtype=dtype, device=device) / 8.0
    return gx[None, None], gx.t()[None, None]


def image_gradient_orientations(rho: torch.Tensor):
    """Normalized Sobel gradient directions of the intermediate field.

    A 3x3 mean filter is applied to the raw gradients before normalization
    and the magnitude is floored; cells at the floor carry no usable
    direction and are masked out of the returned validity mask.
    Returns (ex, ey, valid) with the same spatial shape as rho.
    """
    x = _as_batched(rho)
    if x.shape[-1] < 3 or x.shape[-2] < 3:
        raise ValueError("field must be at least 3x3")
    kx, ky = _sobel_kernels(x.dtype, x.device)
    xp = F.pad(x, (1, 1, 1, 1), mode="replicate")
    gx = F.conv2d(xp, kx)
    gy = F.conv2d(xp, ky)
    box = torch.full((1, 1, 3, 3), 1.0 / 9.0, dtype=x.dtype, device=x.device)
    gx = F.conv2d(F.pad(gx, (1, 1, 1, 1), mode="replicate"), box)
    gy = F.conv2d(F.pad(gy, (1, 1, 1, 1), mode="replicate"), box)
    mag = torch.sqrt(gx * gx + gy * gy)
    valid = mag > GRAD_MAG_FLOOR
    mag = torch.clamp(mag, min=GRAD_MAG_FLOOR)
    ex = (gx / mag).view(rho.shape)
    ey = (gy / mag).view(rho.shape)
    return ex, ey, valid.view(rho.shape)


def upsample_angles(theta: torch.Tensor, factor: int) -> torch.Tensor:
    """Nearest-neighbor upsampling of an angle field (no interpolation of angles)."""
    return theta.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)


def dot_loss(ex, ey, theta, valid=None):
    """Mean absolute dot product between field gradients and lamination directions.

    The orientation field is 2-directional, so the absolute value makes the
    loss sign-invariant.  Returns (scalar, per-cell surface).
    """
    surface = torch.abs(ex * torch.cos(theta) + ey * torch.sin(theta))
    if valid is None:
        return surface.mean(), surface
    weight = valid.to(surface.dtype)
    denom = torch.clamp(weight.sum(), min=1.0)
    return (surface * weight).sum() / denom, surface


def _hamming(n, dtype, device):
    k = torch.arange(n, dtype=dtype, device=device)
    return 0.54 - 0.46 * torch.cos(2.0 * torch.pi * k / (n - 1))


def band_mask(shape, epsilon: float, band_width: float, device=None) -> torch.Tensor:
    """Annulus selecting frequencies within band_width/2 of the target wave-length.

    For non-square fields the radial frequency is normalized per axis
    against the larger dimension, which reduces to sqrt(i^2 + j^2) on
    square fields.
    """
    H, W = shape[-2], shape[-1]
    hbar = float(max(H, W))
    ki = torch.fft.fftfreq(H, device=device) * H * (hbar / H)
    kj = torch.fft.fftfreq(W, device=device) * W * (hbar / W)
    r = torch.sqrt(ki[:, None] ** 2 + kj[None, :] ** 2)
    c = hbar / epsilon
    mask = (r > c - band_width / 2.0) & (r < c + band_width / 2.0)
    if not mask.any():
        raise ValueError(
            f"empty frequency band for wave-length {epsilon} on a {H}x{W} field")
    return mask


def spectral_energy(rho: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    """Hamming-windowed DFT band energy fraction, in [0, 1]."""
    x = _as_batched(rho)
    H, W = x.shape[-2], x.shape[-1]
    if min(H, W) < weights.epsilon_i:
        raise ValueError("field smaller than the target wave-length")
    w = _hamming(H, x.dtype, x.device)[:, None] * _hamming(W, x.dtype, x.device)[None, :]
    f = torch.fft.fft2(x * w)
    power = f.real ** 2 + f.imag ** 2
    mask = band_mask(x.shape, weights.epsilon_i, weights.band_width, device=x.device)
    band = (power * mask).sum(dim=(-2, -1))
    total = power.sum(dim=(-2, -1))
    return (band / torch.clamp(total, min=torch.finfo(x.dtype).tiny)).mean()


def total_variation(rho: torch.Tensor, normalized: bool = True) -> torch.Tensor:
    """Sum of squared forward differences; divided by cell count when normalized."""
    x = _as_batched(rho)
    dv = (x[..., 1:, :] - x[..., :-1, :]) ** 2
    dh = (x[..., :, 1:] - x[..., :, :-1]) ** 2
    raw = dv.sum(dim=(-2, -1)) + dh.sum(dim=(-2, -1))
    if normalized:
        raw = raw / (x.shape[-2] * x.shape[-1])
    return raw.mean()


def _gaussian_kernel1d(sigma, dtype, device):
    radius = int(4.0 * sigma)
    k = torch.arange(-radius, radius + 1, dtype=dtype, device=device)
    g = torch.exp(-(k * k) / (2.0 * sigma * sigma))
    return g / g.sum()


def branching_indicator(dot_surface: torch.Tensor, sigma: float = INDICATOR_SIGMA) -> torch.Tensor:
    """Gaussian-smoothed dot surface with a hard zero margin at the edge.

    The indicator is detached: it steers the branching loss but the network
    must not improve that loss by degrading the indicator itself.
    """
    x = _as_batched(dot_surface).detach()
    if x.shape[-2] <= 2 * INDICATOR_MARGIN or x.shape[-1] <= 2 * INDICATOR_MARGIN:
        raise ValueError("field too small for the 5-px indicator margin")
    g = _gaussian_kernel1d(sigma, x.dtype, x.device)
    r = (g.numel() - 1) // 2
    xp = F.pad(x, (r, r, 0, 0), mode="replicate")
    x1 = F.conv2d(xp, g[None, None, None, :])
    xp = F.pad(x1, (0, 0, r, r), mode="replicate")
    out = F.conv2d(xp, g[None, None, :, None])
    m = INDICATOR_MARGIN
    mask = torch.zeros_like(out)
    mask[..., m:-m, m:-m] = 1.0
    return (out * mask).view(dot_surface.shape)


def branching_loss(indicator: torch.Tensor, rho: torch.Tensor) -> torch.Tensor:
    """Mean of indicator * (1 - rho): penalizes orientation error in the void phase."""
    return (indicator.detach() * (1.0 - rho)).mean()


def combined_loss(phase: int, rho: torch.Tensor, theta: torch.Tensor,
                  weights: LossWeights, upsample: int = 8):
    """Total training loss for one phase plus a per-term breakdown.

    phase 1 uses dot + spectral + TV (lambda_b forced 0); phase 2 uses
    dot + TV + branching (lambda_omega forced 0).  theta is the coarse
    orientation field matching rho's spatial extent / upsample.
    """
    if phase not in (1, 2):
        raise ValueError("phase must be 1 or 2")
    if phase == 1 and weights.lambda_b != 0.0:
        raise ValueError("phase 1 requires lambda_b == 0")
    if phase == 2 and weights.lambda_omega != 0.0:
        raise ValueError("phase 2 requires lambda_omega == 0")

    theta_up = upsample_angles(theta, upsample)
    ex, ey, valid = image_gradient_orientations(rho)
    l_dot, surface = dot_loss(ex, ey, theta_up, valid)
    tv = total_variation(rho)
    tv_pen = torch.abs(tv / weights.tau - 1.0)
    total = l_dot + weights.lambda_tau * tv_pen
    breakdown = {"dot": float(l_dot.detach()), "tv_penalty": float(tv_pen.detach()),
                 "spectral": 0.0, "branching": 0.0}
    if phase == 1:
        e_w = spectral_energy(rho, weights)
        total = total - weights.lambda_omega * e_w
        breakdown["spectral"] = float(e_w.detach())
    else:
        indicator = branching_indicator(surface)
        l_b = branching_loss(indicator, rho)
        total = total + weights.lambda_b * l_b
        breakdown["branching"] = float(l_b.detach())
    return total, breakdown
