"""Fog formation physics and the chromaticity geometry of the hazeline constraint.

Everything here is a pure function of tensors; no learned parameters. Images
are channel-last float tensors in [0, 1] of shape (..., H, W, 3); depth and
transmission maps are (..., H, W). Functions preserve the input dtype, so
they can be run in float64 for tight numerical checks.
"""

import math
from dataclasses import dataclass

import torch

CHROMA_EPS = 1e-6
DEGENERATE_NORM = 1e-5
DEFAULT_PATCH = 15

# Synthesis ranges: light-to-dense fog at road-scene depth scales, with a
# near-achromatic atmospheric light.
BETA_RANGE = (0.02, 0.12)
ATMO_BASE_RANGE = (0.6, 0.9)
ATMO_SPREAD = 0.1


@dataclass(frozen=True)
class FogParameters:
    """Atmospheric light color and attenuation coefficient of one fog condition."""

    atmo: tuple
    beta: float

    def __post_init__(self):
        a = tuple(float(c) for c in self.atmo)
        if len(a) != 3:
            raise ValueError("atmospheric light must have 3 channels")
        if not all(0.0 <= c <= 1.0 for c in a):
            raise ValueError(f"atmospheric light channels must lie in [0, 1], got {a}")
        b = float(self.beta)
        if not (math.isfinite(b) and b >= 0.0):
            raise ValueError(f"attenuation coefficient must be finite and >= 0, got {b}")
        object.__setattr__(self, "atmo", a)
        object.__setattr__(self, "beta", b)

    def atmo_tensor(self, dtype=torch.float32, device=None):
        return torch.tensor(self.atmo, dtype=dtype, device=device)


def sample_fog_parameters(
    rng, beta_range=BETA_RANGE, atmo_base_range=ATMO_BASE_RANGE, atmo_spread=ATMO_SPREAD
):
    """Draw one FogParameters; per-channel atmospheric light stays within
    atmo_spread of a shared base so it remains near-achromatic."""
    beta = float(rng.uniform(*beta_range))
    base = rng.uniform(*atmo_base_range)
    atmo = tuple(float(base + rng.uniform(0.0, atmo_spread)) for _ in range(3))
    return FogParameters(atmo=atmo, beta=beta)


def alpha_from_depth(depth, beta):
    """Transmission exp(-beta * depth), elementwise.

    depth is a (..., H, W) tensor of metric depths; beta >= 0 (beta = 0 is the
    fog-free limit). Result lies in (0, 1].
    """
    if not torch.is_tensor(depth):
        depth = torch.as_tensor(depth)
    if not torch.isfinite(depth).all():
        raise ValueError("depth contains non-finite values")
    if (depth < 0).any():
        raise ValueError("depth must be >= 0 everywhere")
    beta = float(beta)
    if not (math.isfinite(beta) and beta >= 0.0):
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    return torch.exp(-beta * depth)


def render_fog(clean, alpha, atmo):
    """Blend a clean image toward the atmospheric light: clean*alpha + (1-alpha)*atmo."""
    if not torch.is_tensor(clean):
        clean = torch.as_tensor(clean)
    if not torch.is_tensor(alpha):
        alpha = torch.as_tensor(alpha, dtype=clean.dtype, device=clean.device)
    atmo = torch.as_tensor(atmo, dtype=clean.dtype, device=clean.device)
    if clean.shape[-1] != 3:
        raise ValueError(f"clean image must be channel-last RGB, got shape {tuple(clean.shape)}")
    if alpha.shape != clean.shape[:-1]:
        raise ValueError(
            f"alpha shape {tuple(alpha.shape)} does not match image shape {tuple(clean.shape)}"
        )
    if atmo.shape != (3,):
        raise ValueError("atmo must be a 3-vector")
    if (alpha < 0).any() or (alpha > 1).any():
        raise ValueError("alpha must lie in [0, 1]")
    if (atmo < 0).any() or (atmo > 1).any():
        raise ValueError("atmo channels must lie in [0, 1]")
    a = alpha.unsqueeze(-1)
    return clean * a + (1.0 - a) * atmo


def chromaticity(img):
    """Per-pixel color divided by its channel sum; black pixels map to (0, 0, 0)."""
    if not torch.is_tensor(img):
        img = torch.as_tensor(img)
    total = img.sum(dim=-1, keepdim=True)
    return img / (total + CHROMA_EPS)


def atmospheric_light_chroma(fog, patch=DEFAULT_PATCH):
    """Chromaticity of the atmospheric light, via the brightest-patch assumption.

    Scans all patch x patch windows for the one with maximal mean luminance
    (mean of R+G+B); ties resolve to the smallest (row, col) in raster order.
    Returns the chromaticity of that window's mean color as a 3-vector. The
    selection index is treated as a constant, but gradients flow through the
    selected window's mean.
    """
    if not torch.is_tensor(fog):
        fog = torch.as_tensor(fog)
    if fog.dim() != 3 or fog.shape[-1] != 3:
        raise ValueError(f"expected a single (H, W, 3) image, got shape {tuple(fog.shape)}")
    h, w = fog.shape[0], fog.shape[1]
    patch = int(patch)
    if patch < 1 or patch > min(h, w):
        raise ValueError(f"patch size {patch} does not fit a {h}x{w} image")
    lum = fog.sum(dim=-1)
    window_mean = torch.nn.functional.avg_pool2d(
        lum.detach().unsqueeze(0).unsqueeze(0), patch, stride=1
    )[0, 0]
    flat_idx = int(torch.argmax(window_mean.reshape(-1)))
    row, col = divmod(flat_idx, window_mean.shape[1])
    mean_color = fog[row : row + patch, col : col + patch, :].mean(dim=(0, 1))
    return chromaticity(mean_color)


def hazeline_valid(gamma, sigma, atmo_chroma):
    """Boolean map of pixels whose hazeline residual is well-defined (both
    difference vectors at least DEGENERATE_NORM long)."""
    if not torch.is_tensor(gamma):
        gamma = torch.as_tensor(gamma)
    sigma = torch.as_tensor(sigma, dtype=gamma.dtype, device=gamma.device)
    atmo_chroma = torch.as_tensor(atmo_chroma, dtype=gamma.dtype, device=gamma.device)
    with torch.no_grad():
        n_fog = torch.linalg.vector_norm(sigma - atmo_chroma, dim=-1)
        n_clean = torch.linalg.vector_norm(gamma - atmo_chroma, dim=-1)
        return (n_fog >= DEGENERATE_NORM) & (n_clean >= DEGENERATE_NORM)


def hazeline_residual(gamma, sigma, atmo_chroma):
    """Per-pixel collinearity defect 1 - cos of (sigma - a) against (gamma - a).

    Both arguments are chromaticity maps (..., H, W, 3); atmo_chroma is the
    3-vector vertex. Pixels where either difference vector has norm below
    DEGENERATE_NORM get residual 0 (the direction is meaningless there).
    """
    if not torch.is_tensor(gamma):
        gamma = torch.as_tensor(gamma)
    if not torch.is_tensor(sigma):
        sigma = torch.as_tensor(sigma, dtype=gamma.dtype)
    atmo_chroma = torch.as_tensor(atmo_chroma, dtype=gamma.dtype, device=gamma.device)
    if sigma.shape != gamma.shape:
        raise ValueError("gamma and sigma shapes must agree")
    v_fog = sigma - atmo_chroma
    v_clean = gamma - atmo_chroma
    with torch.no_grad():
        ok = (torch.linalg.vector_norm(v_fog, dim=-1) >= DEGENERATE_NORM) & (
            torch.linalg.vector_norm(v_clean, dim=-1) >= DEGENERATE_NORM
        )
    # Degenerate pixels are swapped for a unit dummy before the norm so the
    # backward pass never differentiates |v| at v = 0.
    keep = ok.unsqueeze(-1)
    v_fog = torch.where(keep, v_fog, torch.ones_like(v_fog))
    v_clean = torch.where(keep, v_clean, torch.ones_like(v_clean))
    n_fog = torch.linalg.vector_norm(v_fog, dim=-1)
    n_clean = torch.linalg.vector_norm(v_clean, dim=-1)
    cos = (v_fog * v_clean).sum(dim=-1) / (n_fog * n_clean)
    cos = cos.clamp(-1.0, 1.0)
    return torch.where(ok, 1.0 - cos, torch.zeros_like(cos))
