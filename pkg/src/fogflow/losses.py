"""Training objectives and the photometric consistency mask.

All losses are pure functions of (B, C, H, W) tensors and return scalar
tensors. Flow tensors follow the networks module convention.
"""

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from . import fogphys
from .networks import MultiScaleFlow, flow_sample_in_bounds, warp

# Coarse-to-fine weights for the per-level EPE terms, keyed by pyramid level.
MULTISCALE_EPE_WEIGHTS = {2: 0.32, 3: 0.08, 4: 0.02, 5: 0.01, 6: 0.005}
DEFAULT_MASK_TAU = 0.05


def _epe_map(flow_a, flow_b):
    return torch.linalg.vector_norm(flow_a - flow_b, dim=1)


def loss_epe_supervised(pred, gt, multiscale=True):
    """Mean end-point error of the final flow against ground truth, optionally
    plus weighted per-level terms against downsampled-and-rescaled ground truth."""
    if not isinstance(pred, MultiScaleFlow):
        raise TypeError("pred must be a MultiScaleFlow")
    if not torch.isfinite(gt).all():
        raise ValueError("ground-truth flow contains non-finite values")
    if pred.final.shape != gt.shape:
        raise ValueError("ground truth must be at full resolution")
    total = _epe_map(pred.final, gt).mean()
    if multiscale:
        for lvl, flow_l in pred.levels.items():
            factor = 2**lvl
            gt_l = F.avg_pool2d(gt, factor) / factor
            total = total + MULTISCALE_EPE_WEIGHTS[lvl] * _epe_map(flow_l, gt_l).mean()
    return total


def loss_l1_transform(rendered, gt):
    """Mean absolute difference over all pixels and channels."""
    if rendered.shape != gt.shape:
        raise ValueError("image shapes must agree")
    return (rendered - gt).abs().mean()


def loss_transform_consistency(orig1, orig2, cyc1, cyc2):
    """Sum of the frame-wise mean absolute differences of a two-frame cycle."""
    return loss_l1_transform(cyc1, orig1) + loss_l1_transform(cyc2, orig2)


def photometric_consistency_mask(img1, img2, flow, tau=DEFAULT_MASK_TAU):
    """Binary (B, H, W) map: 1 where warping img2 by flow reproduces img1
    within tau mean absolute intensity, 0 elsewhere and wherever the flow
    samples outside the image."""
    if img1.shape != img2.shape or img1.shape[-2:] != flow.shape[-2:]:
        raise ValueError("images and flow must share spatial size")
    with torch.no_grad():
        err = (img1 - warp(img2, flow)).abs().mean(dim=1)
        mask = (err < tau) & flow_sample_in_bounds(flow)
    return mask.to(img1.dtype)


def loss_epe_cross_domain(flow_a, flow_b, mask, stop_target=None):
    """Masked mean end-point error between two flow fields.

    stop_target names the flow ("a" or "b") treated as a constant pseudo
    ground truth; None leaves both live. An all-zero mask yields a plain
    zero with no gradient (the caller reports the term as skipped).
    """
    if flow_a.shape != flow_b.shape:
        raise ValueError("flow shapes must agree")
    if mask.shape[-2:] != flow_a.shape[-2:]:
        raise ValueError("mask resolution must match the flows")
    if stop_target not in (None, "a", "b"):
        raise ValueError("stop_target must be None, 'a', or 'b'")
    if stop_target == "a":
        flow_a = flow_a.detach()
    elif stop_target == "b":
        flow_b = flow_b.detach()
    m = mask.to(flow_a.dtype)
    denom = m.sum()
    if denom.item() == 0:
        return torch.zeros((), dtype=flow_a.dtype, device=flow_a.device)
    return (_epe_map(flow_a, flow_b) * m).sum() / denom


def loss_flow_consistency(flow_f, flow_c, mask):
    """Masked mean end-point error between the fog-branch and clean-branch
    flows; no side is a constant (the trainer's freeze schedule restricts
    which components update)."""
    return loss_epe_cross_domain(flow_f, flow_c, mask, stop_target=None)


def loss_gan_generator(scores_fake):
    """Non-saturating generator objective: softplus(-score) on fake patches."""
    return F.softplus(-scores_fake).mean()


def loss_gan_discriminator(scores_real, scores_fake):
    """Discriminator objective: softplus(-real) + softplus(fake)."""
    return F.softplus(-scores_real).mean() + F.softplus(scores_fake).mean()


def loss_hazeline(clean, rendered_fog, atmo_chroma=None, patch=fogphys.DEFAULT_PATCH):
    """Mean hazeline collinearity defect between a clean/fog image pair.

    Images are (B, 3, H, W). The atmospheric light chromaticity is estimated
    per image from the fog frame via the brightest patch unless atmo_chroma
    is given. The mean runs over non-degenerate pixels only; the value lies
    in [0, 2].
    """
    if clean.shape != rendered_fog.shape:
        raise ValueError("image shapes must agree")
    clean_hwc = clean.permute(0, 2, 3, 1)
    fog_hwc = rendered_fog.permute(0, 2, 3, 1)
    total = None
    count = 0.0
    for i in range(clean.shape[0]):
        gamma = fogphys.chromaticity(clean_hwc[i])
        sigma = fogphys.chromaticity(fog_hwc[i])
        a = atmo_chroma
        if a is None:
            a = fogphys.atmospheric_light_chroma(fog_hwc[i], patch=patch)
        residual = fogphys.hazeline_residual(gamma, sigma, a)
        valid = fogphys.hazeline_valid(gamma, sigma, a)
        part = residual.sum()
        total = part if total is None else total + part
        count += float(valid.sum())
    if count == 0:
        return torch.zeros((), dtype=clean.dtype, device=clean.device)
    return total / count


LOSS_NAMES = ("epe_sup", "l1_sup", "con", "epe_cross", "gan_g", "gan_d", "hazeline", "flow_con")


@dataclass
class LossReport:
    """Named scalar losses of one training step; absent terms stay None."""

    step: int
    stage: str
    epe_sup: float = None
    l1_sup: float = None
    con: float = None
    epe_cross: float = None
    gan_g: float = None
    gan_d: float = None
    hazeline: float = None
    flow_con: float = None
    total: float = 0.0
    skipped: tuple = field(default_factory=tuple)

    def values(self):
        return {name: getattr(self, name) for name in LOSS_NAMES}

    def finite(self):
        return all(math.isfinite(v) for v in self.values().values() if v is not None) and (
            math.isfinite(self.total)
        )

    @staticmethod
    def csv_header():
        return "step,stage," + ",".join(LOSS_NAMES) + ",total"

    def csv_row(self):
        cells = [str(self.step), self.stage]
        for name in LOSS_NAMES:
            v = getattr(self, name)
            if name in self.skipped:
                cells.append("skipped")
            elif v is None:
                cells.append("")
            else:
                cells.append(repr(float(v)))
        cells.append(repr(float(self.total)))
        return ",".join(cells)
