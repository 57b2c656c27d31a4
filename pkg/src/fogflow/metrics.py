"""Flow quality metrics: end-point error and the bad-pixel fraction, with
support for sparse validity masks."""

import os
from dataclasses import dataclass

import numpy as np

from .data import read_flo

DEFAULT_DELTAS = (3.0, 5.0)
SYNTHETIC_DELTAS = (1.0, 3.0)


@dataclass
class MetricReport:
    epe: float
    bad_pixel: dict
    n_valid: int


def _as_flow(arr, name):
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 3 or out.shape[2] != 2:
        raise ValueError(f"{name} must be (H, W, 2), got {out.shape}")
    return out


def _valid_mask(valid, shape):
    if valid is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(valid) != 0
    if mask.shape != shape:
        raise ValueError(f"validity mask shape {mask.shape} does not match flow {shape}")
    if not mask.any():
        raise ValueError("validity mask is empty")
    return mask


def metric_epe(pred, gt, valid=None):
    """Mean Euclidean end-point error over valid pixels."""
    pred = _as_flow(pred, "pred")
    gt = _as_flow(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth shapes must agree")
    mask = _valid_mask(valid, pred.shape[:2])
    err = np.linalg.norm(pred - gt, axis=2)
    return float(err[mask].mean())


def metric_bad_pixel(pred, gt, valid=None, delta=3.0):
    """Fraction of valid pixels with end-point error strictly above delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    pred = _as_flow(pred, "pred")
    gt = _as_flow(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth shapes must agree")
    mask = _valid_mask(valid, pred.shape[:2])
    err = np.linalg.norm(pred - gt, axis=2)
    return float((err[mask] > delta).mean())


def evaluate_pair(pred, gt, valid=None, deltas=DEFAULT_DELTAS):
    pred = _as_flow(pred, "pred")
    gt = _as_flow(gt, "gt")
    mask = _valid_mask(valid, pred.shape[:2])
    return MetricReport(
        epe=metric_epe(pred, gt, mask),
        bad_pixel={d: metric_bad_pixel(pred, gt, mask, d) for d in deltas},
        n_valid=int(mask.sum()),
    )


def evaluate_directories(pred_dir, gt_dir, mask_dir=None, deltas=DEFAULT_DELTAS):
    """Match .flo files by name across two directories; returns per-file rows
    [(name, MetricReport)] plus the pixel-pooled aggregate MetricReport."""
    names = sorted(n for n in os.listdir(pred_dir) if n.endswith(".flo"))
    if not names:
        raise ValueError(f"no .flo files in {pred_dir}")
    rows = []
    pooled_err = []
    for name in names:
        gt_path = os.path.join(gt_dir, name)
        if not os.path.exists(gt_path):
            raise FileNotFoundError(f"missing ground truth for {name}")
        pred = read_flo(os.path.join(pred_dir, name)).astype(np.float64)
        gt = read_flo(gt_path).astype(np.float64)
        valid = None
        if mask_dir is not None:
            from PIL import Image

            mask_path = os.path.join(mask_dir, os.path.splitext(name)[0] + ".png")
            with Image.open(mask_path) as img:
                valid = np.asarray(img.convert("L")) != 0
        report = evaluate_pair(pred, gt, valid, deltas)
        rows.append((name, report))
        mask = _valid_mask(valid, pred.shape[:2])
        pooled_err.append(np.linalg.norm(pred - gt, axis=2)[mask])
    pooled = np.concatenate(pooled_err)
    aggregate = MetricReport(
        epe=float(pooled.mean()),
        bad_pixel={d: float((pooled > d).mean()) for d in deltas},
        n_valid=int(pooled.size),
    )
    return rows, aggregate
