"""Flow-field colorization with the standard optical-flow color wheel: hue
encodes direction, saturation encodes magnitude, zero flow is white."""

import numpy as np
import torch

WHEEL_SEGMENTS = (("RY", 15), ("YG", 6), ("GC", 4), ("CB", 11), ("BM", 13), ("MR", 6))


def make_color_wheel():
    """The 55-color wheel as a (55, 3) array in [0, 1]."""
    total = sum(n for _, n in WHEEL_SEGMENTS)
    wheel = np.zeros((total, 3))
    col = 0
    ramps = {
        "RY": ((1, 0, 0), (0, 1, 0)),
        "YG": ((1, 1, 0), (-1, 0, 0)),
        "GC": ((0, 1, 0), (0, 0, 1)),
        "CB": ((0, 1, 1), (0, -1, 0)),
        "BM": ((0, 0, 1), (1, 0, 0)),
        "MR": ((1, 0, 1), (0, 0, -1)),
    }
    for name, count in WHEEL_SEGMENTS:
        base, step = ramps[name]
        for i in range(count):
            wheel[col] = np.array(base) + np.array(step) * (i / count)
            col += 1
    return wheel


def flow_to_color(flow, max_mag=None):
    """Render a (H, W, 2) flow as a (H, W, 3) image in [0, 1].

    Magnitudes are normalized by max_mag (default: the 99th-percentile
    magnitude) and clipped at full saturation.
    """
    if torch.is_tensor(flow):
        flow = flow.detach().cpu().numpy()
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    if not np.isfinite(flow).all():
        raise ValueError("flow contains non-finite values")
    u, v = flow[..., 0], flow[..., 1]
    mag = np.sqrt(u * u + v * v)
    if max_mag is None:
        max_mag = np.percentile(mag, 99)
    max_mag = max(float(max_mag), 1e-9)
    rad = np.clip(mag / max_mag, 0.0, 1.0)

    wheel = make_color_wheel()
    ncols = wheel.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(int) % ncols
    k1 = (k0 + 1) % ncols
    frac = (fk - np.floor(fk))[..., None]
    col = (1 - frac) * wheel[k0] + frac * wheel[k1]
    return 1.0 - rad[..., None] * (1.0 - col)
