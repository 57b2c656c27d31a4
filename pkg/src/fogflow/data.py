"""Dataset ingestion, synthetic fog construction, flow-file I/O, cropping, and
the batch scheduler that feeds the three training stages.

Sample images are channel-last float32 torch tensors in [0, 1]; flows are
(H, W, 2) with u then v. File I/O goes through numpy.
"""

import os
import struct
from dataclasses import dataclass, replace

import numpy as np
import torch
from PIL import Image

from . import fogphys

FLO_MAGIC = 202021.25
STAGE_ORDER = ("synthetic", "real_clean", "real_fog")
DEFAULT_CROP = (256, 512)


class FloFormatError(ValueError):
    """Malformed .flo file; carries the byte offset of the failure."""

    def __init__(self, path, offset, message):
        super().__init__(f"{path}: {message} (at byte {offset})")
        self.path = str(path)
        self.offset = offset


def read_flo(path):
    """Middlebury .flo reader; returns a (H, W, 2) float32 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise FloFormatError(path, len(data), "truncated header")
    (magic,) = struct.unpack("<f", data[:4])
    if magic != FLO_MAGIC:
        raise FloFormatError(path, 0, f"bad magic {magic!r}")
    if len(data) < 12:
        raise FloFormatError(path, len(data), "truncated header")
    width, height = struct.unpack("<ii", data[4:12])
    if width <= 0 or height <= 0:
        raise FloFormatError(path, 4, f"invalid dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(data) < expected:
        raise FloFormatError(path, len(data), f"truncated payload, expected {expected} bytes")
    if len(data) > expected:
        raise FloFormatError(path, expected, f"{len(data) - expected} trailing bytes")
    flow = np.frombuffer(data, dtype="<f4", offset=12).reshape(height, width, 2)
    return flow.astype(np.float32)


def write_flo(path, flow):
    """Middlebury .flo writer; accepts a (H, W, 2) array or tensor."""
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(flow.astype("<f4").tobytes())


def load_image(path):
    """8-bit PNG/JPEG as a (H, W, 3) float32 tensor in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr)


def save_image(path, img):
    """Write a channel-last [0, 1] image as 8-bit PNG/JPEG."""
    arr = np.asarray(img.detach().cpu() if torch.is_tensor(img) else img)
    arr = np.clip(arr, 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8)).save(path)


def load_depth(path):
    """Depth map in meters: 16-bit PNG stores value/256 meters, .npy stores
    raw 32-bit floats."""
    path = str(path)
    if path.endswith(".npy"):
        arr = np.load(path).astype(np.float32)
    else:
        with Image.open(path) as img:
            arr = np.asarray(img, dtype=np.float32) / 256.0
    if arr.ndim != 2:
        raise ValueError(f"depth map must be single-channel, got shape {arr.shape}")
    return torch.from_numpy(arr)


@dataclass
class SyntheticSample:
    """A clean frame pair with its physics-rendered fog twin and flow ground
    truth. Fog rendering is pixel-aligned, so the fog pair shares the clean
    pair's flow."""

    clean1: torch.Tensor
    clean2: torch.Tensor
    fog1: torch.Tensor
    fog2: torch.Tensor
    flow: torch.Tensor
    params: fogphys.FogParameters
    depth1: torch.Tensor
    depth2: torch.Tensor


@dataclass
class FramePair:
    """Two consecutive real frames, no ground truth."""

    frame1: torch.Tensor
    frame2: torch.Tensor


def synthesize_sample(
    clean1,
    clean2,
    depth1,
    depth2,
    flow_gt,
    rng,
    beta_range=fogphys.BETA_RANGE,
    atmo_base_range=fogphys.ATMO_BASE_RANGE,
    atmo_spread=fogphys.ATMO_SPREAD,
):
    """Render a fog pair over a clean pair with one shared parameter draw."""
    if depth1 is None or depth2 is None:
        raise ValueError("synthetic samples need a depth map per frame")
    for name, img in (("clean1", clean1), ("clean2", clean2)):
        if img.shape != clean1.shape or img.dim() != 3 or img.shape[-1] != 3:
            raise ValueError(f"{name} must be (H, W, 3) and match its pair")
    if depth1.shape != clean1.shape[:-1] or depth2.shape != clean2.shape[:-1]:
        raise ValueError("depth maps must match image size")
    if flow_gt.shape != clean1.shape[:-1] + (2,):
        raise ValueError("flow ground truth must be (H, W, 2)")
    params = fogphys.sample_fog_parameters(
        rng, beta_range=beta_range, atmo_base_range=atmo_base_range, atmo_spread=atmo_spread
    )
    fog1 = fogphys.render_fog(clean1, fogphys.alpha_from_depth(depth1, params.beta), params.atmo)
    fog2 = fogphys.render_fog(clean2, fogphys.alpha_from_depth(depth2, params.beta), params.atmo)
    return SyntheticSample(
        clean1=clean1,
        clean2=clean2,
        fog1=fog1.to(clean1.dtype),
        fog2=fog2.to(clean2.dtype),
        flow=flow_gt,
        params=params,
        depth1=depth1,
        depth2=depth2,
    )


def random_crop_pair(sample, rng, size=DEFAULT_CROP):
    """One crop window applied identically to every field of a sample.

    Displacements are translation-invariant, so flow values pass through
    unchanged.
    """
    th, tw = size
    if isinstance(sample, SyntheticSample):
        h, w = sample.clean1.shape[:2]
    else:
        h, w = sample.frame1.shape[:2]
    if h < th or w < tw:
        raise ValueError(f"source {h}x{w} smaller than crop {th}x{tw}")
    y = int(rng.integers(0, h - th + 1))
    x = int(rng.integers(0, w - tw + 1))

    def c2(t):
        return t[y : y + th, x : x + tw]

    if isinstance(sample, SyntheticSample):
        return SyntheticSample(
            clean1=c2(sample.clean1),
            clean2=c2(sample.clean2),
            fog1=c2(sample.fog1),
            fog2=c2(sample.fog2),
            flow=c2(sample.flow),
            params=sample.params,
            depth1=c2(sample.depth1),
            depth2=c2(sample.depth2),
        )
    return replace(sample, frame1=c2(sample.frame1), frame2=c2(sample.frame2))


class BatchScheduler:
    """Cycles synthetic -> real_clean -> real_fog, one batch per stage, each
    dataset reshuffled per epoch; fully restartable via state_dict."""

    def __init__(self, datasets, batch_size, rng, state=None):
        for name in STAGE_ORDER:
            if name not in datasets:
                raise ValueError(f"missing dataset {name!r}")
            if len(datasets[name]) == 0:
                raise ValueError(f"dataset {name!r} is empty")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.datasets = datasets
        self.batch_size = batch_size
        self.rng = rng
        self._order = {}
        self._cursor = {}
        self._stage = 0
        if state is not None:
            self.load_state_dict(state)
        else:
            for name in STAGE_ORDER:
                self._reshuffle(name)

    def _reshuffle(self, name):
        self._order[name] = [int(i) for i in self.rng.permutation(len(self.datasets[name]))]
        self._cursor[name] = 0

    def _draw(self, name):
        if self._cursor[name] >= len(self._order[name]):
            self._reshuffle(name)
        idx = self._order[name][self._cursor[name]]
        self._cursor[name] += 1
        return self.datasets[name][idx]

    def next_batch(self):
        tag = STAGE_ORDER[self._stage % len(STAGE_ORDER)]
        self._stage += 1
        return tag, [self._draw(tag) for _ in range(self.batch_size)]

    def state_dict(self):
        return {
            "stage": self._stage,
            "order": {k: list(v) for k, v in self._order.items()},
            "cursor": dict(self._cursor),
        }

    def load_state_dict(self, state):
        self._stage = state["stage"]
        self._order = {k: list(v) for k, v in state["order"].items()}
        self._cursor = dict(state["cursor"])


def batch_scheduler(datasets, batch_size, rng):
    """Infinite (stage_tag, batch) sequence over the three datasets."""
    sched = BatchScheduler(datasets, batch_size, rng)
    while True:
        yield sched.next_batch()


def _read_manifest_rows(path):
    rows = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f if os.path.isabs(f) else os.path.join(base, f) for f in line.split()]
            rows.append((lineno, fields))
    return rows


def load_pair_dataset(manifest_path):
    """Manifest lines: `frame1 frame2`; returns a list of FramePair."""
    pairs = []
    for lineno, fields in _read_manifest_rows(manifest_path):
        if len(fields) != 2:
            raise ValueError(f"{manifest_path}:{lineno}: expected 2 fields, got {len(fields)}")
        pairs.append(FramePair(frame1=load_image(fields[0]), frame2=load_image(fields[1])))
    if not pairs:
        raise ValueError(f"{manifest_path}: no usable entries")
    return pairs


def load_synthetic_dataset(manifest_path, rng, **fog_ranges):
    """Manifest lines: `frame1 frame2 depth1 depth2 flow.flo`; fog is rendered
    once per pair at load time with parameters drawn from rng."""
    samples = []
    for lineno, fields in _read_manifest_rows(manifest_path):
        if len(fields) != 5:
            raise ValueError(f"{manifest_path}:{lineno}: expected 5 fields, got {len(fields)}")
        clean1 = load_image(fields[0])
        clean2 = load_image(fields[1])
        depth1 = load_depth(fields[2])
        depth2 = load_depth(fields[3])
        flow = torch.from_numpy(read_flo(fields[4]))
        samples.append(synthesize_sample(clean1, clean2, depth1, depth2, flow, rng, **fog_ranges))
    if not samples:
        raise ValueError(f"{manifest_path}: no usable entries")
    return samples
