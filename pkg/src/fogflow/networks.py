"""Learnable components: pyramid encoders, coarse-to-fine flow decoder with
warping and cost-volume correlation, domain-transformation decoders, and patch
discriminators.

Network tensors follow the PyTorch (B, C, H, W) convention. Flow tensors are
(B, 2, H, W) with channel 0 the horizontal displacement u and channel 1 the
vertical displacement v, in pixels at that tensor's own resolution.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

ENCODER_CHANNELS = (16, 32, 64, 96, 128, 196)
FLOW_LEVELS = (6, 5, 4, 3, 2)
FLOW_HEAD_CHANNELS = (128, 128, 96, 64, 32)
DEFAULT_D_MAX = 4

COMPONENT_NAMES = (
    "enc_fog",
    "enc_clean",
    "dec_flow",
    "dec_fog",
    "dec_clean",
    "disc_fog",
    "disc_clean",
)
DOMAINS = ("fog", "clean")


def _conv(in_ch, out_ch, stride=1):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1),
        nn.LeakyReLU(0.1),
    )


class PyramidEncoder(nn.Module):
    """6-stage feature pyramid; each stage is a stride-2 then a stride-1 conv."""

    def __init__(self):
        super().__init__()
        stages = []
        in_ch = 3
        for out_ch in ENCODER_CHANNELS:
            stages.append(nn.Sequential(_conv(in_ch, out_ch, stride=2), _conv(out_ch, out_ch)))
            in_ch = out_ch
        self.stages = nn.ModuleList(stages)

    def forward(self, img):
        h, w = img.shape[-2:]
        if h % 64 or w % 64:
            raise ValueError(f"input size {h}x{w} must be divisible by 64")
        levels = []
        x = img
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        return levels


def _sample_coords(flow):
    h, w = flow.shape[-2:]
    ys = torch.arange(h, dtype=flow.dtype, device=flow.device)
    xs = torch.arange(w, dtype=flow.dtype, device=flow.device)
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return grid_x + flow[:, 0], grid_y + flow[:, 1]


def flow_sample_in_bounds(flow):
    """Boolean (B, H, W) map of pixels whose flow samples inside the image."""
    h, w = flow.shape[-2:]
    sx, sy = _sample_coords(flow)
    return (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)


def warp(feat, flow):
    """Backward-warp: out(x) = feat(x + flow(x)) by bilinear sampling.

    Taps falling outside the grid contribute zero. Integer flows reproduce
    the shifted content exactly; warp(feat, 0) == feat bitwise.
    """
    if feat.shape[-2:] != flow.shape[-2:] or flow.shape[1] != 2:
        raise ValueError("feature and flow grids must share spatial size; flow needs 2 channels")
    b, c, h, w = feat.shape
    sx, sy = _sample_coords(flow)
    x0 = sx.floor()
    y0 = sy.floor()
    wx = (sx - x0).unsqueeze(1)
    wy = (sy - y0).unsqueeze(1)
    x0 = x0.long()
    y0 = y0.long()
    flat = feat.reshape(b, c, h * w)

    def tap(yi, xi):
        inside = ((xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)).unsqueeze(1)
        idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1)).reshape(b, 1, h * w)
        vals = flat.gather(2, idx.expand(b, c, h * w)).reshape(b, c, h, w)
        return vals * inside

    return (
        (1 - wx) * (1 - wy) * tap(y0, x0)
        + wx * (1 - wy) * tap(y0, x0 + 1)
        + (1 - wx) * wy * tap(y0 + 1, x0)
        + wx * wy * tap(y0 + 1, x0 + 1)
    )


def cost_volume(f1, f2_warped, d_max=DEFAULT_D_MAX):
    """Per-pixel correlation of unit-normalized features over all integer
    displacements with |du|, |dv| <= d_max; (2*d_max+1)**2 output channels,
    ordered row-major over (dv, du). Out-of-range taps contribute zero."""
    if f1.shape != f2_warped.shape:
        raise ValueError("feature grids must have identical shapes")
    f1n = f1 / (f1.norm(dim=1, keepdim=True) + 1e-8)
    f2n = f2_warped / (f2_warped.norm(dim=1, keepdim=True) + 1e-8)
    h, w = f1.shape[-2:]
    padded = F.pad(f2n, (d_max, d_max, d_max, d_max))
    rows = []
    for dv in range(-d_max, d_max + 1):
        for du in range(-d_max, d_max + 1):
            shifted = padded[:, :, d_max + dv : d_max + dv + h, d_max + du : d_max + du + w]
            rows.append((f1n * shifted).sum(dim=1))
    return torch.stack(rows, dim=1)


@dataclass
class MultiScaleFlow:
    """Flow estimates at pyramid levels 6..2 plus the full-resolution flow.

    levels[l] has shape (B, 2, H/2^l, W/2^l) in level-l pixel units; final is
    (B, 2, H, W) in full-resolution pixels.
    """

    levels: dict
    final: torch.Tensor


class FlowHead(nn.Module):
    def __init__(self, in_ch):
        super().__init__()
        layers = []
        ch = in_ch
        for out_ch in FLOW_HEAD_CHANNELS:
            layers.append(_conv(ch, out_ch))
            ch = out_ch
        layers.append(nn.Conv2d(ch, 2, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class FlowDecoder(nn.Module):
    """Coarse-to-fine flow estimation over pyramid levels 6 down to 2.

    At each level the second pyramid is warped by the upsampled coarser flow,
    correlated against the first pyramid, and a per-level head predicts a flow
    increment. The level-2 result is upsampled x4 (magnitudes scaled x4) for
    the full-resolution output.
    """

    def __init__(self, d_max=DEFAULT_D_MAX):
        super().__init__()
        self.d_max = d_max
        corr_ch = (2 * d_max + 1) ** 2
        self.heads = nn.ModuleDict(
            {str(lvl): FlowHead(corr_ch + ENCODER_CHANNELS[lvl - 1] + 2) for lvl in FLOW_LEVELS}
        )

    def forward(self, pyr1, pyr2):
        if len(pyr1) != 6 or len(pyr2) != 6:
            raise ValueError("feature pyramids must have 6 levels")
        for a, b in zip(pyr1, pyr2):
            if a.shape != b.shape:
                raise ValueError("pyramids come from different image sizes")
        levels = {}
        flow = None
        for lvl in FLOW_LEVELS:
            f1 = pyr1[lvl - 1]
            f2 = pyr2[lvl - 1]
            if flow is None:
                flow_up = torch.zeros(
                    f1.shape[0], 2, f1.shape[2], f1.shape[3], dtype=f1.dtype, device=f1.device
                )
                f2w = f2
            else:
                flow_up = 2.0 * F.interpolate(flow, scale_factor=2, mode="bilinear", align_corners=False)
                f2w = warp(f2, flow_up)
            corr = cost_volume(f1, f2w, self.d_max)
            inc = self.heads[str(lvl)](torch.cat((corr, f1, flow_up), dim=1))
            flow = flow_up + inc
            levels[lvl] = flow
        final = 4.0 * F.interpolate(flow, scale_factor=4, mode="bilinear", align_corners=False)
        return MultiScaleFlow(levels=levels, final=final)


class ResBlock(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class TransformDecoder(nn.Module):
    """Image decoder: source image plus the first three pyramid levels are
    projected to the level-3 grid, refined by six residual blocks, and
    upsampled back to full resolution with a sigmoid output."""

    def __init__(self):
        super().__init__()
        c3 = ENCODER_CHANNELS[2]
        self.proj_img = nn.Conv2d(3, c3, 8, stride=8)
        self.proj_l1 = nn.Conv2d(ENCODER_CHANNELS[0], c3, 4, stride=4)
        self.proj_l2 = nn.Conv2d(ENCODER_CHANNELS[1], c3, 2, stride=2)
        width = 4 * c3
        self.blocks = nn.Sequential(*[ResBlock(width) for _ in range(6)])
        self.up = nn.Sequential(
            nn.ConvTranspose2d(width, 128, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.ConvTranspose2d(128, 64, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.ConvTranspose2d(64, 32, 4, stride=2, padding=1),
            nn.ReLU(),
        )
        self.out = nn.Conv2d(32, 3, 3, padding=1)

    def forward(self, pyr, src):
        if len(pyr) != 6:
            raise ValueError("feature pyramid must have 6 levels")
        x = torch.cat(
            (self.proj_img(src), self.proj_l1(pyr[0]), self.proj_l2(pyr[1]), pyr[2]), dim=1
        )
        x = self.blocks(x)
        x = self.up(x)
        return torch.sigmoid(self.out(x))


class PatchDiscriminator(nn.Module):
    """Five-conv patch discriminator; raw per-patch scores, no squashing."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 64, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(64, 128, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(128, 256, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(256, 512, 4, stride=1, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(512, 1, 3, stride=1, padding=1),
        )

    def forward(self, img):
        return self.net(img)


class ParameterStore(nn.Module):
    """The seven named network components, with per-component trainable flags.

    Freezing a component stops gradient accumulation on its weights and makes
    the trainer skip its optimizer, so a frozen component is bit-identical
    across a training step. Forward calls are pure and safe to run
    concurrently; weight mutation is single-writer (one training step at a
    time, no overlapping readers).
    """

    def __init__(self, d_max=DEFAULT_D_MAX):
        super().__init__()
        self.enc_fog = PyramidEncoder()
        self.enc_clean = PyramidEncoder()
        self.dec_flow = FlowDecoder(d_max=d_max)
        self.dec_fog = TransformDecoder()
        self.dec_clean = TransformDecoder()
        self.disc_fog = PatchDiscriminator()
        self.disc_clean = PatchDiscriminator()
        self.d_max = d_max
        self._trainable = {name: True for name in COMPONENT_NAMES}

    def component(self, name):
        if name not in COMPONENT_NAMES:
            raise KeyError(f"unknown component {name!r}; expected one of {COMPONENT_NAMES}")
        return getattr(self, name)

    def set_trainable(self, name, flag):
        module = self.component(name)
        self._trainable[name] = bool(flag)
        for p in module.parameters():
            p.requires_grad_(bool(flag))

    def is_trainable(self, name):
        self.component(name)
        return self._trainable[name]

    def trainable_flags(self):
        return dict(self._trainable)

    def load_trainable_flags(self, flags):
        for name, flag in flags.items():
            self.set_trainable(name, flag)

    def _encoder(self, domain):
        if domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")
        return self.enc_fog if domain == "fog" else self.enc_clean

    def encode(self, domain, img):
        """Feature pyramid of img through the encoder of the given domain."""
        return self._encoder(domain)(img)

    def estimate_flow(self, pyr1, pyr2):
        """Flow from a pair of feature pyramids (either encoder's output)."""
        return self.dec_flow(pyr1, pyr2)

    def decode(self, domain, pyr, src):
        """Render an image of the given domain from a pyramid and its source."""
        if domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")
        decoder = self.dec_fog if domain == "fog" else self.dec_clean
        return decoder(pyr, src)

    def discriminate(self, domain, img):
        """Patch realness scores of img under the given domain's discriminator."""
        if domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")
        disc = self.disc_fog if domain == "fog" else self.disc_clean
        return disc(img)


def _init_module(module, generator):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            bound = 1.0 / math.sqrt(fan_in)
            m.weight.data.uniform_(-bound, bound, generator=generator)
            if m.bias is not None:
                m.bias.data.zero_()


def init_network(seed, d_max=DEFAULT_D_MAX):
    """Build a ParameterStore with deterministic fan-in-scaled uniform weights."""
    store = ParameterStore(d_max=d_max)
    generator = torch.Generator(device="cpu").manual_seed(int(seed))
    for name in COMPONENT_NAMES:
        _init_module(store.component(name), generator)
    return store
