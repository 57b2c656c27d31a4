import numpy as np
import pytest
import torch

from fogflow.networks import (
    COMPONENT_NAMES,
    ENCODER_CHANNELS,
    MultiScaleFlow,
    cost_volume,
    flow_sample_in_bounds,
    init_network,
    warp,
)


def param_count(module):
    return sum(p.numel() for p in module.parameters())


@pytest.fixture(scope="module")
def store():
    return init_network(seed=0)


class TestInit:
    def test_same_seed_bit_identical(self):
        s1 = init_network(seed=7)
        s2 = init_network(seed=7)
        for k, v in s1.state_dict().items():
            assert torch.equal(v, s2.state_dict()[k]), k

    def test_different_seeds_differ(self):
        s1 = init_network(seed=7)
        s2 = init_network(seed=8)
        same = all(torch.equal(v, s2.state_dict()[k]) for k, v in s1.state_dict().items())
        assert not same

    def test_encoders_same_architecture_independent_weights(self, store):
        assert param_count(store.enc_fog) == param_count(store.enc_clean)
        w1 = store.enc_fog.stages[0][0][0].weight
        w2 = store.enc_clean.stages[0][0][0].weight
        assert w1.shape == w2.shape and not torch.equal(w1, w2)

    def test_biases_zero(self, store):
        for m in store.modules():
            if isinstance(m, (torch.nn.Conv2d, torch.nn.ConvTranspose2d)) and m.bias is not None:
                assert torch.equal(m.bias, torch.zeros_like(m.bias))

    def test_component_lookup(self, store):
        for name in COMPONENT_NAMES:
            assert store.component(name) is getattr(store, name)
        with pytest.raises(KeyError):
            store.component("nope")


class TestEncoder:
    def test_level_sizes_halve(self, store):
        img = torch.zeros(1, 3, 256, 512)
        with torch.no_grad():
            pyr = store.encode("fog", img)
        sizes = [tuple(f.shape[-2:]) for f in pyr]
        assert sizes == [(128, 256), (64, 128), (32, 64), (16, 32), (8, 16), (4, 8)]
        assert [f.shape[1] for f in pyr] == list(ENCODER_CHANNELS)

    def test_zero_image_finite(self, store):
        with torch.no_grad():
            pyr = store.encode("clean", torch.zeros(1, 3, 64, 64))
        assert all(torch.isfinite(f).all() for f in pyr)

    def test_pure_function(self, store):
        img = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            p1 = store.encode("fog", img)
            p2 = store.encode("fog", img)
        assert all(torch.equal(a, b) for a, b in zip(p1, p2))

    def test_indivisible_size_rejected(self, store):
        with pytest.raises(ValueError):
            store.encode("fog", torch.zeros(1, 3, 100, 128))
        with pytest.raises(ValueError):
            store.encode("bad_domain", torch.zeros(1, 3, 64, 64))


def warp_oracle(feat, flow):
    """Scalar bilinear sampling with zero fill outside the grid."""
    b, c, h, w = feat.shape
    out = torch.zeros_like(feat)
    for bi in range(b):
        for y in range(h):
            for x in range(w):
                sx = x + float(flow[bi, 0, y, x])
                sy = y + float(flow[bi, 1, y, x])
                x0, y0 = int(np.floor(sx)), int(np.floor(sy))
                fx, fy = sx - x0, sy - y0
                for ci in range(c):
                    acc = 0.0
                    for (yy, xx, wgt) in (
                        (y0, x0, (1 - fx) * (1 - fy)),
                        (y0, x0 + 1, fx * (1 - fy)),
                        (y0 + 1, x0, (1 - fx) * fy),
                        (y0 + 1, x0 + 1, fx * fy),
                    ):
                        if 0 <= yy < h and 0 <= xx < w:
                            acc += wgt * float(feat[bi, ci, yy, xx])
                    out[bi, ci, y, x] = acc
    return out


class TestWarp:
    def test_zero_flow_identity_exact(self):
        feat = torch.rand(2, 5, 9, 13, generator=torch.Generator().manual_seed(2))
        assert torch.equal(warp(feat, torch.zeros(2, 2, 9, 13)), feat)

    def test_unit_shift(self):
        feat = torch.arange(64, dtype=torch.float32).reshape(1, 1, 8, 8)
        flow = torch.zeros(1, 2, 8, 8)
        flow[:, 0] = 1.0
        out = warp(feat, flow)
        assert torch.equal(out[0, 0, :, :-1], feat[0, 0, :, 1:])
        assert torch.equal(out[0, 0, :, -1], torch.zeros(8))

    def test_half_pixel_on_ramp(self):
        w = 8
        ramp = torch.arange(w, dtype=torch.float64).expand(1, 1, 4, w).clone()
        flow = torch.zeros(1, 2, 4, w, dtype=torch.float64)
        flow[:, 0] = 0.5
        out = warp(ramp, flow)
        inner = torch.arange(w - 1, dtype=torch.float64) + 0.5
        assert torch.allclose(out[0, 0, :, : w - 1], inner.expand(4, w - 1))
        # last column: half tap at w-1, half tap outside (zero)
        assert torch.allclose(out[0, 0, :, -1], torch.full((4,), (w - 1) / 2.0, dtype=torch.float64))

    def test_matches_scalar_oracle(self):
        g = torch.Generator().manual_seed(3)
        feat = torch.rand(1, 3, 8, 8, generator=g, dtype=torch.float64)
        flow = (torch.rand(1, 2, 8, 8, generator=g, dtype=torch.float64) - 0.5) * 6
        got = warp(feat, flow)
        want = warp_oracle(feat, flow)
        assert (got - want).abs().max() < 1e-5

    def test_in_bounds_map(self):
        flow = torch.zeros(1, 2, 4, 4)
        flow[0, 0, :, -1] = 1.0  # samples at x = 4 -> outside
        ok = flow_sample_in_bounds(flow)
        assert ok[0, :, :-1].all() and not ok[0, :, -1].any()


def cost_volume_oracle(f1, f2, d_max):
    """Triple-loop correlation of per-pixel unit-normalized features."""
    b, c, h, w = f1.shape
    n = 2 * d_max + 1
    out = torch.zeros(b, n * n, h, w, dtype=f1.dtype)

    def unit(vec):
        norm = float(np.sqrt(sum(float(v) ** 2 for v in vec)))
        return [float(v) / (norm + 1e-8) for v in vec]

    for bi in range(b):
        for y in range(h):
            for x in range(w):
                v1 = unit([f1[bi, ci, y, x] for ci in range(c)])
                k = 0
                for dv in range(-d_max, d_max + 1):
                    for du in range(-d_max, d_max + 1):
                        yy, xx = y + dv, x + du
                        if 0 <= yy < h and 0 <= xx < w:
                            v2 = unit([f2[bi, ci, yy, xx] for ci in range(c)])
                            out[bi, k, y, x] = sum(a * b2 for a, b2 in zip(v1, v2))
                        k += 1
    return out


class TestCostVolume:
    def test_channel_count(self):
        f = torch.rand(1, 4, 6, 6)
        assert cost_volume(f, f, d_max=4).shape == (1, 81, 6, 6)

    def test_self_correlation_peaks_at_zero_displacement(self):
        g = torch.Generator().manual_seed(4)
        f = torch.rand(1, 8, 10, 10, generator=g) + 0.1
        cv = cost_volume(f, f, d_max=2)
        center = (2 * 2 + 1) ** 2 // 2
        assert (cv.argmax(dim=1) == center).all()

    def test_matches_triple_loop_oracle(self):
        g = torch.Generator().manual_seed(5)
        f1 = torch.randn(1, 16, 8, 8, generator=g, dtype=torch.float64)
        f2 = torch.randn(1, 16, 8, 8, generator=g, dtype=torch.float64)
        got = cost_volume(f1, f2, d_max=2)
        want = cost_volume_oracle(f1, f2, 2)
        assert (got - want).abs().max() < 1e-5

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cost_volume(torch.rand(1, 4, 6, 6), torch.rand(1, 4, 6, 5))


class TestFlowDecoder:
    def test_output_resolutions(self, store):
        img = torch.rand(1, 3, 64, 128, generator=torch.Generator().manual_seed(6))
        with torch.no_grad():
            pyr = store.encode("fog", img)
            flow = store.estimate_flow(pyr, pyr)
        assert isinstance(flow, MultiScaleFlow)
        assert sorted(flow.levels) == [2, 3, 4, 5, 6]
        for lvl, t in flow.levels.items():
            assert t.shape == (1, 2, 64 // 2**lvl, 128 // 2**lvl)
        assert flow.final.shape == (1, 2, 64, 128)

    def test_accepts_either_encoder_pyramids(self, store):
        img = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(7))
        with torch.no_grad():
            flow = store.estimate_flow(store.encode("fog", img), store.encode("clean", img))
        assert torch.isfinite(flow.final).all()

    def test_mismatched_pyramids_rejected(self, store):
        with torch.no_grad():
            p1 = store.encode("fog", torch.zeros(1, 3, 64, 64))
            p2 = store.encode("fog", torch.zeros(1, 3, 64, 128))
        with pytest.raises(ValueError):
            store.estimate_flow(p1, p2)

    def test_encoder_weight_gradients_match_finite_differences(self, store):
        img1 = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(8)).double()
        img2 = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(9)).double()
        net = init_network(seed=3).double()

        def scalar():
            flow = net.estimate_flow(net.encode("fog", img1), net.encode("fog", img2))
            return flow.final.sum()

        loss = scalar()
        weight = net.enc_fog.stages[0][0][0].weight
        (grad,) = torch.autograd.grad(loss, weight)
        rng = np.random.default_rng(10)
        h = 1e-6
        checked = 0
        for _ in range(5):
            idx = tuple(rng.integers(0, s) for s in weight.shape)
            orig = weight.data[idx].item()
            weight.data[idx] = orig + h
            up = scalar().item()
            weight.data[idx] = orig - h
            down = scalar().item()
            weight.data[idx] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(grad[idx].item()), 1e-8)
            assert abs(fd - grad[idx].item()) / denom < 1e-3
            checked += 1
        assert checked == 5


class TestTransformDecoder:
    def test_output_shape_and_range(self, store):
        img = torch.rand(1, 3, 64, 128, generator=torch.Generator().manual_seed(11))
        with torch.no_grad():
            pyr = store.encode("fog", img)
            out = store.decode("clean", pyr, img)
        assert out.shape == img.shape
        assert (out >= 0).all() and (out <= 1).all()

    def test_pure_function(self, store):
        img = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(12))
        with torch.no_grad():
            pyr = store.encode("clean", img)
            o1 = store.decode("fog", pyr, img)
            o2 = store.decode("fog", pyr, img)
        assert torch.equal(o1, o2)


class TestDiscriminator:
    def test_score_map_shape_matches_stride_oracle(self, store):
        def out_size(n, kernel, stride, pad):
            return (n + 2 * pad - kernel) // stride + 1

        h, w = 256, 512
        for kernel, stride, pad in ((4, 2, 1), (4, 2, 1), (4, 2, 1), (4, 1, 1), (3, 1, 1)):
            h = out_size(h, kernel, stride, pad)
            w = out_size(w, kernel, stride, pad)
        assert (h, w) == (31, 63)
        with torch.no_grad():
            scores = store.discriminate("fog", torch.zeros(1, 3, 256, 512))
        assert scores.shape == (1, 1, 31, 63)

    def test_deterministic_and_finite_on_extremes(self, store):
        for img in (torch.zeros(1, 3, 64, 64), torch.ones(1, 3, 64, 64)):
            with torch.no_grad():
                s1 = store.discriminate("clean", img)
                s2 = store.discriminate("clean", img)
            assert torch.equal(s1, s2)
            assert torch.isfinite(s1).all()


class TestTrainableFlags:
    def test_flags_toggle_requires_grad(self, store):
        store.set_trainable("dec_fog", False)
        assert not store.is_trainable("dec_fog")
        assert all(not p.requires_grad for p in store.dec_fog.parameters())
        store.set_trainable("dec_fog", True)
        assert all(p.requires_grad for p in store.dec_fog.parameters())
