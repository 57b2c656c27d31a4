"""The three-stage alternating trainer: per-stage forward graphs, per-loss
freeze schedules, per-component Adam optimizers, and checkpointing.

Each loss backpropagates only into its scheduled components; everything else
stays bit-identical. Losses sharing a trainable set are combined into one
backward, and every touched component takes exactly one optimizer step per
stage step. Discriminators update after the generator step, once per step.
"""

import hashlib
import io
import os
import re
import sys
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .config import TrainConfig
from .data import BatchScheduler, load_pair_dataset, load_synthetic_dataset, random_crop_pair
from .losses import (
    LossReport,
    loss_epe_cross_domain,
    loss_epe_supervised,
    loss_flow_consistency,
    loss_gan_discriminator,
    loss_gan_generator,
    loss_hazeline,
    loss_l1_transform,
    loss_transform_consistency,
    photometric_consistency_mask,
)
from .networks import ParameterStore, init_network

# Per-loss trainable sets. Components absent from a loss's entry receive no
# update from it, no matter where its gradient flows.
FREEZE_SCHEDULE = {
    "synthetic": {
        "epe_fog": ("enc_fog", "dec_flow"),
        "epe_clean": ("enc_clean", "dec_flow"),
        "l1_fog_to_clean": ("enc_fog", "dec_clean"),
        "l1_clean_to_fog": ("enc_clean", "dec_fog"),
        "gan_rendered_clean": ("enc_fog", "dec_clean"),
        "gan_rendered_fog": ("enc_clean", "dec_fog"),
    },
    "real_clean": {
        "con": ("enc_fog", "enc_clean", "dec_fog", "dec_clean"),
        "epe_cross": ("enc_fog", "dec_flow"),
        "gan_g": ("enc_clean", "dec_fog"),
        "hazeline": ("enc_clean", "dec_fog"),
    },
    "real_fog": {
        "con": ("enc_fog", "enc_clean", "dec_fog", "dec_clean"),
        "flow_con": ("enc_clean", "enc_fog"),
        "gan_g": ("enc_fog", "dec_clean"),
        "hazeline": ("enc_fog", "dec_clean"),
    },
}

CHECKPOINT_MAGIC = b"FOGFLOWCKPT"
CHECKPOINT_VERSION = 1


class NonFiniteLossError(RuntimeError):
    """A stage step produced a non-finite loss; the step was aborted before
    any parameter update. Carries the offending LossReport."""

    def __init__(self, report):
        super().__init__(f"non-finite loss at step {report.step} ({report.stage}): {report.values()}")
        self.report = report


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainState:
    store: ParameterStore
    optimizers: dict
    step: int
    rng: np.random.Generator
    config: TrainConfig
    scheduler: BatchScheduler = None
    scheduler_state: dict = None
    refs: dict = field(default_factory=lambda: {"fog": None, "clean": None})


def init_state(config):
    """Fresh training state: seeded network, one Adam per component, seeded rng."""
    store = init_network(config.seed, d_max=config.d_max).to(config.device)
    optimizers = {
        name: torch.optim.Adam(
            store.component(name).parameters(),
            lr=config.lr,
            betas=(config.adam_beta1, config.adam_beta2),
        )
        for name in store.trainable_flags()
    }
    rng = np.random.default_rng([config.seed, 1])
    return TrainState(store=store, optimizers=optimizers, step=0, rng=rng, config=config)


def _scalar(t):
    return float(t.detach()) if torch.is_tensor(t) else float(t)


def _stack_images(images, device):
    return torch.stack([im.permute(2, 0, 1) for im in images]).to(device)


def _collate_synthetic(batch, device):
    return {
        "fog1": _stack_images([s.fog1 for s in batch], device),
        "fog2": _stack_images([s.fog2 for s in batch], device),
        "clean1": _stack_images([s.clean1 for s in batch], device),
        "clean2": _stack_images([s.clean2 for s in batch], device),
        "gt": torch.stack([s.flow.permute(2, 0, 1) for s in batch]).to(device),
    }


def _collate_pair(batch, device):
    return (
        _stack_images([p.frame1 for p in batch], device),
        _stack_images([p.frame2 for p in batch], device),
    )


def _apply_loss_groups(state, groups):
    """Backward each loss into its scheduled components only, then take one
    optimizer step per touched component.

    groups is a list of (loss tensor, component name tuple). Losses with an
    identical component set share one backward. Gradients flowing through
    out-of-set components are discarded, so those stay bit-identical."""
    store = state.store
    merged = {}
    for loss, comps in groups:
        key = tuple(sorted(comps))
        merged[key] = loss if key not in merged else merged[key] + loss
    collected = {}
    touched = set()
    for comps, loss in merged.items():
        if not (torch.is_tensor(loss) and loss.requires_grad):
            continue
        active = [c for c in comps if store.is_trainable(c)]
        params = [p for c in active for p in store.component(c).parameters()]
        if not params:
            continue
        grads = torch.autograd.grad(loss, params, retain_graph=True, allow_unused=True)
        for p, g in zip(params, grads):
            if g is None:
                continue
            if id(p) in collected:
                collected[id(p)] = (p, collected[id(p)][1] + g)
            else:
                collected[id(p)] = (p, g)
        touched.update(active)
    for p, g in collected.values():
        p.grad = g
    for name in sorted(touched):
        state.optimizers[name].step()
    for p, _ in collected.values():
        p.grad = None


def _discriminator_update(state, domain, real, fake):
    """One discriminator step on detached fakes; returns the loss value."""
    store = state.store
    name = "disc_fog" if domain == "fog" else "disc_clean"
    scores_real = store.discriminate(domain, real.detach())
    scores_fake = store.discriminate(domain, fake.detach())
    loss = loss_gan_discriminator(scores_real, scores_fake)
    if not torch.isfinite(loss):
        return _scalar(loss)
    if store.is_trainable(name):
        params = list(store.component(name).parameters())
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        for p, g in zip(params, grads):
            p.grad = g
        state.optimizers[name].step()
        for p in params:
            p.grad = None
    return _scalar(loss)


def _loss_weights(cfg):
    return {
        "epe_sup": cfg.w_epe_sup,
        "l1_sup": cfg.w_l1_sup,
        "con": cfg.w_con,
        "epe_cross": cfg.w_epe_cross,
        "gan_g": cfg.w_gan,
        "gan_d": cfg.w_gan,
        "hazeline": cfg.w_hazeline,
        "flow_con": cfg.w_flow_con,
    }


def _finalize_report(report, cfg):
    weights = _loss_weights(cfg)
    report.total = sum(
        weights[name] * value for name, value in report.values().items() if value is not None
    )
    return report


def step_synthetic(state, batch):
    """Fully supervised step on a synthetic batch: EPE on both domains, L1
    transformation losses, and adversarial losses on both rendered domains."""
    cfg = state.config
    store = state.store
    sched = FREEZE_SCHEDULE["synthetic"]
    x = _collate_synthetic(batch, cfg.device)

    pyr_f1 = store.encode("fog", x["fog1"])
    pyr_f2 = store.encode("fog", x["fog2"])
    flow_fog = store.estimate_flow(pyr_f1, pyr_f2)
    epe_fog = loss_epe_supervised(flow_fog, x["gt"], multiscale=cfg.multiscale_epe)
    groups = [(cfg.w_epe_sup * epe_fog, sched["epe_fog"])]
    report = LossReport(step=state.step, stage="synthetic")

    epe_clean = None
    if cfg.use_transform:
        pyr_c1 = store.encode("clean", x["clean1"])
        pyr_c2 = store.encode("clean", x["clean2"])
        flow_clean = store.estimate_flow(pyr_c1, pyr_c2)
        epe_clean = loss_epe_supervised(flow_clean, x["gt"], multiscale=cfg.multiscale_epe)
        groups.append((cfg.w_epe_sup * epe_clean, sched["epe_clean"]))
    report.epe_sup = _scalar(epe_fog) + (_scalar(epe_clean) if epe_clean is not None else 0.0)

    transform_active = cfg.use_transform and (cfg.w_l1_sup > 0 or cfg.w_gan > 0)
    rendered = {}
    if transform_active:
        ren_c1 = store.decode("clean", pyr_f1, x["fog1"])
        ren_c2 = store.decode("clean", pyr_f2, x["fog2"])
        ren_f1 = store.decode("fog", pyr_c1, x["clean1"])
        ren_f2 = store.decode("fog", pyr_c2, x["clean2"])
        rendered = {"clean": torch.cat((ren_c1, ren_c2)), "fog": torch.cat((ren_f1, ren_f2))}
        if cfg.w_l1_sup > 0:
            l1_fc = 0.5 * (loss_l1_transform(ren_c1, x["clean1"]) + loss_l1_transform(ren_c2, x["clean2"]))
            l1_cf = 0.5 * (loss_l1_transform(ren_f1, x["fog1"]) + loss_l1_transform(ren_f2, x["fog2"]))
            groups.append((cfg.w_l1_sup * l1_fc, sched["l1_fog_to_clean"]))
            groups.append((cfg.w_l1_sup * l1_cf, sched["l1_clean_to_fog"]))
            report.l1_sup = _scalar(l1_fc) + _scalar(l1_cf)
        if cfg.w_gan > 0:
            gen_clean = loss_gan_generator(store.discriminate("clean", rendered["clean"]))
            gen_fog = loss_gan_generator(store.discriminate("fog", rendered["fog"]))
            groups.append((cfg.w_gan * gen_clean, sched["gan_rendered_clean"]))
            groups.append((cfg.w_gan * gen_fog, sched["gan_rendered_fog"]))
            report.gan_g = _scalar(gen_clean) + _scalar(gen_fog)

    if not report.finite():
        raise NonFiniteLossError(_finalize_report(report, cfg))
    _apply_loss_groups(state, groups)

    if transform_active and cfg.w_gan > 0:
        real_clean = torch.cat((x["clean1"], x["clean2"]))
        real_fog = torch.cat((x["fog1"], x["fog2"]))
        gan_d = _discriminator_update(state, "clean", real_clean, rendered["clean"])
        gan_d += _discriminator_update(state, "fog", real_fog, rendered["fog"])
        report.gan_d = gan_d

    _finalize_report(report, cfg)
    if not report.finite():
        raise NonFiniteLossError(report)
    state.step += 1
    return report


def _forward_real_clean(store, frame1, frame2, cfg):
    """Feedforward chain of the real-clean stage; returns every intermediate."""
    out = {}
    out["pyr_c1"] = store.encode("clean", frame1)
    out["pyr_c2"] = store.encode("clean", frame2)
    out["ren_f1"] = store.decode("fog", out["pyr_c1"], frame1)
    out["ren_f2"] = store.decode("fog", out["pyr_c2"], frame2)
    out["pyr_rf1"] = store.encode("fog", out["ren_f1"])
    out["pyr_rf2"] = store.encode("fog", out["ren_f2"])
    out["cyc_c1"] = store.decode("clean", out["pyr_rf1"], out["ren_f1"])
    out["cyc_c2"] = store.decode("clean", out["pyr_rf2"], out["ren_f2"])
    if cfg.w_epe_cross > 0:
        out["flow_clean"] = store.estimate_flow(out["pyr_c1"], out["pyr_c2"]).final
        out["flow_fog"] = store.estimate_flow(out["pyr_rf1"], out["pyr_rf2"]).final
    return out


def step_real_clean(state, batch, fog_real=None):
    """Unsupervised step on real clean pairs: cycle consistency, masked
    cross-domain EPE against the constant clean-branch flow, adversarial and
    hazeline losses on the rendered fog, plus a fog-discriminator update when
    real fog-domain images are supplied."""
    cfg = state.config
    store = state.store
    sched = FREEZE_SCHEDULE["real_clean"]
    frame1, frame2 = _collate_pair(batch, cfg.device)
    fwd = _forward_real_clean(store, frame1, frame2, cfg)
    report = LossReport(step=state.step, stage="real_clean")
    groups = []

    if cfg.w_con > 0:
        con = loss_transform_consistency(frame1, frame2, fwd["cyc_c1"], fwd["cyc_c2"])
        groups.append((cfg.w_con * con, sched["con"]))
        report.con = _scalar(con)

    if cfg.w_epe_cross > 0:
        if cfg.use_mask_clean:
            mask = photometric_consistency_mask(frame1, frame2, fwd["flow_clean"].detach(), cfg.mask_tau)
        else:
            mask = torch.ones(frame1.shape[0], *frame1.shape[-2:], device=frame1.device)
        if float(mask.sum()) == 0:
            report.epe_cross = 0.0
            report.skipped = report.skipped + ("epe_cross",)
        else:
            epe_cross = loss_epe_cross_domain(fwd["flow_fog"], fwd["flow_clean"], mask, stop_target="b")
            groups.append((cfg.w_epe_cross * epe_cross, sched["epe_cross"]))
            report.epe_cross = _scalar(epe_cross)

    rendered_fog = torch.cat((fwd["ren_f1"], fwd["ren_f2"]))
    if cfg.w_gan > 0:
        gan_g = loss_gan_generator(store.discriminate("fog", rendered_fog))
        groups.append((cfg.w_gan * gan_g, sched["gan_g"]))
        report.gan_g = _scalar(gan_g)

    if cfg.use_hazeline and cfg.w_hazeline > 0:
        hazeline = 0.5 * (
            loss_hazeline(frame1, fwd["ren_f1"], patch=cfg.patch_size)
            + loss_hazeline(frame2, fwd["ren_f2"], patch=cfg.patch_size)
        )
        groups.append((cfg.w_hazeline * hazeline, sched["hazeline"]))
        report.hazeline = _scalar(hazeline)

    if not report.finite():
        raise NonFiniteLossError(_finalize_report(report, cfg))
    _apply_loss_groups(state, groups)

    if cfg.w_gan > 0 and fog_real is not None:
        report.gan_d = _discriminator_update(state, "fog", fog_real, rendered_fog)

    _finalize_report(report, cfg)
    if not report.finite():
        raise NonFiniteLossError(report)
    state.step += 1
    return report


def _forward_real_fog(store, frame1, frame2, cfg):
    """Feedforward chain of the real-fog stage; returns every intermediate."""
    out = {}
    out["pyr_f1"] = store.encode("fog", frame1)
    out["pyr_f2"] = store.encode("fog", frame2)
    out["ren_c1"] = store.decode("clean", out["pyr_f1"], frame1)
    out["ren_c2"] = store.decode("clean", out["pyr_f2"], frame2)
    out["pyr_rc1"] = store.encode("clean", out["ren_c1"])
    out["pyr_rc2"] = store.encode("clean", out["ren_c2"])
    out["cyc_f1"] = store.decode("fog", out["pyr_rc1"], out["ren_c1"])
    out["cyc_f2"] = store.decode("fog", out["pyr_rc2"], out["ren_c2"])
    if cfg.w_flow_con > 0:
        out["flow_fog"] = store.estimate_flow(out["pyr_f1"], out["pyr_f2"]).final
        out["flow_clean"] = store.estimate_flow(out["pyr_rc1"], out["pyr_rc2"]).final
    return out


def step_real_fog(state, batch, clean_real=None):
    """Unsupervised step on real fog pairs: fog-side cycle consistency,
    adversarial and hazeline losses on the rendered clean images, and the
    flow-consistency loss that updates only the two encoders."""
    cfg = state.config
    store = state.store
    sched = FREEZE_SCHEDULE["real_fog"]
    frame1, frame2 = _collate_pair(batch, cfg.device)
    fwd = _forward_real_fog(store, frame1, frame2, cfg)
    report = LossReport(step=state.step, stage="real_fog")
    groups = []

    if cfg.w_con > 0:
        con = loss_transform_consistency(frame1, frame2, fwd["cyc_f1"], fwd["cyc_f2"])
        groups.append((cfg.w_con * con, sched["con"]))
        report.con = _scalar(con)

    if cfg.w_flow_con > 0:
        if cfg.use_mask_fog:
            mask = photometric_consistency_mask(frame1, frame2, fwd["flow_fog"].detach(), cfg.mask_tau)
        else:
            mask = torch.ones(frame1.shape[0], *frame1.shape[-2:], device=frame1.device)
        if float(mask.sum()) == 0:
            report.flow_con = 0.0
            report.skipped = report.skipped + ("flow_con",)
        else:
            flow_con = loss_flow_consistency(fwd["flow_fog"], fwd["flow_clean"], mask)
            groups.append((cfg.w_flow_con * flow_con, sched["flow_con"]))
            report.flow_con = _scalar(flow_con)

    rendered_clean = torch.cat((fwd["ren_c1"], fwd["ren_c2"]))
    if cfg.w_gan > 0:
        gan_g = loss_gan_generator(store.discriminate("clean", rendered_clean))
        groups.append((cfg.w_gan * gan_g, sched["gan_g"]))
        report.gan_g = _scalar(gan_g)

    if cfg.use_hazeline and cfg.w_hazeline > 0:
        # rendered clean is the clean endpoint; the input fog frame anchors
        # the atmospheric chromaticity
        hazeline = 0.5 * (
            loss_hazeline(fwd["ren_c1"], frame1, patch=cfg.patch_size)
            + loss_hazeline(fwd["ren_c2"], frame2, patch=cfg.patch_size)
        )
        groups.append((cfg.w_hazeline * hazeline, sched["hazeline"]))
        report.hazeline = _scalar(hazeline)

    if not report.finite():
        raise NonFiniteLossError(_finalize_report(report, cfg))
    _apply_loss_groups(state, groups)

    if cfg.w_gan > 0 and clean_real is not None:
        report.gan_d = _discriminator_update(state, "clean", clean_real, rendered_clean)

    _finalize_report(report, cfg)
    if not report.finite():
        raise NonFiniteLossError(report)
    state.step += 1
    return report


def _canonical(obj):
    """Rebuild containers with interned string keys so the pickle stream is a
    pure function of the values; otherwise save -> load -> save would differ
    in string memoization even though the content is identical."""
    if torch.is_tensor(obj):
        return obj
    if isinstance(obj, str):
        return sys.intern(obj)
    if isinstance(obj, dict):
        return {_canonical(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_canonical(v) for v in obj)
    return obj


def save_checkpoint(state, path):
    """Write the full training state: component weights, optimizer moments,
    step counter, rng and scheduler state, behind a sha256 integrity check."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "d_max": state.store.d_max,
        "model": {name: state.store.component(name).state_dict() for name in sorted(state.optimizers)},
        "optim": {name: state.optimizers[name].state_dict() for name in sorted(state.optimizers)},
        "trainable": state.store.trainable_flags(),
        "rng": state.rng.bit_generator.state,
        "config": asdict(state.config),
        "scheduler": (
            state.scheduler.state_dict() if state.scheduler is not None else state.scheduler_state
        ),
        "refs": state.refs,
    }
    buf = io.BytesIO()
    torch.save(_canonical(payload), buf)
    blob = buf.getvalue()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(hashlib.sha256(blob).digest())
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path, device="cpu"):
    """Rebuild a TrainState from a checkpoint; any corruption raises
    CheckpointError without partial state."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head = len(CHECKPOINT_MAGIC)
    if raw[:head] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    digest, blob = raw[head : head + 32], raw[head + 32 :]
    if hashlib.sha256(blob).digest() != digest:
        raise CheckpointError(f"{path}: integrity check failed")
    try:
        payload = torch.load(io.BytesIO(blob), map_location=device, weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable payload: {exc}") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {payload.get('version')!r}")
    config = TrainConfig(**payload["config"])
    store = ParameterStore(d_max=payload["d_max"]).to(device)
    for name, sd in payload["model"].items():
        store.component(name).load_state_dict(sd)
    store.load_trainable_flags(payload["trainable"])
    optimizers = {
        name: torch.optim.Adam(
            store.component(name).parameters(),
            lr=config.lr,
            betas=(config.adam_beta1, config.adam_beta2),
        )
        for name in payload["model"]
    }
    for name, sd in payload["optim"].items():
        optimizers[name].load_state_dict(sd)
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng"]
    return TrainState(
        store=store,
        optimizers=optimizers,
        step=payload["step"],
        rng=rng,
        config=config,
        scheduler_state=payload["scheduler"],
        refs=payload["refs"],
    )


def _prune_checkpoints(out_dir, keep):
    if keep <= 0:
        return
    found = []
    for name in os.listdir(out_dir):
        m = re.fullmatch(r"ckpt_(\d+)\.pt", name)
        if m:
            found.append((int(m.group(1)), name))
    for _, name in sorted(found)[:-keep]:
        os.remove(os.path.join(out_dir, name))


def load_datasets(config):
    """All three datasets per the manifests; synthetic fog parameters come
    from a dedicated seed so resuming reproduces the same renders."""
    dataset_rng = np.random.default_rng([config.seed, 0])
    synthetic = load_synthetic_dataset(
        config.synthetic_manifest,
        dataset_rng,
        beta_range=(config.beta_min, config.beta_max),
        atmo_base_range=(config.atmo_base_min, config.atmo_base_max),
        atmo_spread=config.atmo_spread,
    )
    return {
        "synthetic": synthetic,
        "real_clean": load_pair_dataset(config.clean_manifest),
        "real_fog": load_pair_dataset(config.fog_manifest),
    }


def train(config, resume=None, datasets=None, on_report=None):
    """Drive the scheduler through total_cycles synthetic/clean/fog cycles.

    Config and dataset problems surface before the first step. Returns the
    final TrainState; the loss log goes to config.log_csv as CSV."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    if datasets is None:
        datasets = load_datasets(config)
    for name in ("synthetic", "real_clean", "real_fog"):
        if not datasets.get(name):
            raise ValueError(f"dataset {name!r} is empty")

    if resume is not None:
        state = load_checkpoint(resume, device=config.device)
        state.config = config
    else:
        state = init_state(config)
    scheduler = BatchScheduler(datasets, config.batch_size, state.rng, state=state.scheduler_state)
    state.scheduler = scheduler

    log_path = config.resolved_log_csv()
    os.makedirs(os.path.dirname(os.path.abspath(log_path)), exist_ok=True)
    log = open(log_path, "a" if resume is not None else "w")
    try:
        if resume is None:
            log.write(LossReport.csv_header() + "\n")
        total_steps = config.total_cycles * len(FREEZE_SCHEDULE)
        while state.step < total_steps:
            tag, items = scheduler.next_batch()
            items = [random_crop_pair(s, state.rng, config.crop_size()) for s in items]
            try:
                if tag == "synthetic":
                    report = step_synthetic(state, items)
                    state.refs["fog"] = torch.cat(
                        (_stack_images([s.fog1 for s in items], config.device),
                         _stack_images([s.fog2 for s in items], config.device))
                    )
                    state.refs["clean"] = torch.cat(
                        (_stack_images([s.clean1 for s in items], config.device),
                         _stack_images([s.clean2 for s in items], config.device))
                    )
                elif tag == "real_clean":
                    if not config.use_transform:
                        continue
                    report = step_real_clean(state, items, fog_real=state.refs["fog"])
                    state.refs["clean"] = torch.cat(_collate_pair(items, config.device))
                else:
                    if not config.use_transform:
                        continue
                    report = step_real_fog(state, items, clean_real=state.refs["clean"])
                    state.refs["fog"] = torch.cat(_collate_pair(items, config.device))
            except NonFiniteLossError as err:
                log.write(err.report.csv_row() + "\n")
                log.flush()
                raise
            log.write(report.csv_row() + "\n")
            log.flush()
            if on_report is not None:
                on_report(report)
            if config.checkpoint_every > 0 and state.step % config.checkpoint_every == 0:
                save_checkpoint(state, os.path.join(config.out_dir, f"ckpt_{state.step}.pt"))
                _prune_checkpoints(config.out_dir, config.keep_checkpoints)
        save_checkpoint(state, os.path.join(config.out_dir, f"ckpt_{state.step}.pt"))
        _prune_checkpoints(config.out_dir, config.keep_checkpoints)
    finally:
        log.close()
    return state
