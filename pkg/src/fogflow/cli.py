"""Command-line interface: training, evaluation, fog rendering, flow
estimation, defogging, and flow visualization.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

import argparse
import sys

import torch
import torch.nn.functional as F

from . import fogphys
from .config import load_config
from .data import load_depth, load_image, read_flo, save_image, write_flo
from .metrics import evaluate_directories
from .training import load_checkpoint, train
from .visualize import flow_to_color


def _build_parser():
    parser = argparse.ArgumentParser(prog="fogflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the three-stage training loop")
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("eval", help="score predicted .flo files against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--mask-dir", help="per-pair validity masks (nonzero = valid)")
    p.add_argument("--delta", type=float, action="append", help="bad-pixel threshold (repeatable)")
    p.add_argument("--out", help="CSV output path")

    p = sub.add_parser("render-fog", help="physically render fog over a clean image")
    p.add_argument("--clean", required=True)
    p.add_argument("--depth", required=True, help="16-bit PNG (value/256 m) or .npy meters")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--atmo", required=True, help="atmospheric light as r,g,b in [0,1]")
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate-flow", help="predict flow for a frame pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--frame1", required=True)
    p.add_argument("--frame2", required=True)
    p.add_argument("--domain", choices=("fog", "clean"), required=True)
    p.add_argument("--out-flo", required=True)
    p.add_argument("--out-png", help="also write the color-coded flow")

    p = sub.add_parser("defog", help="transform a fog image to its clean version")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("visualize", help="color-code a .flo file")
    p.add_argument("--flo", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-mag", type=float, help="saturation normalization magnitude")
    return parser


def _pad_to_multiple(img, multiple=64):
    h, w = img.shape[-2:]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph or pw:
        img = F.pad(img, (0, pw, 0, ph), mode="replicate")
    return img, (h, w)


def _load_bchw(path):
    return load_image(path).permute(2, 0, 1).unsqueeze(0)


def _cmd_train(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    state = train(config, resume=args.resume)
    print(f"finished at step {state.step}; checkpoints in {config.out_dir}")
    return 0


def _cmd_eval(args):
    deltas = tuple(args.delta) if args.delta else (3.0, 5.0)
    rows, aggregate = evaluate_directories(args.pred_dir, args.gt_dir, args.mask_dir, deltas)
    header = "image_id,epe," + ",".join(f"bad{d:g}" for d in deltas)
    lines = [header]
    for name, rep in rows:
        cells = [name, f"{rep.epe:.6f}"] + [f"{rep.bad_pixel[d]:.6f}" for d in deltas]
        lines.append(",".join(cells))
    agg = ["aggregate", f"{aggregate.epe:.6f}"] + [f"{aggregate.bad_pixel[d]:.6f}" for d in deltas]
    lines.append(",".join(agg))
    text = "\n".join(lines)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def _cmd_render_fog(args):
    clean = load_image(args.clean)
    depth = load_depth(args.depth)
    atmo = tuple(float(c) for c in args.atmo.split(","))
    if len(atmo) != 3:
        raise ValueError("--atmo needs three comma-separated channels")
    alpha = fogphys.alpha_from_depth(depth, args.beta)
    fog = fogphys.render_fog(clean, alpha, atmo)
    save_image(args.out, fog)
    return 0


def _cmd_estimate_flow(args):
    state = load_checkpoint(args.ckpt)
    img1, _ = _pad_to_multiple(_load_bchw(args.frame1))
    img2, (h, w) = _pad_to_multiple(_load_bchw(args.frame2))
    with torch.no_grad():
        pyr1 = state.store.encode(args.domain, img1)
        pyr2 = state.store.encode(args.domain, img2)
        flow = state.store.estimate_flow(pyr1, pyr2).final[0, :, :h, :w]
    flow_hw2 = flow.permute(1, 2, 0).numpy()
    write_flo(args.out_flo, flow_hw2)
    if args.out_png:
        save_image(args.out_png, flow_to_color(flow_hw2))
    return 0


def _cmd_defog(args):
    state = load_checkpoint(args.ckpt)
    img, (h, w) = _pad_to_multiple(_load_bchw(args.image))
    with torch.no_grad():
        pyr = state.store.encode("fog", img)
        clean = state.store.decode("clean", pyr, img)[0, :, :h, :w]
    save_image(args.out, clean.permute(1, 2, 0))
    return 0


def _cmd_visualize(args):
    flow = read_flo(args.flo)
    save_image(args.out, flow_to_color(flow, max_mag=args.max_mag))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "render-fog": _cmd_render_fog,
    "estimate-flow": _cmd_estimate_flow,
    "defog": _cmd_defog,
    "visualize": _cmd_visualize,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        print(f"fogflow {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
