"""Command-line entry point: ``epgd train-prior | denoise | eval``."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .config import DenoiseConfig
from .denoise import denoise
from .errors import EpgdError
from .imageio import load_image, save_image
from .metrics import psnr, ssim
from .patches import extract_group_arrays
from .prior import EMOptions, eigendecompose, load_prior, save_prior, train_gmm

IMAGE_EXTS = (".png", ".ppm")
_DEFAULTS = DenoiseConfig()


def _fmt_db(x: float) -> str:
    return "inf" if np.isinf(x) else f"{x:.4f}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epgd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    tp = sub.add_parser("train-prior", help="learn a patch-group mixture prior from clean images")
    tp.add_argument("--images", required=True, help="directory of clean PNG/PPM images")
    tp.add_argument("--out", required=True, help="output prior file")
    tp.add_argument("--k", type=int, default=_DEFAULTS.K)
    tp.add_argument("--patch", type=int, default=_DEFAULTS.p)
    tp.add_argument("--group", type=int, default=_DEFAULTS.M)
    tp.add_argument("--window", type=int, default=_DEFAULTS.W)
    tp.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    tp.add_argument("--max-groups", type=int, default=None, dest="max_groups")
    tp.set_defaults(func=train_prior_cmd)

    dp = sub.add_parser("denoise", help="denoise an image with a trained prior")
    dp.add_argument("--in", required=True, dest="input", help="noisy input image")
    dp.add_argument("--prior", required=True)
    dp.add_argument("--out", required=True)
    dp.add_argument("--lambda", type=float, default=_DEFAULTS.lam, dest="lam")
    dp.add_argument("--r", type=int, default=_DEFAULTS.r)
    dp.add_argument("--t", type=int, default=_DEFAULTS.T)
    dp.add_argument("--iters", type=int, default=_DEFAULTS.ite_num)
    dp.add_argument("--stride", type=int, default=_DEFAULTS.stride)
    dp.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    dp.add_argument("--ref", default=None, help="clean reference for per-iteration PSNR/SSIM")
    dp.set_defaults(func=denoise_cmd)

    ep = sub.add_parser("eval", help="PSNR and SSIM between two images")
    ep.add_argument("--a", required=True)
    ep.add_argument("--b", required=True)
    ep.set_defaults(func=eval_cmd)
    return parser


def _image_files(folder):
    if not os.path.isdir(folder):
        raise EpgdError(f"{folder} is not a directory")
    names = sorted(n for n in os.listdir(folder) if n.lower().endswith(IMAGE_EXTS))
    if not names:
        raise EpgdError(f"no PNG/PPM images found in {folder}")
    return [os.path.join(folder, n) for n in names]


def train_prior_cmd(args) -> int:
    cfg = DenoiseConfig(p=args.patch, M=args.group, W=args.window, K=args.k, seed=args.seed,
                        r=min(_DEFAULTS.r, 3 * args.patch**2))
    print(f"train-prior: p={cfg.p} M={cfg.M} W={cfg.W} K={cfg.K} seed={cfg.seed}")
    blocks = []
    for path in _image_files(args.images):
        X, _, _ = extract_group_arrays(load_image(path), cfg.p, cfg.M, cfg.W, cfg.stride)
        print(f"  {os.path.basename(path)}: {len(X)} groups")
        blocks.append(X)
    X = np.concatenate(blocks)
    if args.max_groups is not None and len(X) > args.max_groups:
        rng = np.random.default_rng(cfg.seed)
        X = X[np.sort(rng.choice(len(X), args.max_groups, replace=False))]
    print(f"  training on {len(X)} groups")
    prior = eigendecompose(train_gmm(X, cfg.K, EMOptions(seed=cfg.seed), patch_size=cfg.p))
    save_prior(prior, args.out)
    print(f"final log-likelihood: {prior.log_likelihoods[-1]:.4f} after {len(prior.log_likelihoods)} iterations")
    print("weights: " + " ".join(f"{w:.4f}" for w in prior.weights))
    return 0


def denoise_cmd(args) -> int:
    prior = load_prior(args.prior)
    noisy = load_image(args.input)
    ref = load_image(args.ref) if args.ref else None
    r = args.r
    if r > prior.dim:
        raise EpgdError(f"--r {r} exceeds the prior's patch dimension {prior.dim}")
    cfg = DenoiseConfig(p=prior.patch_size, K=prior.K, r=r, lam=args.lam, T=args.t,
                        ite_num=args.iters, stride=min(args.stride, prior.patch_size), seed=args.seed)
    print(f"denoise: p={cfg.p} M={cfg.M} W={cfg.W} K={cfg.K} r={cfg.r} lambda={cfg.lam} "
          f"T={cfg.T} iters={cfg.ite_num} stride={cfg.stride} seed={cfg.seed}")
    clock = [time.perf_counter()]

    def report(ite, x):
        now = time.perf_counter()
        line = f"  iteration {ite}: {now - clock[0]:.4f} s"
        if ref is not None:
            line += f"  PSNR: {_fmt_db(psnr(ref, x))} dB  SSIM: {ssim(ref, x):.4f}"
        print(line)
        clock[0] = now

    out = denoise(noisy, prior, cfg, callback=report)
    save_image(out, args.out)
    return 0


def eval_cmd(args) -> int:
    a, b = load_image(args.a), load_image(args.b)
    print(f"PSNR: {_fmt_db(psnr(a, b))} dB  SSIM: {ssim(a, b):.4f}")
    return 0


def main(argv=None) -> int:
    try:
        sys.stdout.reconfigure(line_buffering=True)
    except AttributeError:
        pass
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EpgdError, OSError, ValueError) as exc:
        print(f"epgd {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
