"""Trainer command line: generate a dataset, train, export learned kernels.

    kernel-trainer generate --out data/ --count 900 [--seed 0] [--include-zero]
    kernel-trainer train --data data/ --out run/ [--epochs N] [--target 0.02]
    kernel-trainer export --model run/model.pt --amplitude 50 --frequency 8 \
        --n 101 --eps 1 --q 10 --out run/learned.kgrid
    kernel-trainer evaluate --model run/model.pt --data data/
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np


def cmd_generate(args):
    from .dataset import FamilySpec, KernelDataset, generate_dataset
    spec = FamilySpec(c_range=(args.c_min, args.c_max),
                      gamma_range=(args.gamma_min, args.gamma_max),
                      eps=args.eps, q=args.q,
                      n_solve=args.n_solve, n_train=args.n_train)
    ds = generate_dataset(spec, args.count, seed=args.seed, workers=args.workers,
                          solver=args.solver, include_zero=args.include_zero,
                          validate_against_cli=args.validate_cli)
    ds.save(args.out)
    print(f"wrote {ds.count} entries to {args.out} "
          f"({len(ds.skipped)} skipped, max residual "
          f"{np.max(ds.residuals) if ds.count else 0.0:.3e})")
    return 0


def cmd_train(args):
    import torch

    from .dataset import KernelDataset
    from .train import Hyperparams, save_model, train_operator
    torch.set_num_threads(args.threads)
    ds = KernelDataset.load(args.data)
    hp = Hyperparams(p=args.p, lr=args.lr, epochs=args.epochs,
                     batch=args.batch, seed=args.seed,
                     target_val_rel=args.target)
    model, report = train_operator(ds, hp, verbose=True)
    os.makedirs(args.out, exist_ok=True)
    save_model(model, os.path.join(args.out, "model.pt"))
    report.save(os.path.join(args.out, "train_report.json"))
    print(f"train rel-Linf {report.train_rel_linf:.4f}  "
          f"val rel-Linf {report.val_rel_linf:.4f}  "
          f"({report.epochs} epochs)")
    return 0


def cmd_export(args):
    from .export import export_kernel_grid
    from .train import load_model
    model = load_model(args.model)
    x = np.linspace(0.0, 1.0, args.n)
    lam = args.amplitude * np.cos(args.frequency * np.arccos(np.clip(x, -1, 1)))
    export_kernel_grid(model, lam, args.n, args.eps, args.q, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args):
    import torch

    from .dataset import KernelDataset
    from .model import triangle_points
    from .train import load_model, rel_linf_errors
    ds = KernelDataset.load(args.data)
    model = load_model(args.model)
    pts, (ii, jj) = triangle_points(ds.spec.n_train)
    lam = torch.as_tensor(ds.lam.astype(np.float32))
    targets = torch.as_tensor(ds.kernels[:, ii, jj].astype(np.float32))
    errs = rel_linf_errors(model, lam, targets, torch.as_tensor(pts))
    print(f"rel-Linf over {ds.count} entries: "
          f"max {np.max(errs):.4f}  mean {np.mean(errs):.4f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="kernel-trainer", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=900)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=2)
    g.add_argument("--solver", choices=("inprocess", "cli"), default="inprocess")
    g.add_argument("--validate-cli", type=int, default=2,
                   help="in-process samples to cross-check against the CLI")
    g.add_argument("--include-zero", action="store_true")
    g.add_argument("--c-min", type=float, default=10.0)
    g.add_argument("--c-max", type=float, default=60.0)
    g.add_argument("--gamma-min", type=float, default=6.0)
    g.add_argument("--gamma-max", type=float, default=8.0)
    g.add_argument("--eps", type=float, default=1.0)
    g.add_argument("--q", type=float, default=10.0)
    g.add_argument("--n-solve", type=int, default=201)
    g.add_argument("--n-train", type=int, default=101)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--p", type=int, default=128)
    t.add_argument("--lr", type=float, default=1.5e-3)
    t.add_argument("--epochs", type=int, default=400)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--target", type=float, default=None)
    t.add_argument("--threads", type=int, default=2)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("export")
    e.add_argument("--model", required=True)
    e.add_argument("--amplitude", type=float, required=True)
    e.add_argument("--frequency", type=float, required=True)
    e.add_argument("--n", type=int, default=101)
    e.add_argument("--eps", type=float, default=1.0)
    e.add_argument("--q", type=float, default=10.0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export)

    v = sub.add_parser("evaluate")
    v.add_argument("--model", required=True)
    v.add_argument("--data", required=True)
    v.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
