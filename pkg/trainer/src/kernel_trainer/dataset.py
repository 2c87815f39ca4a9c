"""Dataset generation for the kernel-operator surrogate.

Training pairs map reaction profiles from the Chebyshev-type family
lambda(x) = c cos(g acos(x)) to their backstepping kernels.  Kernels are
solved at a fine gate resolution, admitted only if the solver residual
passes, and stored subsampled on the training grid.  Solves run through
the controller package, either in-process (default; validated against the
CLI on the first samples) or by invoking the CLI for every sample.
"""
from __future__ import annotations

import json
import os
import subprocess
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

RESIDUAL_GATE = 1e-4


@dataclass(frozen=True)
class FamilySpec:
    c_range: tuple = (10.0, 60.0)
    gamma_range: tuple = (6.0, 8.0)
    eps: float = 1.0
    q: float = 10.0
    n_solve: int = 201   # gate resolution; must subsample onto n_train
    n_train: int = 101

    def __post_init__(self):
        if (self.n_solve - 1) % (self.n_train - 1) != 0:
            raise ValueError("n_solve grid must contain the n_train grid")

    def lambda_values(self, c, gamma, x):
        x = np.asarray(x, dtype=float)
        return c * np.cos(gamma * np.arccos(np.clip(x, -1.0, 1.0)))

    def draw(self, rng):
        c = float(rng.uniform(*self.c_range))
        gamma = float(rng.uniform(*self.gamma_range))
        return c, gamma


@dataclass
class KernelDataset:
    spec: FamilySpec
    params: np.ndarray        # (count, 2) of (c, gamma)
    lam: np.ndarray           # (count, n_train) sensor values
    kernels: np.ndarray       # (count, n_train, n_train) lower-triangular
    residuals: np.ndarray     # (count,) gate residuals
    skipped: list             # [(c, gamma, reason)]

    @property
    def count(self):
        return self.params.shape[0]

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        np.savez_compressed(os.path.join(directory, "dataset.npz"),
                            params=self.params, lam=self.lam,
                            kernels=self.kernels, residuals=self.residuals)
        manifest = {
            "family": asdict(self.spec),
            "count": int(self.count),
            "skipped": self.skipped,
            "residual_gate": RESIDUAL_GATE,
            "max_residual": float(np.max(self.residuals)) if self.count else 0.0,
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1)

    @classmethod
    def load(cls, directory):
        with np.load(os.path.join(directory, "dataset.npz")) as z:
            params, lam = z["params"], z["lam"]
            kernels, residuals = z["kernels"], z["residuals"]
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        fam = manifest["family"]
        fam["c_range"] = tuple(fam["c_range"])
        fam["gamma_range"] = tuple(fam["gamma_range"])
        spec = FamilySpec(**fam)
        return cls(spec=spec, params=params, lam=lam, kernels=kernels,
                   residuals=residuals, skipped=manifest["skipped"])


# ---------------------------------------------------------------------------
# solving one sample
# ---------------------------------------------------------------------------

def _solve_inprocess(args):
    """Solve + residual-gate one profile; runs inside worker processes."""
    c, gamma, eps, n_solve = args
    from rdetc.kernels import kernel_residual, solve_kernel
    from rdetc.profiles import ReactionProfile
    if c == 0.0:
        profile = ReactionProfile.constant(0.0)
    else:
        profile = ReactionProfile.chebyshev(c, gamma)
    grid = solve_kernel(profile, eps, n_solve)
    rep = kernel_residual(grid, profile, eps)
    return grid.values, rep.max_residual()


def _scenario_text(c, gamma, eps, q, n_solve):
    lam = ('{family: constant, value: 0.0}' if c == 0.0 else
           f'{{family: chebyshev, amplitude: {c!r}, frequency: {gamma!r}}}')
    return (
        "plant:\n"
        f"  eps: {eps!r}\n"
        f"  q: {q!r}\n"
        "  nx: 51\n"
        "  dt: 1.0e-4\n"
        f"  lambda: {lam}\n"
        "kernel:\n"
        "  source: exact\n"
        f"  n: {n_solve}\n"
        "trigger: {m0: -1.0, xi: 1.0, eta: 1.0, kappa: [0, 0, 0], lambda_d: 1.0}\n"
        "horizon: 0.001\n"
        "mode: event\n"
    )


def solve_via_cli(c, gamma, spec: FamilySpec, workdir=None):
    """One sample through the controller CLI; returns (values, residual).

    The solve-kernel subcommand writes the .kgrid next to a residual
    report on stdout; both are parsed here.
    """
    from .kgrid import read_kgrid
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        scn = os.path.join(tmp, "sample.yaml")
        with open(scn, "w") as fh:
            fh.write(_scenario_text(c, gamma, spec.eps, spec.q, spec.n_solve))
        out = subprocess.run(
            [sys.executable, "-m", "rdetc.cli", "solve-kernel",
             "--scenario", scn, "--out", tmp, "--no-figures"],
            capture_output=True, text=True, check=True)
        doc = read_kgrid(os.path.join(tmp, "sample_direct.kgrid"))
        residual = None
        for line in out.stdout.splitlines():
            if line.startswith("residuals:"):
                parts = dict(p.split("=") for p in line.split()[1:])
                residual = max(float(v) for v in parts.values())
        if residual is None:
            raise RuntimeError("solve-kernel printed no residual line")
        return doc["values"], residual


def generate_dataset(spec: FamilySpec, count, seed=0, workers=2,
                     solver="inprocess", include_zero=False,
                     validate_against_cli=0) -> KernelDataset:
    """Draw profiles, solve and gate their kernels, return the dataset.

    Samples whose residual exceeds the gate are skipped and logged.
    include_zero prepends the zero-amplitude edge case.  With the default
    in-process solver, the first validate_against_cli samples are also
    solved through the CLI and must match bit for bit.
    """
    rng = np.random.default_rng(seed)
    draws = [(0.0, 0.0)] if include_zero else []
    while len(draws) < count + (1 if include_zero else 0):
        draws.append(spec.draw(rng))

    stride = (spec.n_solve - 1) // (spec.n_train - 1)
    x_train = np.linspace(0.0, 1.0, spec.n_train)

    if solver == "cli":
        solved = [solve_via_cli(c, g, spec) for c, g in draws]
    elif solver == "inprocess":
        args = [(c, g, spec.eps, spec.n_solve) for c, g in draws]
        if workers > 1 and len(draws) > 4:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                solved = list(pool.map(_solve_inprocess, args, chunksize=8))
        else:
            solved = [_solve_inprocess(a) for a in args]
        for i in range(min(validate_against_cli, len(draws))):
            c, g = draws[i]
            cli_vals, _ = solve_via_cli(c, g, spec)
            if not np.array_equal(cli_vals, solved[i][0]):
                raise RuntimeError(
                    f"in-process solve of sample {i} (c={c}, gamma={g}) "
                    "does not match the CLI output")
    else:
        raise ValueError(f"unknown solver {solver!r}")

    params, lam_rows, kern_rows, res_rows, skipped = [], [], [], [], []
    for (c, g), (values, residual) in zip(draws, solved):
        if residual > RESIDUAL_GATE:
            skipped.append((c, g, f"residual {residual:.3e} above gate"))
            continue
        params.append((c, g))
        lam_rows.append(spec.lambda_values(c, g, x_train))
        kern_rows.append(values[::stride, ::stride])
        res_rows.append(residual)
    return KernelDataset(spec=spec,
                         params=np.asarray(params, dtype=float),
                         lam=np.asarray(lam_rows, dtype=float),
                         kernels=np.asarray(kern_rows, dtype=float),
                         residuals=np.asarray(res_rows, dtype=float),
                         skipped=skipped)
