"""Scenario configuration: parsing, validation, and orchestrated runs.

A scenario file is YAML with explicit units in comments; every reference
parameter has a named key.  parse_scenario performs all cross-field
checks (CFL, positivity, m0 < 0, file existence) and reports each
violated constraint with its field name.
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .diagnostics import SimTrace, build_trace, event_stats, fit_decay_rate
from .errors import ConfigError, ValidationError
from .kernels import check_assumption1
from .plant import PlantConfig
from .profiles import ReactionProfile
from .provider import KernelSource, ProvidedKernels, provide_kernel, theoretical_constants
from .trigger import (DwellBound, TriggerConfig, dwell_time_bound,
                      epsilon_constants, r0_weight, run_closed_loop,
                      select_gain_params, select_trigger_params)

VALID_MODES = ("event", "continuous", "open-loop")


@dataclass(frozen=True)
class Scenario:
    """Validated scenario; field names mirror the YAML keys."""
    name: str
    eps: float
    q: float
    nx: int
    dt: float
    profile: ReactionProfile
    kernel_source: KernelSource | None
    kernel_n: int
    m0: float
    xi: float
    eta: float
    kappa: tuple | str          # (k1, k2, k3) or "auto"
    lambda_d: float | str       # value or "auto"
    initial_condition: object   # "cos_pi_x" or sample array
    horizon: float
    mode: str
    stride: int
    raw: dict = field(repr=False, default_factory=dict)

    def initial_values(self, grid):
        if isinstance(self.initial_condition, str):
            if self.initial_condition == "cos_pi_x":
                return np.cos(np.pi * grid)
            raise ConfigError(
                f"unknown initial_condition tag {self.initial_condition!r}",
                field="initial_condition")
        u = np.asarray(self.initial_condition, dtype=float)
        if u.size != grid.size:
            raise ConfigError(
                f"initial_condition has {u.size} samples, plant grid has {grid.size}",
                field="initial_condition")
        return u


def _profile_from_dict(d, errors):
    if "family" in d:
        fam = d["family"]
        if fam == "chebyshev":
            return ReactionProfile.chebyshev(d.get("amplitude", 1.0),
                                             d.get("frequency", 1.0))
        if fam == "constant":
            return ReactionProfile.constant(d.get("value", 0.0))
        errors.append(("plant.lambda.family", f"unknown family {fam!r}"))
        return None
    if "samples" in d:
        try:
            return ReactionProfile.from_samples(d["samples"])
        except ValidationError as exc:
            errors.append(("plant.lambda.samples", str(exc)))
            return None
    errors.append(("plant.lambda", "needs either a family or samples"))
    return None


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file; raises ConfigError naming every
    violated field."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario {path} does not parse: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("scenario file must hold a mapping")
    return scenario_from_dict(raw, name=os.path.splitext(os.path.basename(path))[0],
                              base_dir=os.path.dirname(os.path.abspath(path)))


def scenario_from_dict(raw: dict, name="scenario", base_dir=".") -> Scenario:
    errors = []

    def need(section, key, typ=float, default=None, positive=False):
        sec = raw.get(section, {})
        if key not in sec:
            if default is not None:
                return default
            errors.append((f"{section}.{key}", "missing"))
            return None
        try:
            v = typ(sec[key])
        except (TypeError, ValueError):
            errors.append((f"{section}.{key}", f"not a {typ.__name__}"))
            return None
        if positive and v <= 0:
            errors.append((f"{section}.{key}", "must be positive"))
        return v

    eps = need("plant", "eps", positive=True)
    q = need("plant", "q", positive=True)
    nx = need("plant", "nx", typ=int)
    dt = need("plant", "dt", positive=True)
    if nx is not None and nx < 3:
        errors.append(("plant.nx", "must be at least 3"))
    profile = None
    if isinstance(raw.get("plant", {}).get("lambda"), dict):
        profile = _profile_from_dict(raw["plant"]["lambda"], errors)
    else:
        errors.append(("plant.lambda", "missing"))
    # CFL cross-check
    if None not in (eps, nx, dt) and nx >= 3:
        dx = 1.0 / (nx - 1)
        cfl = eps * dt / dx ** 2
        if cfl > 0.5:
            errors.append(("plant.dt", f"CFL number {cfl:.3f} exceeds 1/2"))

    kernel_raw = raw.get("kernel")
    kernel_source = None
    kernel_n = 0
    if kernel_raw is not None:
        kind = kernel_raw.get("source", "exact")
        kernel_n = int(kernel_raw.get("n", 101))
        if kernel_n < 5:
            errors.append(("kernel.n", "must be at least 5"))
        if kind == "file":
            p = kernel_raw.get("path")
            if not p:
                errors.append(("kernel.path", "missing for file source"))
            else:
                if not os.path.isabs(p):
                    p = os.path.join(base_dir, p)
                if not os.path.exists(p):
                    errors.append(("kernel.path", f"file not found: {p}"))
                else:
                    kernel_source = KernelSource(kind="file", path=p)
        elif kind == "perturbed":
            iota = float(kernel_raw.get("iota", 0.0))
            if iota < 0:
                errors.append(("kernel.iota", "must be >= 0"))
            kernel_source = KernelSource(kind="perturbed", iota=iota,
                                         seed=int(kernel_raw.get("seed", 0)))
        elif kind == "exact":
            kernel_source = KernelSource(kind="exact")
        else:
            errors.append(("kernel.source", f"unknown source {kind!r}"))

    m0 = need("trigger", "m0")
    if m0 is not None and m0 >= 0:
        errors.append(("trigger.m0", "must be negative"))
    xi = need("trigger", "xi", positive=True)
    eta = need("trigger", "eta", positive=True)
    trig_raw = raw.get("trigger", {})
    kappa = trig_raw.get("kappa", "auto")
    if kappa != "auto":
        try:
            kappa = tuple(float(v) for v in kappa)
            if len(kappa) != 3:
                raise ValueError
            if any(v < 0 for v in kappa):
                errors.append(("trigger.kappa", "entries must be >= 0"))
        except (TypeError, ValueError):
            errors.append(("trigger.kappa", 'must be "auto" or a list of 3 numbers'))
    lambda_d = trig_raw.get("lambda_d", "auto")
    if lambda_d != "auto":
        try:
            lambda_d = float(lambda_d)
            if lambda_d <= 0:
                errors.append(("trigger.lambda_d", "must be positive"))
        except (TypeError, ValueError):
            errors.append(("trigger.lambda_d", 'must be "auto" or a number'))

    mode = raw.get("mode", "event")
    if mode not in VALID_MODES:
        errors.append(("mode", f"must be one of {VALID_MODES}"))
    if kernel_source is None and mode != "open-loop":
        errors.append(("kernel", "required unless mode is open-loop"))
    if (kappa == "auto" or lambda_d == "auto") and kernel_source is not None \
            and kernel_source.kind == "perturbed":
        errors.append(("trigger.kappa",
                       "auto selection requires an exact or file kernel source"))

    horizon = raw.get("horizon")
    if horizon is None:
        errors.append(("horizon", "missing"))
    else:
        horizon = float(horizon)
        if horizon <= 0:
            errors.append(("horizon", "must be positive"))
    stride = int(raw.get("stride", 1))
    if stride < 1:
        errors.append(("stride", "must be >= 1"))
    ic = raw.get("initial_condition", "cos_pi_x")

    if errors:
        listing = "; ".join(f"{f}: {msg}" for f, msg in errors)
        exc = ConfigError(f"invalid scenario: {listing}", field=errors[0][0])
        exc.fields = [f for f, _ in errors]
        raise exc

    return Scenario(name=name, eps=eps, q=q, nx=nx, dt=dt, profile=profile,
                    kernel_source=kernel_source, kernel_n=kernel_n,
                    m0=m0, xi=xi, eta=eta, kappa=kappa, lambda_d=lambda_d,
                    initial_condition=ic, horizon=horizon, mode=mode,
                    stride=stride, raw=raw)


def override_scenario(scenario: Scenario, dotted_key: str, value) -> Scenario:
    """New scenario with raw[dotted.key] = value, re-validated."""
    raw = copy.deepcopy(scenario.raw)
    node = raw
    parts = dotted_key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return scenario_from_dict(raw, name=f"{scenario.name}[{dotted_key}={value}]")


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreparedRun:
    scenario: Scenario
    plant: PlantConfig
    provided: ProvidedKernels | None
    trigger: TriggerConfig | None
    epsc: object
    dwell: DwellBound | None
    r0: float | None
    theory: object


def prepare_run(scenario: Scenario, mode: str | None = None) -> PreparedRun:
    """Resolve kernels and trigger parameters for a scenario."""
    mode = mode or scenario.mode
    plant = PlantConfig(eps=scenario.eps, q=scenario.q, profile=scenario.profile,
                        nx=scenario.nx, dt=scenario.dt)
    provided = None
    epsc = None
    trigger = None
    dwell = None
    r0 = None
    theory = None
    if scenario.kernel_source is not None:
        provided = provide_kernel(scenario.kernel_source, scenario.profile,
                                  scenario.eps, scenario.kernel_n, scenario.q)
        epsc = epsilon_constants(provided.gain, scenario.profile,
                                 scenario.eps, scenario.q)
        theory = theoretical_constants(provided.iota_estimate,
                                       scenario.profile.lambda_bar,
                                       scenario.eps, scenario.q,
                                       provided.inverse, scenario.eta)
        if scenario.kappa == "auto":
            kappa = select_trigger_params(epsc, scenario.xi)
        else:
            kappa = scenario.kappa
        if scenario.lambda_d == "auto":
            _, _, lambda_d = select_gain_params(
                kappa, theory.q0, theory.q1, provided.gain.wp,
                scenario.eps, provided.iota_estimate)
        else:
            lambda_d = scenario.lambda_d
        r0 = r0_weight(kappa, theory.q0, theory.q1, scenario.eps)
        trigger = TriggerConfig(xi=scenario.xi, eta=scenario.eta,
                                kappa1=kappa[0], kappa2=kappa[1], kappa3=kappa[2],
                                lambda_d=lambda_d, m0=scenario.m0)
        dwell = dwell_time_bound(epsc.eps1, scenario.xi, lambda_d, scenario.eta)
    elif mode != "open-loop":
        raise ConfigError("scenario has no kernel source; only open-loop runs",
                          field="kernel")
    else:
        trigger = TriggerConfig(xi=scenario.xi, eta=scenario.eta, kappa1=0.0,
                                kappa2=0.0, kappa3=0.0, lambda_d=1.0,
                                m0=scenario.m0)
    return PreparedRun(scenario=scenario, plant=plant, provided=provided,
                       trigger=trigger, epsc=epsc, dwell=dwell, r0=r0,
                       theory=theory)


def run_prepared(prep: PreparedRun, mode: str | None = None) -> SimTrace:
    scenario = prep.scenario
    mode = mode or scenario.mode
    u0 = scenario.initial_values(prep.plant.grid)
    gain = prep.provided.gain if prep.provided is not None else _zero_gain(prep.plant)
    result = run_closed_loop(prep.plant, gain, prep.trigger, u0,
                             scenario.horizon, mode=mode)
    direct = prep.provided.direct if prep.provided is not None else None
    meta = {
        "scenario": scenario.name,
        "mode": mode,
        "kernel_source": scenario.kernel_source.kind if scenario.kernel_source else "none",
        "iota_estimate": prep.provided.iota_estimate if prep.provided else 0.0,
    }
    return build_trace(result, direct, prep.r0, metadata=meta)


def _zero_gain(plant: PlantConfig):
    from .kernels import GainTable
    z = np.zeros(plant.nx)
    return GainTable(samples=z, wp=plant.q, dK=z.copy(), d2K=z.copy())


def summarize(prep: PreparedRun, trace: SimTrace, mode: str) -> dict:
    """Summary row for one run: fitted rates, event statistics, the dwell
    bound comparison, the heat-exchange margin, and iota_estimate."""
    scenario = prep.scenario
    t_end = float(trace.t[-1])
    window = (0.1 * t_end, t_end)
    ratio = float(trace.norm_u[-1] / trace.norm_u[0]) if trace.norm_u[0] else float("nan")
    try:
        rate_norm = fit_decay_rate(trace.t, trace.norm_u, window)
    except ValidationError:
        rate_norm = float("nan")
    try:
        rate_omega = fit_decay_rate(trace.t, trace.Omega, window)
    except ValidationError:
        rate_omega = float("nan")

    closed = mode in ("event", "continuous")
    if closed and trace.event_times.size:
        count, min_dwell, mean_dwell, frac = event_stats(trace)
    else:
        count, min_dwell, mean_dwell, frac = 0, float("nan"), float("nan"), 0.0
    a1 = check_assumption1(scenario.profile, scenario.q, scenario.eps)
    ev_rows = np.flatnonzero(trace.event)
    V_events = trace.V[ev_rows] if ev_rows.size else np.array([])
    v_noninc = bool(np.all(np.diff(V_events) <= 1e-9 * np.abs(V_events[:-1]) + 1e-12)) \
        if V_events.size > 1 else True

    row = {
        "scenario": scenario.name,
        "mode": mode,
        "steps": trace.nsteps,
        "norm_u_start": float(trace.norm_u[0]),
        "norm_u_end": float(trace.norm_u[-1]),
        "norm_ratio": ratio,
        "rate_norm_u": rate_norm,
        "rate_omega": rate_omega,
        "events": count,
        "min_dwell": min_dwell,
        "mean_dwell": mean_dwell,
        "update_fraction": frac,
        "tau": prep.dwell.tau if prep.dwell else float("nan"),
        "min_dwell_over_tau": (min_dwell / prep.dwell.tau
                               if prep.dwell and np.isfinite(min_dwell) else float("nan")),
        "m_max": float(np.max(trace.m)),
        "V_nonincreasing_at_events": v_noninc,
        "assumption1_margin": a1.margin,
        "iota_estimate": prep.provided.iota_estimate if prep.provided else 0.0,
        "wp": prep.provided.gain.wp if prep.provided else float("nan"),
        "kappa1": prep.trigger.kappa1 if prep.trigger else float("nan"),
        "kappa2": prep.trigger.kappa2 if prep.trigger else float("nan"),
        "kappa3": prep.trigger.kappa3 if prep.trigger else float("nan"),
        "lambda_d": prep.trigger.lambda_d if prep.trigger else float("nan"),
        "r0": prep.r0 if prep.r0 is not None else float("nan"),
        "eps1": prep.epsc.eps1 if prep.epsc else float("nan"),
        "eps2": prep.epsc.eps2 if prep.epsc else float("nan"),
        "eps3": prep.epsc.eps3 if prep.epsc else float("nan"),
        "eps4": prep.epsc.eps4 if prep.epsc else float("nan"),
        "sigma_star": prep.theory.sigma_star if prep.theory else float("nan"),
        "sigma_vacuous": prep.theory.vacuous if prep.theory else False,
    }
    return row
