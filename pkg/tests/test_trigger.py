import numpy as np
import pytest

from oracles import euler_scalar_m
from rdetc.errors import InfeasibleError, InvariantViolation, ValidationError
from rdetc.kernels import GainTable, gain_from_kernel, solve_inverse_kernel, solve_kernel
from rdetc.plant import PlantConfig, PlantState
from rdetc.profiles import ReactionProfile
from rdetc.provider import theoretical_constants
from rdetc.trigger import (TriggerConfig, TriggerState, check_trigger,
                           compute_d, dwell_integral, dwell_time_bound,
                           epsilon_constants, run_closed_loop,
                           select_gain_params, select_trigger_params, step_m)


def _gain(samples, dK=None, d2K=None, wp=1.0):
    samples = np.asarray(samples, dtype=float)
    z = np.zeros_like(samples)
    return GainTable(samples=samples, wp=wp,
                     dK=z if dK is None else np.asarray(dK, dtype=float),
                     d2K=z.copy() if d2K is None else np.asarray(d2K, dtype=float))


# ---------------------------------------------------------------------------
# epsilon constants
# ---------------------------------------------------------------------------

def test_epsilon_constants_zero_gain():
    g = _gain(np.zeros(51))
    e = epsilon_constants(g, ReactionProfile.constant(1.0), 1.0, 1.0)
    assert e.as_array().tolist() == [0.0, 0.0, 0.0, 0.0]


def test_epsilon_constants_unit_gain_hand_values():
    # K = 1, K' = K'' = 0, lambda = 0, eps = q = 1:
    # eps1 = 4, eps2 = 4 int (0 + 1 + 0)^2 = 4, eps3 = 4 (1 + 0)^2 = 4, eps4 = 0
    g = _gain(np.ones(101))
    e = epsilon_constants(g, ReactionProfile.constant(0.0), 1.0, 1.0)
    assert e.eps1 == pytest.approx(4.0)
    assert e.eps2 == pytest.approx(4.0)
    assert e.eps3 == pytest.approx(4.0)
    assert e.eps4 == 0.0


def test_epsilon_constants_stable_under_refinement(sec6_profile):
    vals = {}
    for n in (101, 201):
        k = solve_kernel(sec6_profile, 1.0, n)
        g = gain_from_kernel(k, 10.0, 1.0, sec6_profile)
        vals[n] = epsilon_constants(g, sec6_profile, 1.0, 10.0).as_array()
    coarse, fine = vals[101], vals[201]
    scale = np.max(np.abs(fine))
    for c, f in zip(coarse, fine):
        rel = abs(c - f) / abs(f) if f else np.inf
        # eps4 is stencil noise around an analytic zero: judge it against
        # the scale of the other constants instead of itself
        assert rel <= 0.01 or abs(c - f) <= 1e-6 * scale


def test_eps4_is_noise_around_zero(sec6_profile):
    # K'(0) inherits k_y(x, 0) = 0; the computed eps4 must shrink fast
    # under refinement while eps1..eps3 stay put
    es = {}
    for n in (101, 201):
        k = solve_kernel(sec6_profile, 1.0, n)
        g = gain_from_kernel(k, 10.0, 1.0, sec6_profile)
        es[n] = epsilon_constants(g, sec6_profile, 1.0, 10.0)
    assert es[201].eps4 < 0.1 * es[101].eps4


# ---------------------------------------------------------------------------
# parameter selection
# ---------------------------------------------------------------------------

def test_select_trigger_params_zero():
    from rdetc.trigger import EpsilonConsts
    assert select_trigger_params(EpsilonConsts(0, 0, 0, 0), 1.0) == (0, 0, 0)


def test_select_trigger_params_values():
    from rdetc.trigger import EpsilonConsts
    k1, k2, k3 = select_trigger_params(EpsilonConsts(1.0, 4.0, 4.0, 0.0), 2.0)
    assert (k1, k2, k3) == (4.0, 4.0, 0.0)


def test_paper_kappa_check_is_reported(sec6_prepared):
    # the reference overrides are compared against the exact-kernel minima;
    # the artifact reports the comparison rather than assuming it passes
    kmin = select_trigger_params(sec6_prepared.epsc, 55.0)
    paper = (5.5e4, 758.0, 1240.0)
    verdicts = [have >= need for have, need in zip(paper, kmin)]
    # with exact kernels the eps2/eps3 minima exceed the paper's kappa1/2,
    # while kappa3 clears its (noise-level) minimum
    assert verdicts == [False, False, True]


def test_select_gain_params_r0_formula():
    r0, delta0, lam_min = select_gain_params((1.0, 1.0, 1.0), 1.0, 1.0, 10.0, 1.0)
    assert r0 == pytest.approx(48.0)
    # delta0 = half of (wp - (k2 + 2 k3)/(r0 eps) - 1/4)
    bound = 10.0 - (1.0 + 2.0) / 48.0 - 0.25
    assert delta0 == pytest.approx(bound / 2.0)
    assert lam_min == pytest.approx(48.0 / (4.0 * delta0))


def test_select_gain_params_infeasible():
    with pytest.raises(InfeasibleError) as exc:
        select_gain_params((0.0, 1e6, 1e6), 1.0, 1.0, 0.26, 1.0)
    assert exc.value.margin is not None and exc.value.margin <= 0


# ---------------------------------------------------------------------------
# dwell bound
# ---------------------------------------------------------------------------

def test_dwell_integral_unit_seam():
    # int_0^1 ds/(s^2 + s + 1) = pi/(3 sqrt(3))
    assert dwell_integral(1.0, 1.0, 1.0) == pytest.approx(
        np.pi / (3.0 * np.sqrt(3.0)), abs=1e-9)


def test_dwell_integral_constant_seam():
    assert dwell_integral(0.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_dwell_bound_coefficients():
    b = dwell_time_bound(2.0, 55.0, 770.0, 9.775)
    assert b.n1 == pytest.approx(0.5 * 770.0 * 55.0)
    assert b.n2 == pytest.approx(1.0 + 2.0 + 55.0 * 770.0 + 9.775)
    assert b.n3 == pytest.approx(1.0 + 9.775 + 2.0 + 0.5 * 55.0 * 770.0)
    assert b.tau > 0.0


def test_dwell_bound_below_observed_min(sec6_prepared, sec6_trace):
    gaps = np.diff(sec6_trace.event_times)
    assert sec6_prepared.dwell.tau > 0
    assert np.min(gaps) >= sec6_prepared.dwell.tau


# ---------------------------------------------------------------------------
# trigger primitives
# ---------------------------------------------------------------------------

def test_compute_d_snapshot_equals_state():
    nx = 51
    u = np.cos(np.linspace(0, 3, nx))
    trig = TriggerState(m=-1.0, u_last_event=u.copy(), U_d=0.0)
    d = compute_d(_gain(np.ones(nx)), PlantState(0.0, u), trig)
    assert d == 0.0


def test_compute_d_constant_offset():
    nx = 51
    u = np.cos(np.linspace(0, 3, nx))
    trig = TriggerState(m=-1.0, u_last_event=u - 0.7, U_d=0.0)
    d = compute_d(_gain(np.ones(nx)), PlantState(0.0, u), trig)
    assert d == pytest.approx(0.7, abs=1e-13)


def test_compute_d_quadrature_oracle(rng):
    nx = 101
    x = np.linspace(0, 1, nx)
    K = 1.0 + 0.5 * np.sin(2 * np.pi * x)
    u = rng.normal(size=nx)
    snap = rng.normal(size=nx)
    trig = TriggerState(m=-1.0, u_last_event=snap, U_d=0.0)
    d = compute_d(_gain(K), PlantState(0.0, u), trig)
    oracle = np.trapezoid(K * (u - snap), dx=1.0 / (nx - 1))
    assert d == pytest.approx(oracle, abs=1e-12)


def test_step_m_pure_decay():
    nx = 11
    trig = TriggerState(m=-2.0, u_last_event=np.zeros(nx), U_d=0.0)
    cfg = TriggerConfig(xi=1.0, eta=3.0, kappa1=1.0, kappa2=1.0, kappa3=1.0,
                        lambda_d=1.0, m0=-2.0)
    m = step_m(trig, 0.0, PlantState(0.0, np.zeros(nx)), cfg, 0.05)
    assert m == pytest.approx(-2.0 * (1.0 - 3.0 * 0.05))


def test_step_m_matches_scalar_euler_oracle():
    # lambda_d d^2 = 0.05, eta = 1, dt = 0.1, state terms 0, m = -1
    nx = 11
    trig = TriggerState(m=-1.0, u_last_event=np.zeros(nx), U_d=0.0)
    cfg = TriggerConfig(xi=1.0, eta=1.0, kappa1=0.0, kappa2=0.0, kappa3=0.0,
                        lambda_d=0.05, m0=-1.0)
    m = step_m(trig, 1.0, PlantState(0.0, np.zeros(nx)), cfg, 0.1)
    assert m == pytest.approx(euler_scalar_m(-1.0, 1.0, 0.05, 0.0, 0.1))
    assert m == pytest.approx(-0.895)


def test_step_m_invariant_violation():
    nx = 11
    trig = TriggerState(m=-1e-9, u_last_event=np.zeros(nx), U_d=0.0)
    cfg = TriggerConfig(xi=1.0, eta=1.0, kappa1=0.0, kappa2=0.0, kappa3=0.0,
                        lambda_d=1e6, m0=-1.0)
    with pytest.raises(InvariantViolation):
        step_m(trig, 10.0, PlantState(0.0, np.zeros(nx)), cfg, 0.1)


def test_check_trigger_cases():
    assert not check_trigger(0.0, -1.0, 55.0)
    # boundary inclusive
    assert check_trigger(np.sqrt(55.0), -1.0, 55.0)
    assert check_trigger(3.0, -0.1, 55.0)  # 9 >= 5.5
    with pytest.raises(ValidationError):
        check_trigger(1.0, 0.0, 55.0)


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

def _zero_profile_setup():
    prof = ReactionProfile.constant(0.0)
    plant = PlantConfig(eps=1.0, q=1.0, profile=prof, nx=51, dt=1e-4)
    kern = solve_kernel(prof, 1.0, 101)
    gain = gain_from_kernel(kern, 1.0, 1.0, prof)
    trig = TriggerConfig(xi=55.0, eta=9.775, kappa1=1.0, kappa2=1.0,
                         kappa3=1.0, lambda_d=770.0, m0=-5.0)
    return plant, gain, trig


def test_zero_profile_never_fires_after_t0():
    # K = 0 so U_d stays 0, d stays 0; diffusion decays on its own
    plant, gain, trig = _zero_profile_setup()
    res = run_closed_loop(plant, gain, trig, lambda x: np.cos(np.pi * x), 0.3)
    assert np.max(np.abs(gain.samples)) == 0.0
    assert res.event_times.tolist() == [0.0]
    assert np.all(res.U_d == 0.0)
    assert res.norm_u[-1] < res.norm_u[0]
    assert np.all(res.m < 0.0)


def test_d_resets_at_events(sec6_trace):
    ev_rows = np.flatnonzero(sec6_trace.event)
    assert np.all(sec6_trace.d[ev_rows] == 0.0)


def test_m_stays_negative_in_reference_run(sec6_trace):
    assert float(np.max(sec6_trace.m)) < 0.0


def test_continuous_mode_decays_with_positive_rate():
    # q chosen to satisfy the heat-exchange condition (wp = 1.5 > 1/2)
    prof = ReactionProfile.constant(5.0)
    plant = PlantConfig(eps=1.0, q=4.0, profile=prof, nx=51, dt=1e-4)
    kern = solve_kernel(prof, 1.0, 101)
    gain = gain_from_kernel(kern, 4.0, 1.0, prof)
    trig = TriggerConfig(xi=55.0, eta=9.775, kappa1=10.0, kappa2=1.0,
                         kappa3=1.0, lambda_d=10.0, m0=-5.0)
    res = run_closed_loop(plant, gain, trig, lambda x: np.cos(np.pi * x), 1.0,
                          mode="continuous")
    from rdetc.diagnostics import fit_decay_rate
    rate = fit_decay_rate(res.t, res.norm_u, (0.2, 1.0))
    assert rate > 0.0
    assert np.all(res.event)  # refresh every step


def test_euler_m_update_matches_exact_when_mild():
    # for (eta + lambda_d xi) dt << 1 the two m integrators agree closely
    prof = ReactionProfile.constant(2.0)
    plant = PlantConfig(eps=1.0, q=1.0, profile=prof, nx=26, dt=2e-4)
    kern = solve_kernel(prof, 1.0, 101)
    gain = gain_from_kernel(kern, 1.0, 1.0, prof)
    trig = TriggerConfig(xi=1.0, eta=2.0, kappa1=1.0, kappa2=0.5, kappa3=0.5,
                         lambda_d=2.0, m0=-1.0)
    a = run_closed_loop(plant, gain, trig, lambda x: np.cos(np.pi * x), 0.2,
                        m_update="exact")
    b = run_closed_loop(plant, gain, trig, lambda x: np.cos(np.pi * x), 0.2,
                        m_update="euler")
    assert np.max(np.abs(a.m - b.m)) < 1e-4
    assert a.event_times.tolist() == b.event_times.tolist()


def _replay_events(states, Kw, xi, eta, kappas, lambda_d, m0, dt, w_quad):
    """Trigger logic replayed over a frozen state sequence (event decisions
    do not feed back into the states, isolating the monotonicity claim)."""
    from rdetc.trigger import _m_over_step

    cfg = TriggerConfig(xi=xi, eta=eta, kappa1=kappas[0], kappa2=kappas[1],
                        kappa3=kappas[2], lambda_d=lambda_d, m0=m0)
    m = m0
    U_d = float(Kw @ states[0])
    d = 0.0
    events = [0.0]
    for k in range(1, states.shape[0]):
        u_prev, u_new = states[k - 1], states[k]
        S = (kappas[0] * float(w_quad @ (u_prev * u_prev))
             + kappas[1] * u_prev[-1] ** 2 + kappas[2] * u_prev[0] ** 2)
        d_new = float(Kw @ u_new) - U_d
        m, crossed = _m_over_step(m, d, d_new, S, cfg, dt)
        if crossed or d_new * d_new >= -xi * m:
            U_d = float(Kw @ u_new)
            d = 0.0
            events.append(k * dt)
        else:
            d = d_new
    return events


def test_trigger_monotone_in_xi_on_fixed_replay(sec6_profile):
    # larger xi with formula-reselected kappa and lambda_d never increases
    # the event count on a frozen trajectory
    prof = ReactionProfile.constant(5.0)
    plant = PlantConfig(eps=1.0, q=4.0, profile=prof, nx=51, dt=1e-4)
    kern = solve_kernel(prof, 1.0, 101)
    gain = gain_from_kernel(kern, 4.0, 1.0, prof)
    inv = solve_inverse_kernel(kern)
    epsc = epsilon_constants(gain, prof, 1.0, 4.0)
    th = theoretical_constants(0.0, prof.lambda_bar, 1.0, 4.0, inv, eta=9.775)

    ref_trig = TriggerConfig(xi=10.0, eta=9.775,
                             kappa1=max(2 * epsc.eps2 / 10.0, 1e-12),
                             kappa2=max(2 * epsc.eps3 / 10.0, 1e-12),
                             kappa3=max(2 * epsc.eps4 / 10.0, 0.0),
                             lambda_d=1.0, m0=-5.0)
    res = run_closed_loop(plant, gain, ref_trig, lambda x: np.cos(np.pi * x), 0.5)

    nx = plant.nx
    w_quad = np.full(nx, plant.dx)
    w_quad[0] = w_quad[-1] = 0.5 * plant.dx
    from rdetc.plant import resample_gain
    Kw = resample_gain(gain, nx) * w_quad

    counts = []
    for xi in (5.0, 15.0, 45.0):
        kappas = select_trigger_params(epsc, xi)
        _, _, lam_min = select_gain_params(kappas, th.q0, th.q1, gain.wp, 1.0, 0.0)
        ev = _replay_events(res.states, Kw, xi, 9.775, kappas, lam_min, -5.0,
                            plant.dt, w_quad)
        counts.append(len(ev))
    assert counts[0] >= counts[1] >= counts[2]
