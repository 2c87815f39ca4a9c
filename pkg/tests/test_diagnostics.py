import csv

import numpy as np
import pytest

from rdetc.diagnostics import (SimTrace, TransformedState, backstepping_transform,
                               event_stats, fit_decay_rate, inverse_transform,
                               lyapunov_value, omega)
from rdetc.errors import ValidationError
from rdetc.kernels import KernelGrid, solve_inverse_kernel, solve_kernel
from rdetc.plant import PlantState, l2_norm
from rdetc.profiles import ReactionProfile


def _random_smooth(rng, x):
    c = rng.normal(size=6)
    return (c[0] + c[1] * x + c[2] * np.cos(np.pi * x)
            + c[3] * np.sin(2 * np.pi * x) + c[4] * np.cos(3 * np.pi * x)
            + c[5] * x ** 2)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def test_zero_kernel_transform_is_identity():
    n = 51
    grid = KernelGrid(n=n, values=np.zeros((n, n)), kind="direct", eps=1.0,
                      lambda_samples=np.zeros(n))
    u = np.sin(np.linspace(0, 2, n))
    w = backstepping_transform(PlantState(0.0, u), grid)
    assert np.array_equal(w.w_hat, u)


def test_zero_state_transforms_to_zero(const1_kernel):
    w = backstepping_transform(PlantState(0.0, np.zeros(101)), const1_kernel)
    assert np.max(np.abs(w.w_hat)) == 0.0


def test_transform_linearity(const1_kernel, rng):
    x = np.linspace(0, 1, 101)
    u = _random_smooth(rng, x)
    v = _random_smooth(rng, x)
    a, b = 1.7, -0.6
    wu = backstepping_transform(PlantState(0.0, u), const1_kernel).w_hat
    wv = backstepping_transform(PlantState(0.0, v), const1_kernel).w_hat
    wab = backstepping_transform(PlantState(0.0, a * u + b * v), const1_kernel).w_hat
    assert np.max(np.abs(wab - (a * wu + b * wv))) < 1e-12


def test_round_trip_mild_profile(rng):
    # trapezoid transforms against the trapezoid Volterra fixed point agree
    # to O(h^2 sup|k|^2); a mild profile keeps that under 1e-6 at n = 101
    prof = ReactionProfile.from_callable(lambda x: 0.15 * np.cos(2 * np.pi * x))
    k = solve_kernel(prof, 1.0, 101)
    l = solve_inverse_kernel(k)
    x = np.linspace(0, 1, 101)
    for _ in range(10):
        u = _random_smooth(rng, x)
        w = backstepping_transform(PlantState(0.0, u), k)
        back = inverse_transform(w, l)
        assert np.max(np.abs(back.u - u)) <= 1e-6


def test_round_trip_unit_profile_documented_scale(rng):
    # for lambda = 1 the diagonal quadrature mismatch dominates: O(h^2 k^2)
    prof = ReactionProfile.constant(1.0)
    k = solve_kernel(prof, 1.0, 101)
    l = solve_inverse_kernel(k)
    x = np.linspace(0, 1, 101)
    worst = 0.0
    for _ in range(10):
        u = _random_smooth(rng, x)
        back = inverse_transform(backstepping_transform(PlantState(0.0, u), k), l)
        worst = max(worst, float(np.max(np.abs(back.u - u))))
    assert worst <= 1e-4


def test_transform_kind_checks(const1_kernel, const1_inverse):
    u = PlantState(0.0, np.zeros(101))
    with pytest.raises(ValidationError):
        backstepping_transform(u, const1_inverse)
    with pytest.raises(ValidationError):
        inverse_transform(TransformedState(np.zeros(101), 0.0), const1_kernel)


def test_norm_sandwich_on_continuous_run(sec6_prepared):
    # (1/(1+||l||)) ||u|| <= ||w|| <= (1 + ||k||) ||u|| along a run
    from rdetc.diagnostics import transform_matrix
    from rdetc.trigger import run_closed_loop
    prep = sec6_prepared
    u0 = prep.scenario.initial_values(prep.plant.grid)
    res = run_closed_loop(prep.plant, prep.provided.gain, prep.trigger, u0,
                          0.2, mode="continuous")
    k_sup = prep.provided.direct.sup()
    l_sup = prep.provided.inverse.sup()
    T = transform_matrix(prep.provided.direct, prep.plant.nx)
    dx = prep.plant.dx
    for i in range(0, res.states.shape[0], 100):
        u = res.states[i]
        w = T @ u
        nu = l2_norm(u, dx)
        nw = l2_norm(w, dx)
        assert nw <= (1.0 + k_sup) * nu + 1e-12
        assert nw >= nu / (1.0 + l_sup) - 1e-12


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def test_lyapunov_value_cases():
    n = 51
    w0 = TransformedState(np.zeros(n), 0.0)
    assert lyapunov_value(w0, -1.0, 10.0) == pytest.approx(1.0)
    w1 = TransformedState(np.ones(n), 0.0)
    assert lyapunov_value(w1, -1.0, 2.0) == pytest.approx(2.0)


def test_omega_cases():
    n = 101
    x = np.linspace(0, 1, n)
    assert omega(PlantState(0.0, np.zeros(n)), 0.0) == 0.0
    val = omega(PlantState(0.0, np.cos(np.pi * x)), -5.0)
    assert val == pytest.approx(5.5, abs=1e-12)
    assert omega(PlantState(0.0, np.cos(np.pi * x)), 5.0) == pytest.approx(val)


def test_fit_decay_rate_exponential():
    t = np.linspace(0, 3, 500)
    v = np.exp(-2.0 * t)
    assert fit_decay_rate(t, v, (0.0, 3.0)) == pytest.approx(2.0, abs=1e-6)


def test_fit_decay_rate_constant():
    t = np.linspace(0, 3, 100)
    assert fit_decay_rate(t, np.ones_like(t), (0.0, 3.0)) == pytest.approx(0.0, abs=1e-12)


def test_fit_decay_rate_rejects_nonpositive():
    t = np.linspace(0, 1, 10)
    v = np.linspace(1, -0.1, 10)
    with pytest.raises(ValidationError):
        fit_decay_rate(t, v, (0.0, 1.0))


# ---------------------------------------------------------------------------
# traces and event statistics
# ---------------------------------------------------------------------------

def _toy_trace(times, event_times):
    n = len(times)
    t = np.asarray(times, dtype=float)
    ev = np.isin(t, event_times)
    z = np.zeros(n)
    return SimTrace(t=t, norm_u=np.ones(n), u_at_0=z, u_at_1=z.copy(),
                    U_d=z.copy(), U_no=z.copy(), d=z.copy(), m=-np.ones(n),
                    V=np.ones(n), Omega=np.ones(n), event=ev,
                    event_times=np.asarray(event_times, dtype=float))


def test_event_stats_uniform():
    tr = _toy_trace(np.linspace(0, 1, 11), [0.0, 0.5, 1.0])
    count, mn, mean, frac = event_stats(tr)
    assert count == 3
    assert mn == pytest.approx(0.5)
    assert mean == pytest.approx(0.5)
    assert frac == pytest.approx(3 / 11)


def test_event_stats_single_event_sentinel():
    tr = _toy_trace(np.linspace(0, 1, 11), [0.0])
    count, mn, mean, frac = event_stats(tr)
    assert count == 1
    assert np.isnan(mn) and np.isnan(mean)


def test_event_stats_empty_raises():
    tr = _toy_trace(np.linspace(0, 1, 5), [])
    with pytest.raises(ValidationError):
        event_stats(tr)


def test_trace_rejects_nonincreasing_times():
    with pytest.raises(ValidationError):
        _toy_trace([0.0, 0.1, 0.1, 0.2], [0.0])


def test_trace_rejects_inconsistent_event_flags():
    n = 5
    t = np.linspace(0, 1, n)
    z = np.zeros(n)
    with pytest.raises(ValidationError):
        SimTrace(t=t, norm_u=np.ones(n), u_at_0=z, u_at_1=z.copy(),
                 U_d=z.copy(), U_no=z.copy(), d=z.copy(), m=-np.ones(n),
                 V=np.ones(n), Omega=np.ones(n),
                 event=np.array([True, False, False, False, False]),
                 event_times=np.array([0.0, 0.5]))


def test_strided_trace_keeps_events(sec6_trace):
    s = sec6_trace.strided(10)
    assert np.array_equal(s.event_times, sec6_trace.event_times)
    assert s.t.size < sec6_trace.t.size
    assert np.all(np.isin(sec6_trace.t[sec6_trace.event], s.t))


def test_trace_csv_round_trip(tmp_path, sec6_trace):
    path = tmp_path / "trace.csv"
    s = sec6_trace.strided(100)
    s.write_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == s.t.size
    i = len(rows) // 2
    assert float(rows[i]["norm_u"]) == s.norm_u[i]
    assert float(rows[i]["V"]) == s.V[i]
    ev_path = tmp_path / "events.csv"
    s.write_events_csv(ev_path)
    with open(ev_path) as fh:
        ev_rows = list(csv.DictReader(fh))
    assert len(ev_rows) == s.event_times.size
    assert float(ev_rows[1]["t_j"]) == s.event_times[1]
