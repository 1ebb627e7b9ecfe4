import math

import numpy as np
import pytest

from hybrid_ei.analysis import (
    DWELL_BOUNDED,
    INCONCLUSIVE,
    ZENO_SUSPECTED,
    compare_to_oracle,
    decay_fit,
    dwell_segments,
    lyapunov_trace,
    razumikhin_audit,
    zeno_recursion_oracle,
    zeno_report,
)
from hybrid_ei.certificates import cbar
from hybrid_ei.controller import ControllerMode, TriggerRule, run_simulation
from hybrid_ei.dde_core import HistoryBuffer, SolverConfig, SystemModel, scalar_delay_model

# oracles derived by hand from the recursion on the first linear segments
FIRST_GAP = 1.25
SECOND_GAP = 0.375 * 0.625 / (0.1 + 0.2 * 0.625)  # 1.041666...
ACCUMULATION = 5.0240676265


def V(x):
    return float(np.dot(x, x))


def sampled(fn, t_end, dt):
    buf = HistoryBuffer()
    for t in np.arange(0.0, t_end + dt / 2, dt):
        buf.append(float(t), [fn(t)])
    return buf


@pytest.fixture(scope="module")
def hybrid_run():
    model = scalar_delay_model(-0.1, -0.2, 16.0, -0.293)
    return run_simulation(model, TriggerRule.quadratic(0.36), ControllerMode.hybrid(0.666),
                          SolverConfig(dt=0.01, horizon=60.0))


# recursion oracle -----------------------------------------------------------

def test_oracle_first_events():
    seq = zeno_recursion_oracle(1.0, -0.1, -0.2, 0.36, 10.0)
    assert seq[0] == (0.0, 1.0)
    assert seq[1][0] == pytest.approx(FIRST_GAP, abs=1e-15)
    assert seq[1][1] == pytest.approx(0.625, abs=1e-15)
    assert seq[2][0] - seq[1][0] == pytest.approx(SECOND_GAP, abs=1e-14)
    assert seq.accumulation_time == pytest.approx(ACCUMULATION, abs=1e-9)


def test_oracle_contraction_and_gap_law():
    seq = zeno_recursion_oracle(1.0, -0.1, -0.2, 0.36, 10.0)
    s = 0.6
    for (t0, x0), (t1, x1) in zip(seq.events, seq.events[1:60]):
        assert x1 / x0 == pytest.approx(1.0 / (1.0 + s), rel=1e-15)
        assert (t1 - t0) * (0.1 + 0.2 * x0) == pytest.approx(s / (1 + s) * x0, abs=1e-12)


def test_oracle_degenerate_and_preconditions():
    assert zeno_recursion_oracle(1.0, -0.1, -0.2, 0.0, 10.0).degenerate
    with pytest.raises(ValueError):
        zeno_recursion_oracle(1.0, 0.1, -0.2, 0.36, 10.0)
    with pytest.raises(ValueError):
        zeno_recursion_oracle(1.0, -0.1, -0.2, 0.36, 20.0, r=16.0)


def test_oracle_against_itself():
    seq = zeno_recursion_oracle(1.0, -0.1, -0.2, 0.36, 10.0)

    class Fake:
        events = [type("R", (), {"time": t, "state_after": [x]}) for t, x in seq.events[1:]]

    dev = compare_to_oracle(Fake, seq)
    assert dev.max_time_dev == 0.0 and dev.max_state_dev == 0.0 and dev.n_compared == 10


def test_simulation_matches_oracle_coarse_step():
    model = scalar_delay_model(-0.1, -0.2, 16.0)
    sim = run_simulation(model, TriggerRule.quadratic(0.36), ControllerMode.event_only(),
                         SolverConfig(dt=0.1, horizon=4.0))
    report = zeno_report(sim)
    for ratio in report.contraction_ratios[:10]:
        assert ratio == pytest.approx(0.625, abs=1e-2)


# zeno report ----------------------------------------------------------------

def test_zeno_verdict_suspected():
    model = scalar_delay_model(-0.1, -0.2, 16.0)
    sim = run_simulation(model, TriggerRule.quadratic(0.36), ControllerMode.event_only(),
                         SolverConfig(dt=1e-2, horizon=10.0), zeno_cap=60)
    rep = zeno_report(sim)
    assert rep.verdict == ZENO_SUSPECTED
    assert rep.guard_tripped and rep.event_count > 60
    assert rep.accumulation_estimate == pytest.approx(ACCUMULATION, abs=1e-3)


def test_zeno_verdict_dwell_bounded(hybrid_run):
    rep = zeno_report(hybrid_run, h=0.666)
    assert rep.verdict == DWELL_BOUNDED
    assert rep.min_gap >= 0.666 - 1e-9
    assert zeno_report(hybrid_run).verdict == INCONCLUSIVE


# lyapunov trace -------------------------------------------------------------

def test_lyapunov_constant_trajectory():
    audit = lyapunov_trace(sampled(lambda t: 1.0, 5.0, 0.1), V)
    assert np.all(audit.w == 1.0) and audit.sup == 1.0


def test_lyapunov_hybrid_run(hybrid_run):
    audit = lyapunov_trace(hybrid_run.trajectory, V, lam=0.0)
    assert audit.sup == pytest.approx(1.0) and audit.sup_in_initial_segment
    assert not audit.lambda_too_large


def test_lyapunov_lambda_too_large():
    audit = lyapunov_trace(sampled(lambda t: math.exp(-0.5 * t), 20.0, 0.1), V, lam=3.0)
    assert audit.lambda_too_large
    with pytest.raises(ValueError):
        lyapunov_trace(sampled(lambda t: 1.0, 1.0, 0.1), V, lam=-1.0)


# razumikhin audit -----------------------------------------------------------

def test_razumikhin_stable_decay():
    model = SystemModel(1, (), lambda t, x, d: -x, np.ones((1, 1)), lambda x: 0 * x, lambda x: 0 * x)
    sim = run_simulation(model, None, ControllerMode.open_loop(), SolverConfig(dt=0.01, horizon=5.0))
    out = razumikhin_audit(sim.trajectory, V, q=1.5, tau=0.0, rate_bound=lambda t, v: -2.0 * v)
    assert out == []


def test_razumikhin_dwell_segments(hybrid_run):
    segs = dwell_segments(hybrid_run)
    assert segs
    c_bar = cbar(3.0, 0.1, 0.2)

    def bound(t, v):
        return c_bar * v if any(a <= t < b for a, b in segs) else None

    assert razumikhin_audit(hybrid_run.trajectory, V, 3.0, 16.0, bound) == []


def test_razumikhin_zero_bound_on_growth():
    model = SystemModel(1, (), lambda t, x, d: 0.5 * x, np.ones((1, 1)), lambda x: 0 * x, lambda x: 0 * x)
    sim = run_simulation(model, None, ControllerMode.open_loop(), SolverConfig(dt=0.01, horizon=2.0))
    out = razumikhin_audit(sim.trajectory, V, q=1.5, tau=0.0, rate_bound=lambda t, v: 0.0)
    assert len(out) == 200
    assert all(v.dv_estimate > 0 for v in out)


def test_razumikhin_deterministic(hybrid_run):
    def bound(t, v):
        return -1.0 * v

    a = razumikhin_audit(hybrid_run.trajectory, V, 3.0, 16.0, bound)
    b = razumikhin_audit(hybrid_run.trajectory, V, 3.0, 16.0, bound)
    assert a and a == b


# decay fit ------------------------------------------------------------------

def test_decay_fit_exponential():
    fit = decay_fit(sampled(lambda t: math.exp(-0.5 * t), 20.0, 0.1))
    assert fit.lambda_fit == pytest.approx(0.5, abs=1e-3)
    assert not fit.used_peaks


def test_decay_fit_zero_tail():
    fit = decay_fit(sampled(lambda t: 0.0, 2.0, 0.1))
    assert fit.infinite_rate


def test_decay_fit_uses_peaks():
    fit = decay_fit(sampled(lambda t: math.exp(-0.1 * t) * math.cos(t), 60.0, 0.01))
    assert fit.used_peaks
    assert fit.lambda_fit == pytest.approx(0.1, abs=2e-3)


def test_hybrid_run_decays(hybrid_run):
    assert decay_fit(hybrid_run.trajectory, 0.0).lambda_fit > 0
