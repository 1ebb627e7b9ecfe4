"""Post-processing of simulation results: Zeno diagnostics, Lyapunov audits, decay fits."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .controller import IMPULSE, SimResult
from .dde_core import HistoryBuffer

ZENO_SUSPECTED = "zeno_suspected"
DWELL_BOUNDED = "dwell_bounded"
INCONCLUSIVE = "inconclusive"


def _sqnorm(x) -> float:
    x = np.atleast_1d(x)
    return float(x @ x)


@dataclass
class OracleSequence:
    """Event times and states from the closed-form recursion, starting with (t0, x0)."""

    events: list[tuple[float, float]]
    degenerate: bool = False
    accumulation_time: float = math.nan

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]


def zeno_recursion_oracle(x0: float, b: float, k: float, sigma0: float, t_max: float,
                          t0: float = 0.0, r: Optional[float] = None,
                          max_events: int = 2000) -> OracleSequence:
    """Event sequence of the scalar example while the delayed term is frozen at 1.

    On each segment dx/dt = b + k x_i is constant, so the rule e = sqrt(sigma0) x
    gives x_{i+1} = x_i / (1 + sqrt(sigma0)) after a gap
    sqrt(sigma0)/(1 + sqrt(sigma0)) * x_i / (|b| + |k| x_i).
    """
    if not (x0 > 0 and b < 0 and k < 0 and sigma0 >= 0):
        raise ValueError("oracle needs x0 > 0, b < 0, k < 0, sigma0 >= 0")
    if r is not None and t_max - t0 > r:
        raise ValueError(f"t_max - t0 = {t_max - t0} exceeds delay r = {r}")
    if sigma0 == 0:
        return OracleSequence([(t0, x0)], degenerate=True)
    s = math.sqrt(sigma0)
    frac = s / (1.0 + s)
    events = [(t0, x0)]
    t, x = t0, x0
    for _ in range(max_events):
        gap = frac * x / (abs(b) + abs(k) * x)
        if t + gap > t_max or t + gap == t:
            break
        t, x = t + gap, x / (1.0 + s)
        events.append((t, x))
    # remaining gaps are bounded by a geometric tail with ratio 1/(1+s)
    total = t0
    xi = x0
    for _ in range(100_000):
        gap = frac * xi / (abs(b) + abs(k) * xi)
        if gap < 1e-18 * max(1.0, abs(total)):
            break
        total += gap
        xi /= 1.0 + s
    return OracleSequence(events, accumulation_time=total)


@dataclass(frozen=True)
class OracleDeviation:
    max_time_dev: float
    max_state_dev: float
    n_compared: int
    count_mismatch: bool


def compare_to_oracle(sim: SimResult, oracle, n: int = 10) -> OracleDeviation:
    """Largest time and state deviations over the first ``n`` events after t0."""
    ref = list(oracle)[1:]
    got = [(rec.time, float(rec.state_after[0])) for rec in sim.events]
    m = min(n, len(ref), len(got))
    dt = max((abs(got[i][0] - ref[i][0]) for i in range(m)), default=0.0)
    dx = max((abs(got[i][1] - ref[i][1]) for i in range(m)), default=0.0)
    return OracleDeviation(dt, dx, m, m < n)


@dataclass
class ZenoReport:
    event_count: int
    min_gap: float
    mean_gap: float
    max_gap: float
    contraction_ratios: list[float]
    accumulation_estimate: float
    last_event_time: float
    guard_tripped: bool
    verdict: str

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["contraction_ratios"] = list(self.contraction_ratios[:50])
        return d


def zeno_report(sim: SimResult, h: Optional[float] = None, tol: float = 1e-9,
                tail: int = 20) -> ZenoReport:
    """Summarise inter-event gaps and classify the run.

    ``zeno_suspected`` needs a tripped guard and a gap tail that does not
    grow beyond the detection tolerance; ``dwell_bounded`` needs every gap
    to be at least ``h - tol``.
    """
    times = np.concatenate([[sim.t0], sim.events.times])
    gaps = np.diff(times)
    x_prev = sim.trajectory.evaluate(sim.t0, "right")
    ratios = []
    if sim.trajectory.dim == 1:
        xs = [float(x_prev[0])] + [float(r.state_after[0]) for r in sim.events]
        ratios = [xs[i + 1] / xs[i] if xs[i] != 0 else math.nan for i in range(len(xs) - 1)]
    if len(gaps):
        g_min, g_mean, g_max = float(gaps.min()), float(gaps.mean()), float(gaps.max())
    else:
        g_min = g_mean = g_max = math.nan
    accumulation = float(times[-1])
    tail_gaps = gaps[-tail:]
    nonincreasing = len(tail_gaps) >= 2 and bool(np.all(np.diff(tail_gaps) <= tol))
    if len(gaps) >= 2 and gaps[-2] > 0 and 0 < gaps[-1] < gaps[-2]:
        ratio = gaps[-1] / gaps[-2]
        accumulation += gaps[-1] * ratio / (1.0 - ratio)
    if sim.zeno_flagged and nonincreasing:
        verdict = ZENO_SUSPECTED
    elif h is not None and len(gaps) and g_min >= h - tol:
        verdict = DWELL_BOUNDED
    elif h is not None and not len(gaps):
        verdict = DWELL_BOUNDED
    else:
        verdict = INCONCLUSIVE
    return ZenoReport(
        event_count=len(sim.events),
        min_gap=g_min,
        mean_gap=g_mean,
        max_gap=g_max,
        contraction_ratios=ratios,
        accumulation_estimate=accumulation,
        last_event_time=float(times[-1]),
        guard_tripped=sim.zeno_flagged,
        verdict=verdict,
    )


def _samples(traj: HistoryBuffer, t_from: float = -math.inf) -> tuple[np.ndarray, list[np.ndarray]]:
    """Sample times and values in time order, both limits at every jump."""
    return traj.window(max(t_from, traj.t_min), traj.t_max)


@dataclass
class LyapunovAudit:
    times: np.ndarray
    w: np.ndarray
    sup: float
    t_sup: float
    sup_in_initial_segment: bool
    lambda_too_large: bool
    lam: float


def lyapunov_trace(traj: HistoryBuffer, V: Callable[[np.ndarray], float], lam: float = 0.0,
                   t0: float = 0.0) -> LyapunovAudit:
    """w(t) = exp(lam (t - t0)) V(x(t)) at every stored sample (right limits).

    The supremum also considers left limits at jumps. ``lambda_too_large``
    flags a supremum reached at the end of the run, i.e. a weight growing
    faster than the state decays.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    times = traj.times
    w = np.array([math.exp(lam * (t - t0)) * V(traj.right_value(i)) for i, t in enumerate(times)])
    t_all, x_all = _samples(traj)
    w_all = np.array([math.exp(lam * (t - t0)) * V(x) for t, x in zip(t_all, x_all)])
    j = int(np.argmax(w_all))
    sup = float(w_all[j])
    t_sup = float(t_all[j])
    span = times[-1] - t0
    return LyapunovAudit(
        times=times,
        w=w,
        sup=sup,
        t_sup=t_sup,
        sup_in_initial_segment=t_sup <= t0,
        lambda_too_large=bool(lam > 0 and span > 0 and t_sup >= times[-1] - 0.05 * span),
        lam=lam,
    )


@dataclass(frozen=True)
class RazumikhinViolation:
    time: float
    dv_estimate: float
    bound: float


def razumikhin_audit(traj: HistoryBuffer, V: Callable[[np.ndarray], float], q: float, tau: float,
                     rate_bound: Callable[[float, float], Optional[float]],
                     window_dt: Optional[float] = None, rel_tol: Optional[float] = None,
                     t_from: Optional[float] = None, t_to: Optional[float] = None) -> list[RazumikhinViolation]:
    """Check D+V <= rate_bound(t, V) wherever q V(x(t)) dominates V over [t - tau, t].

    D+V is a forward difference over the next sample (or ``window_dt`` when
    given); steps whose window contains a jump are skipped. ``rate_bound``
    may return None to leave a step unaudited. A step violates when the
    estimate exceeds the bound by more than ``rel_tol * V`` (default 10 times
    the difference step).
    """
    times = traj.times
    n = len(times)
    v_right = np.array([V(traj.right_value(i)) for i in range(n)])
    v_left = np.array([V(traj.left_value(i)) for i in range(n)])
    jumps = set(bisect.bisect_left(list(times), t) for t in traj.discontinuities)
    lo_t = times[0] + tau if t_from is None else max(t_from, times[0] + tau)
    hi_t = times[-1] if t_to is None else t_to
    out = []
    window_max = np.maximum(v_right, v_left)
    for i in range(n - 1):
        t = times[i]
        if t < lo_t or t >= hi_t:
            continue
        if window_dt is None:
            j = i + 1
            if j in jumps:
                continue
            t_next, v_next = times[j], v_left[j]
        else:
            t_next = t + window_dt
            if t_next > times[-1]:
                continue
            a = bisect.bisect_right(times, t)
            b = bisect.bisect_left(times, t_next)
            if any(m in jumps for m in range(a, b + 1)):
                continue
            v_next = V(traj.evaluate(t_next, "left"))
        v = v_right[i]
        a = int(np.searchsorted(times, t - tau, side="left"))
        if q * v < window_max[a:i + 1].max():
            continue
        bound = rate_bound(t, v)
        if bound is None:
            continue
        step = t_next - t
        dv = (v_next - v) / step
        tol = (10.0 * step if rel_tol is None else rel_tol) * max(v, 0.0)
        if dv > bound + tol:
            out.append(RazumikhinViolation(float(t), float(dv), float(bound)))
    return out


def dwell_segments(sim: SimResult) -> list[tuple[float, float]]:
    """Intervals [t_i, t_i + h) that end in an impulse."""
    times = [sim.t0] + [r.time for r in sim.events]
    kinds = [None] + [r.kind for r in sim.events]
    return [(times[i - 1], times[i]) for i in range(1, len(times)) if kinds[i] == IMPULSE]


@dataclass(frozen=True)
class DecayFit:
    C: float
    lambda_fit: float
    n_points: int
    used_peaks: bool
    infinite_rate: bool = False


def decay_fit(traj: HistoryBuffer, t_start: float = 0.0, t_end: Optional[float] = None) -> DecayFit:
    """Fit |x| ~ C exp(-lambda t) through the local maxima of |x|.

    Oscillating trajectories are fitted through their peaks; when fewer than
    two interior peaks exist the raw samples are fitted instead.
    """
    t_all, x_all = _samples(traj, t_start)
    if t_end is not None:
        keep = t_all <= t_end
        t_all = t_all[keep]
        x_all = [x for x, kept in zip(x_all, keep) if kept]
    a = np.array([float(np.linalg.norm(x)) for x in x_all])
    if not np.any(a > 0):
        return DecayFit(0.0, math.inf, 0, False, infinite_rate=True)
    peaks = [i for i in range(1, len(a) - 1) if a[i] >= a[i - 1] and a[i] > a[i + 1] and a[i] > 0]
    used_peaks = len(peaks) >= 2
    idx = np.array(peaks) if used_peaks else np.flatnonzero(a > 0)
    if len(idx) < 2:
        return DecayFit(float(a[idx[0]]), math.nan, len(idx), used_peaks)
    slope, intercept = np.polyfit(t_all[idx], np.log(a[idx]), 1)
    return DecayFit(float(math.exp(intercept)), float(-slope), len(idx), used_peaks)
