"""Trigger rule, crossing location and the four control regimes."""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dde_core import (
    HistoryBuffer,
    SolverConfig,
    SystemModel,
    apply_impulse,
    rk4_step,
    step_times,
)

FEEDBACK = "feedback_update"
IMPULSE = "impulse_plus_update"

FLAG_NONE, FLAG_FEEDBACK, FLAG_IMPULSE = 0, 1, 2

DEFAULT_ZENO_CAP = 10_000
# relative resolution of an inter-event gap
GAP_REL_TOL = 1e-6


class CrossingError(ValueError):
    """The margin does not change sign over the bracket."""


@dataclass(frozen=True)
class TriggerRule:
    """Execution rule chi(|e|) <= sigma * alpha1(|x|)."""

    chi: Callable[[float], float]
    alpha1: Callable[[float], float]
    sigma: float

    @classmethod
    def power(cls, sigma: float, chi_exponent: float = 2.0, alpha1_exponent: float = 2.0) -> "TriggerRule":
        return cls(chi=lambda s: s ** chi_exponent, alpha1=lambda s: s ** alpha1_exponent, sigma=sigma)

    @classmethod
    def quadratic(cls, sigma0: float) -> "TriggerRule":
        """Scalar-example rule e^2 = sigma0 x^2."""
        return cls.power(sigma0, 2.0, 2.0)

    def validate(self, grid: Optional[np.ndarray] = None) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.chi(0.0) != 0 or self.alpha1(0.0) != 0:
            raise ValueError("chi and alpha1 must vanish at 0")
        grid = np.linspace(0.0, 10.0, 201) if grid is None else grid
        for name, fn in (("chi", self.chi), ("alpha1", self.alpha1)):
            vals = np.array([fn(float(s)) for s in grid])
            if np.any(np.diff(vals) <= 0):
                raise ValueError(f"{name} is not strictly increasing on the sample grid")

    def margin(self, x, e) -> float:
        return trigger_margin(x, e, self)


def trigger_margin(x, e, rule: TriggerRule) -> float:
    """sigma*alpha1(|x|) - chi(|e|); an event fires when this reaches 0 from above."""
    nx = float(np.linalg.norm(np.atleast_1d(x)))
    ne = float(np.linalg.norm(np.atleast_1d(e)))
    return rule.sigma * rule.alpha1(nx) - rule.chi(ne)


def locate_crossing(margin_at: Callable[[float], float], t_lo: float, t_hi: float,
                    tol: float, rel_tol: float = 0.0) -> float:
    """Bisect to the first time the margin is <= 0.

    Requires margin_at(t_lo) > 0 >= margin_at(t_hi); if the margin is already
    non-positive at ``t_lo`` that time is returned. Stops once the bracket is
    no wider than ``tol`` and no wider than ``rel_tol`` times its distance
    from ``t_lo`` (the latter keeps very short gaps resolved).
    """
    if margin_at(t_lo) <= 0:
        return t_lo
    if margin_at(t_hi) > 0:
        raise CrossingError(f"no sign change on [{t_lo}, {t_hi}]")
    lo, hi = t_lo, t_hi
    while hi - lo > tol or hi - lo > rel_tol * (hi - t_lo):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if margin_at(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return hi


def held_input(model: SystemModel, x_at_event) -> np.ndarray:
    return np.atleast_1d(np.asarray(model.feedback_law(np.atleast_1d(x_at_event)), dtype=float))


class ModeKind(str, enum.Enum):
    OPEN_LOOP = "open_loop"
    EVENT_ONLY = "event_only"
    IMPULSIVE_ONLY = "impulsive_only"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class ControllerMode:
    kind: ModeKind
    h: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        if self.kind in (ModeKind.IMPULSIVE_ONLY, ModeKind.HYBRID):
            if self.h is None or not self.h > 0:
                raise ValueError(f"mode {self.kind.value} needs a dwell h > 0")

    @classmethod
    def open_loop(cls) -> "ControllerMode":
        return cls(ModeKind.OPEN_LOOP)

    @classmethod
    def event_only(cls) -> "ControllerMode":
        return cls(ModeKind.EVENT_ONLY)

    @classmethod
    def impulsive_only(cls, h: float) -> "ControllerMode":
        return cls(ModeKind.IMPULSIVE_ONLY, h)

    @classmethod
    def hybrid(cls, h: float) -> "ControllerMode":
        return cls(ModeKind.HYBRID, h)


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str
    state_before: np.ndarray
    state_after: np.ndarray
    input_after: np.ndarray


@dataclass
class EventLog:
    records: list[EventRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, record: EventRecord) -> None:
        if self.records and record.time < self.records[-1].time:
            raise ValueError("event times must be nondecreasing")
        self.records.append(record)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def count(self, kind: Optional[str] = None) -> int:
        if kind is None:
            return len(self.records)
        return sum(1 for r in self.records if r.kind == kind)


@dataclass
class SimResult:
    trajectory: HistoryBuffer
    events: EventLog
    mode: ControllerMode
    solver: SolverConfig
    termination: str  # horizon | zeno_guard | error
    inputs: list[np.ndarray]
    flags: list[int]
    t0: float
    initial_input: np.ndarray
    candidates: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def final_time(self) -> float:
        return self.trajectory.t_max

    @property
    def zeno_flagged(self) -> bool:
        return self.termination == "zeno_guard"


class _ZenoGuard(Exception):
    pass


class _Runner:
    """Mutable state of one closed-loop run."""

    def __init__(self, model, rule, mode, solver, buffer, zeno_cap):
        self.model = model
        self.rule = rule
        self.mode = mode
        self.solver = solver
        self.buf = buffer
        self.zeno_cap = zeno_cap
        self.t, self.x = buffer.last()
        self.ref = self.x
        self.log = EventLog()
        self.candidates: list[float] = []
        self.recent: deque[float] = deque()
        if mode.kind in (ModeKind.EVENT_ONLY, ModeKind.HYBRID):
            self.u = held_input(model, self.x)
        else:
            self.u = np.zeros(model.input_dim)
        self.u0 = self.u
        n = len(buffer)
        self.inputs = [np.zeros(model.input_dim)] * (n - 1) + [self.u]
        self.flags = [FLAG_NONE] * n

    def _margin(self, y) -> float:
        e = self.ref - y
        if not np.any(e):
            return math.inf
        return trigger_margin(y, e, self.rule)

    def _commit(self, t, x) -> None:
        self.buf.append(t, x)
        self.t, self.x = t, x
        self.inputs.append(self.u)
        self.flags.append(FLAG_NONE)

    def advance(self, t_target: float, detect: bool = False, land: bool = False) -> Optional[float]:
        """Step toward t_target; with ``detect`` stop scanning at the first crossing.

        With ``land`` the crossing becomes the current point and the run
        stops there; otherwise the containing step is committed in full and
        the crossing time is returned.  A landed crossing closer to the
        current time than float resolution allows is not sampled: the state
        moves on and the buffer keeps the sample already stored at that time.
        """
        model, dt = self.model, self.solver.dt
        for t_next in step_times(self.t, t_target, dt):
            t_prev, x_prev = self.t, self.x
            step = t_next - t_prev
            x_next = rk4_step(model, self.buf, t_prev, x_prev, self.u, step)
            if detect and self._margin(x_next) <= 0:
                def substep(s):
                    return rk4_step(model, self.buf, t_prev, x_prev, self.u, s)

                def margin_at(s):
                    return self._margin(x_prev if s == 0 else substep(s))

                s_hit = locate_crossing(margin_at, 0.0, step, self.solver.tol_event, GAP_REL_TOL)
                t_hit = t_next if s_hit >= step else min(t_prev + s_hit, t_next)
                if not land:
                    self._commit(t_next, x_next)
                    return t_hit
                if s_hit < step:
                    x_next = substep(s_hit)
                if t_hit > t_prev:
                    self._commit(t_hit, x_next)
                else:
                    self.x = x_next
                return t_hit
            self._commit(t_next, x_next)
        return None

    def feedback_update(self) -> None:
        self.ref = self.x
        self.u = held_input(self.model, self.x)
        self.inputs[-1] = self.u
        self.flags[-1] = FLAG_FEEDBACK
        self.log.append(EventRecord(self.t, FEEDBACK, self.x, self.x, self.u))
        self._guard()

    def impulse_update(self, with_feedback: bool) -> None:
        x_minus = self.x
        x_plus = apply_impulse(self.model, x_minus)
        self.buf.jump(x_plus)
        self.x = x_plus
        self.ref = x_plus
        if with_feedback:
            self.u = held_input(self.model, x_plus)
        self.inputs[-1] = self.u
        self.flags[-1] = FLAG_IMPULSE
        self.log.append(EventRecord(self.t, IMPULSE, x_minus, x_plus, self.u))
        self._guard()

    def _guard(self) -> None:
        self.recent.append(self.t)
        while self.recent and self.recent[0] <= self.t - 1.0:
            self.recent.popleft()
        if len(self.recent) > self.zeno_cap:
            raise _ZenoGuard()

    # regimes ---------------------------------------------------------------

    def open_loop(self, T):
        self.advance(T)

    def event_only(self, T):
        while self.t < T:
            if self.advance(T, detect=True, land=True) is None:
                break
            self.feedback_update()

    def impulsive_only(self, T):
        h = self.mode.h
        t0 = self.t
        n = math.floor((T - t0) / h)
        for j in range(1, n + 1):
            self.advance(min(t0 + j * h, T))
            self.impulse_update(with_feedback=False)
        self.advance(T)

    def hybrid(self, T):
        h = self.mode.h
        while self.t < T:
            t_i = self.t
            t_dwell = t_i + h
            stop = min(t_dwell, T)
            cand = self.advance(stop, detect=True, land=False)
            if cand is not None:
                # candidate inside the dwell: hold the input to t_i + h, then jump
                self.candidates.append(cand)
                self.advance(stop)
                if t_dwell > T:
                    break
                self.impulse_update(with_feedback=True)
                continue
            if t_dwell > T:
                break
            cand = self.advance(T, detect=True, land=True)
            if cand is None:
                break
            self.feedback_update()


def run_simulation(model: SystemModel, rule: Optional[TriggerRule], mode: ControllerMode,
                   solver: SolverConfig, phi=1.0, zeno_cap: int = DEFAULT_ZENO_CAP,
                   history: Optional[HistoryBuffer] = None) -> SimResult:
    """Simulate the closed loop from the initial segment ``phi`` over [t0, horizon].

    ``phi`` is a constant vector or a callable of s in [-tau, 0]. A tripped
    Zeno guard ends the run early with ``termination == "zeno_guard"``.
    """
    solver.validate(model)
    if mode.kind in (ModeKind.EVENT_ONLY, ModeKind.HYBRID):
        if rule is None:
            raise ValueError(f"mode {mode.kind.value} needs a trigger rule")
        if not rule.sigma > 0:
            raise ValueError(f"sigma must be positive, got {rule.sigma}")
    t0 = solver.t0
    if history is None:
        if callable(phi):
            history = HistoryBuffer.from_function(phi, t0, model.tau, solver.dt, solver.interpolation)
        else:
            history = HistoryBuffer.constant(phi, t0, model.tau, solver.interpolation)
    runner = _Runner(model, rule, mode, solver, history, zeno_cap)
    termination, message = "horizon", ""
    try:
        getattr(runner, mode.kind.value)(solver.horizon)
    except _ZenoGuard:
        termination = "zeno_guard"
        message = f"more than {zeno_cap} events within one time unit before t={runner.t}"
    return SimResult(
        trajectory=runner.buf,
        events=runner.log,
        mode=mode,
        solver=solver,
        termination=termination,
        inputs=runner.inputs,
        flags=runner.flags,
        t0=t0,
        initial_input=runner.u0,
        candidates=runner.candidates,
        message=message,
    )


def margin_series(result: SimResult, rule: TriggerRule) -> tuple[np.ndarray, np.ndarray]:
    """Trigger margin at every sample after t0, measured against the last update.

    At an event time the left limit is used with the reference of the
    interval that the event closes.
    """
    buf = result.trajectory
    times = buf.times
    refs = [(result.t0, buf.evaluate(result.t0, "right"))]
    refs += [(r.time, r.state_after) for r in result.events]
    out_t, out_m = [], []
    j = 0
    start = int(np.searchsorted(times, result.t0, side="right"))
    for i in range(start, len(times)):
        t = times[i]
        while j + 1 < len(refs) and refs[j + 1][0] < t:
            j += 1
        x = buf.left_value(i)
        ref = refs[j][1]
        out_t.append(t)
        out_m.append(trigger_margin(x, ref - x, rule))
    return np.asarray(out_t), np.asarray(out_m)
