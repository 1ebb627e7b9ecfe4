"""Fixed-step integration of delay differential equations with state jumps.

The history buffer is the recorded trajectory x(s) for s in [t0 - tau, t].
Impulse times are stored once with two values (left and right limit) so that
interpolation never smears a jump.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

LEFT = "left"
RIGHT = "right"

# drift(t, x(t), [x(t - d) for d in delays]) -> dx/dt without the control term
Drift = Callable[[float, np.ndarray, Sequence[np.ndarray]], np.ndarray]
Law = Callable[[np.ndarray], np.ndarray]


class HistoryError(Exception):
    """Base class for history buffer failures."""


class HistoryRangeError(HistoryError, ValueError):
    """Requested time lies outside the recorded interval."""


class HistoryStateError(HistoryError, RuntimeError):
    """Buffer is empty or does not cover the interval a step needs."""


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


class HistoryBuffer:
    """Piecewise-continuous trajectory with dual-valued discontinuities.

    Parameters
    ----------
    interpolation : {"linear", "cubic"}
        Cubic uses a 4-point Lagrange stencil that stays inside one
        continuous piece, falling back to linear when the piece is short.
    """

    def __init__(self, interpolation: str = "linear"):
        if interpolation not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {interpolation!r}")
        self.interpolation = interpolation
        self._t: list[float] = []
        self._x: list[np.ndarray] = []  # right limits
        self._left: dict[int, np.ndarray] = {}
        self._jumps: list[int] = []  # sorted sample indices with a jump

    @classmethod
    def constant(cls, value, t0: float, tau: float, interpolation: str = "linear") -> "HistoryBuffer":
        """Initial segment phi(s) = value on [t0 - tau, t0]."""
        buf = cls(interpolation)
        v = _vec(value)
        if tau > 0:
            buf.append(t0 - tau, v)
        buf.append(t0, v)
        return buf

    @classmethod
    def from_function(cls, phi: Callable[[float], object], t0: float, tau: float,
                      dt: float, interpolation: str = "linear") -> "HistoryBuffer":
        """Sample an initial function phi(s), s in [-tau, 0], on a grid of width <= dt."""
        buf = cls(interpolation)
        if tau > 0:
            n = max(1, math.ceil(tau / dt - 1e-9))
            for j in range(n):
                s = -tau + j * tau / n
                buf.append(t0 + s, _vec(phi(s)))
        buf.append(t0, _vec(phi(0.0)))
        return buf

    def __len__(self) -> int:
        return len(self._t)

    @property
    def t_min(self) -> float:
        self._require_nonempty()
        return self._t[0]

    @property
    def t_max(self) -> float:
        self._require_nonempty()
        return self._t[-1]

    @property
    def dim(self) -> int:
        self._require_nonempty()
        return self._x[0].shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._t)

    @property
    def states(self) -> np.ndarray:
        """Right-limit states, one row per sample."""
        return np.vstack(self._x) if self._x else np.empty((0, 0))

    @property
    def discontinuities(self) -> list[float]:
        return [self._t[i] for i in self._jumps]

    def last(self) -> tuple[float, np.ndarray]:
        self._require_nonempty()
        return self._t[-1], self._x[-1]

    def is_jump(self, i: int) -> bool:
        return i in self._left

    def left_value(self, i: int) -> np.ndarray:
        return self._left.get(i, self._x[i])

    def right_value(self, i: int) -> np.ndarray:
        return self._x[i]

    def append(self, t: float, x) -> None:
        if self._t and not t > self._t[-1]:
            raise ValueError(f"sample time {t!r} does not exceed last time {self._t[-1]!r}")
        self._t.append(float(t))
        self._x.append(_vec(x))

    def jump(self, x_plus) -> None:
        """Turn the last sample into a discontinuity whose right limit is x_plus."""
        self._require_nonempty()
        i = len(self._t) - 1
        if i in self._left:
            raise ValueError(f"sample at t={self._t[i]!r} already holds a jump")
        self._left[i] = self._x[i]
        self._x[i] = _vec(x_plus)
        self._jumps.append(i)

    def evaluate(self, t: float, side: str = RIGHT) -> np.ndarray:
        self._require_nonempty()
        ts = self._t
        if t < ts[0] or t > ts[-1]:
            raise HistoryRangeError(f"t={t!r} outside [{ts[0]!r}, {ts[-1]!r}]")
        i = bisect.bisect_left(ts, t)
        if ts[i] == t:
            return self.left_value(i) if side == LEFT else self._x[i]
        # ts[i-1] < t < ts[i]
        if self.interpolation == "cubic":
            y = self._cubic(i - 1, t)
            if y is not None:
                return y
        ta, tb = ts[i - 1], ts[i]
        xa, xb = self._x[i - 1], self.left_value(i)
        return xa + (xb - xa) * ((t - ta) / (tb - ta))

    def _cubic(self, i: int, t: float) -> Optional[np.ndarray]:
        j = bisect.bisect_right(self._jumps, i) - 1
        lo = self._jumps[j] if j >= 0 else 0
        k = bisect.bisect_left(self._jumps, i + 1)
        hi = self._jumps[k] if k < len(self._jumps) else len(self._t) - 1
        if hi - lo < 3:
            return None
        start = min(max(i - 1, lo), hi - 3)
        nodes = range(start, start + 4)
        ts = [self._t[n] for n in nodes]
        xs = [self.left_value(n) if n == hi else self._x[n] for n in nodes]
        out = np.zeros_like(xs[0])
        for a in range(4):
            w = 1.0
            for b in range(4):
                if a != b:
                    w *= (t - ts[b]) / (ts[a] - ts[b])
            out = out + w * xs[a]
        return out

    def window(self, t_from: float, t_to: float) -> tuple[np.ndarray, list[np.ndarray]]:
        """Stored samples with times in [t_from, t_to], both limits at jumps."""
        a = bisect.bisect_left(self._t, t_from)
        b = bisect.bisect_right(self._t, t_to)
        times, values = [], []
        for i in range(a, b):
            if i in self._left:
                times.append(self._t[i])
                values.append(self._left[i])
            times.append(self._t[i])
            values.append(self._x[i])
        return np.asarray(times), values

    def _require_nonempty(self) -> None:
        if not self._t:
            raise HistoryStateError("history buffer is empty")


@dataclass
class SystemModel:
    """dx/dt = drift(t, x, delayed) + B u, jumps x+ = x- + B g(x-).

    Only finitely many discrete delays are supported; ``drift`` receives the
    delayed states in the order of ``delays``.
    """

    dim: int
    delays: tuple[float, ...]
    drift: Drift
    input_gain: np.ndarray
    feedback_law: Law
    impulse_law: Law
    tau: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        self.delays = tuple(float(d) for d in self.delays)
        if any(d < 0 for d in self.delays):
            raise ValueError("delays must be nonnegative")
        self.input_gain = np.atleast_2d(np.asarray(self.input_gain, dtype=float))
        if self.input_gain.shape[0] != self.dim:
            raise ValueError(f"input_gain has {self.input_gain.shape[0]} rows, expected {self.dim}")
        longest = max(self.delays, default=0.0)
        if self.tau is None:
            self.tau = longest
        elif self.tau < longest:
            raise ValueError(f"tau={self.tau} is shorter than delay {longest}")

    @property
    def input_dim(self) -> int:
        return self.input_gain.shape[1]

    @property
    def min_positive_delay(self) -> float:
        pos = [d for d in self.delays if d > 0]
        return min(pos) if pos else math.inf

    def admits_trivial_solution(self, t: float = 0.0) -> bool:
        zero = np.zeros(self.dim)
        f0 = _vec(self.drift(t, zero, [zero for _ in self.delays]))
        k0 = _vec(self.feedback_law(zero))
        g0 = _vec(self.impulse_law(zero))
        return not (f0.any() or k0.any() or g0.any())


def scalar_delay_model(b: float = -0.1, k: float = -0.2, r: float = 16.0,
                       beta: float = 0.0) -> SystemModel:
    """dx/dt = b x(t - r) + u, feedback u = k x, jump x+ = (1 + beta) x-."""

    def drift(t, x, delayed):
        return b * delayed[0]

    return SystemModel(
        dim=1,
        delays=(r,),
        drift=drift,
        input_gain=np.ones((1, 1)),
        feedback_law=lambda x: k * x,
        impulse_law=lambda x: beta * x,
        name="scalar_delay",
    )


@dataclass
class SolverConfig:
    dt: float = 0.01
    horizon: float = 100.0
    interpolation: str = "linear"
    tol_event: float = 1e-9
    t0: float = 0.0

    def validate(self, model: Optional[SystemModel] = None) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tol_event > 0:
            raise ValueError(f"tol_event must be positive, got {self.tol_event}")
        if not self.horizon > self.t0:
            raise ValueError("horizon must exceed t0")
        if self.interpolation not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if model is not None and self.dt > model.min_positive_delay:
            raise ValueError(f"dt={self.dt} exceeds smallest delay {model.min_positive_delay}")


def _rhs(model: SystemModel, buffer: HistoryBuffer, s: float, y: np.ndarray,
         bu: np.ndarray) -> np.ndarray:
    delayed = [y if d == 0 else buffer.evaluate(s - d, RIGHT) for d in model.delays]
    return model.drift(s, y, delayed) + bu


def rk4_step(model: SystemModel, buffer: HistoryBuffer, t: float, x, u_held,
             dt: float) -> np.ndarray:
    """One classical RK4 step of length dt from (t, x) under a held input.

    Delayed states are read from ``buffer`` (right limits); ``dt`` must not
    exceed the smallest positive delay so no stage reads the step in flight.
    """
    if dt > model.min_positive_delay:
        raise ValueError(f"dt={dt} exceeds smallest delay {model.min_positive_delay}")
    if model.delays and (len(buffer) == 0 or buffer.t_min > t - model.tau or buffer.t_max < t):
        span = f"[{buffer.t_min}, {buffer.t_max}]" if len(buffer) else "empty"
        raise HistoryStateError(f"buffer {span} does not cover [{t - model.tau}, {t}]")
    x = _vec(x)
    bu = model.input_gain @ _vec(u_held)
    half = 0.5 * dt
    k1 = _rhs(model, buffer, t, x, bu)
    k2 = _rhs(model, buffer, t + half, x + half * k1, bu)
    k3 = _rhs(model, buffer, t + half, x + half * k2, bu)
    k4 = _rhs(model, buffer, t + dt, x + dt * k3, bu)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def apply_impulse(model: SystemModel, x_minus) -> np.ndarray:
    x_minus = _vec(x_minus)
    return x_minus + model.input_gain @ _vec(model.impulse_law(x_minus))


def step_times(t_start: float, t_end: float, dt: float) -> list[float]:
    """Grid t_start + j*dt with the last node moved onto t_end exactly."""
    if not t_end > t_start:
        return []
    n = max(1, math.ceil((t_end - t_start) / dt - 1e-9))
    return [t_start + j * dt for j in range(1, n)] + [t_end]


def integrate_segment(model: SystemModel, buffer: HistoryBuffer, t_start: float,
                      t_end: float, u_held, dt: float,
                      observer: Optional[Callable[[float, np.ndarray], None]] = None) -> np.ndarray:
    """Advance from the buffer's last sample at ``t_start`` to ``t_end``.

    Returns the state at ``t_end``; every accepted step is appended to the
    buffer and reported to ``observer(t, x)``.
    """
    t, x = buffer.last()
    if t != t_start:
        raise HistoryStateError(f"buffer ends at {t}, segment starts at {t_start}")
    for t_next in step_times(t_start, t_end, dt):
        x = rk4_step(model, buffer, t, x, u_held, t_next - t)
        buffer.append(t_next, x)
        t = t_next
        if observer is not None:
            observer(t, x)
    return x
