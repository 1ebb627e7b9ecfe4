"""Closed-form stability conditions for the scalar delay example family.

With V(x) = x^2 the Razumikhin conditions reduce to scalar inequalities in
the constants (b, k, sigma0, q, h, rho). The parameter-selection pipeline is

    dwell_bound -> choose h -> fixed_point_roots -> rho_interval -> choose rho, q

and every step is exposed on its own.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

CbarFn = Callable[[float], float]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
Q_HI_START = 1e6
Q_HI_LIMIT = 1e300


class CertificateError(ValueError):
    pass


class NoRootError(CertificateError):
    """h is at or beyond the dwell bound, so H(q) = q - exp(cbar(q) h) has no roots."""

    def __init__(self, h: float, h_max: float):
        super().__init__(f"h={h} is not below the dwell bound h_max={h_max:.8g}")
        self.h = h
        self.h_max = h_max


class InfeasibleDwellError(CertificateError):
    def __init__(self, target_h: float, h_max: float):
        super().__init__(f"target h={target_h} is infeasible; h_max={h_max:.8g}")
        self.target_h = target_h
        self.h_max = h_max


def feedback_margin(k: float, b: float, q: float, sigma0: float) -> float:
    """k + sqrt(q)|b| + sqrt(sigma0)|k|; negative means the event-triggered loop decays."""
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    if sigma0 < 0:
        raise ValueError(f"sigma0 must be nonnegative, got {sigma0}")
    return k + math.sqrt(q) * abs(b) + math.sqrt(sigma0) * abs(k)


def decay_rate(k: float, b: float, q: float, sigma0: float) -> float:
    """Razumikhin decay constant c = -(2k + 2 sqrt(q)|b| + sqrt(sigma0)|k|)."""
    return -(2.0 * k + 2.0 * math.sqrt(q) * abs(b) + math.sqrt(sigma0) * abs(k))


def cbar(q: float, abs_b: float, abs_k: float, mode: str = "full") -> float:
    """Growth rate bound on dwell intervals: 2 sqrt(q)(|b| + |k|), or 2 sqrt(q)|b| without feedback."""
    if mode == "full":
        return 2.0 * math.sqrt(q) * (abs(abs_b) + abs(abs_k))
    if mode == "impulsive_only":
        return 2.0 * math.sqrt(q) * abs(abs_b)
    raise ValueError(f"unknown cbar mode {mode!r}")


def cbar_function(b: float, k: float, mode: str = "full") -> CbarFn:
    return lambda q: cbar(q, abs(b), abs(k), mode)


@dataclass(frozen=True)
class ConditionIII:
    passed: bool
    q: float
    inv_rho: float
    growth: float  # exp(cbar * h)
    gap_q: float  # q - 1/rho
    gap_rho: float  # 1/rho - exp(cbar * h)


def condition_iii_check(q: float, rho: float, cbar_value: float, h: float) -> ConditionIII:
    """Strict check of q > 1/rho > exp(cbar h)."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    inv_rho = 1.0 / rho
    growth = math.exp(cbar_value * h)
    return ConditionIII(
        passed=bool(q > 1 and q > inv_rho and inv_rho > growth),
        q=q,
        inv_rho=inv_rho,
        growth=growth,
        gap_q=q - inv_rho,
        gap_rho=inv_rho - growth,
    )


def golden_section_max(f: Callable[[float], float], a: float, b: float,
                       tol: float = 1e-12) -> tuple[float, float]:
    """Maximise a unimodal f on [a, b]; returns (argmax, max)."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


@dataclass(frozen=True)
class DwellBound:
    q_star: float
    h_max: float
    diverged: bool = False
    unimodal: bool = True


def dwell_bound(cbar_of_q: CbarFn, q_max: float = 1e12, n_grid: int = 2401) -> DwellBound:
    """Largest admissible dwell sup_{q>1} ln(q)/cbar(q) and its maximiser.

    A log-spaced scan brackets the peak, then golden-section search refines
    it. A peak at the top of the scan means the supremum is unbounded; a scan
    that is not rise-then-fall is refined around its best point and flagged.
    """
    # offsets q - 1 on a log grid keep resolution near q = 1
    qs = 1.0 + np.logspace(-8, math.log10(q_max), n_grid)
    cb = np.array([cbar_of_q(float(q)) for q in qs])
    if np.any(cb <= 0) or not np.all(np.isfinite(cb)):
        raise CertificateError("cbar(q) must be positive and finite for q > 1")
    g = np.log(qs) / cb
    j = int(np.argmax(g))
    if j == len(qs) - 1:
        return DwellBound(q_star=math.inf, h_max=math.inf, diverged=True)
    d = np.diff(g)
    unimodal = bool(np.all(d[:j] >= 0) and np.all(d[j:] <= 0))
    lo = float(qs[max(j - 1, 0)])
    hi = float(qs[j + 1])

    def objective(q):
        return math.log(q) / cbar_of_q(q)

    q_star, h_max = golden_section_max(objective, lo, hi)
    return DwellBound(q_star=q_star, h_max=h_max, diverged=False, unimodal=unimodal)


def _bisect_sign(fn: Callable[[float], float], neg: float, pos: float, tol: float) -> float:
    """Root of fn between a point where fn < 0 and a point where fn > 0."""
    while abs(pos - neg) > tol:
        mid = 0.5 * (neg + pos)
        if mid in (neg, pos):
            break
        if fn(mid) > 0:
            pos = mid
        else:
            neg = mid
    return 0.5 * (neg + pos)


def fixed_point_roots(h: float, cbar_of_q: CbarFn, tol: float = 1e-10,
                      bound: Optional[DwellBound] = None) -> tuple[float, float]:
    """The two roots q1 < q2 of H(q) = q - exp(cbar(q) h); H > 0 strictly between them."""
    bound = dwell_bound(cbar_of_q) if bound is None else bound
    if bound.diverged:
        raise CertificateError("dwell bound is unbounded; H(q) has no upper root")
    if not 0 < h < bound.h_max:
        raise NoRootError(h, bound.h_max)

    # same sign as H, without overflowing exp for large q
    def sign_fn(q):
        return math.log(q) - cbar_of_q(q) * h

    q_star = bound.q_star
    if not sign_fn(q_star) > 0:
        raise NoRootError(h, bound.h_max)
    q_lo = 1.0
    if sign_fn(q_lo) >= 0:
        raise CertificateError("H(1) must be negative; cbar(1) is not positive")
    q1 = _bisect_sign(sign_fn, q_lo, q_star, tol)
    q_hi = max(Q_HI_START, 2.0 * q_star)
    while sign_fn(q_hi) >= 0:
        q_hi *= 2.0
        if q_hi > Q_HI_LIMIT:
            raise CertificateError("upper root of H(q) lies beyond the search window")
    q2 = _bisect_sign(sign_fn, q_hi, q_star, tol)
    return q1, q2


def H(q: float, h: float, cbar_of_q: CbarFn) -> float:
    return q - math.exp(cbar_of_q(q) * h)


def rho_interval(q1: float, q2: float) -> tuple[float, float]:
    """Admissible jump factors (1/q2, 1/q1)."""
    if not 1 < q1 < q2:
        raise CertificateError(f"need 1 < q1 < q2, got ({q1}, {q2})")
    return 1.0 / q2, 1.0 / q1


def q_upper(rho: float, h: float, cbar_of_q: CbarFn, q_hint: float, tol: float = 1e-10) -> float:
    """Largest q with exp(cbar(q) h) < 1/rho, for increasing cbar.

    ``q_hint`` must already satisfy the inequality.
    """
    target = math.log(1.0 / rho)

    def fn(q):
        return cbar_of_q(q) * h - target

    if fn(q_hint) >= 0:
        raise CertificateError("q_hint does not satisfy exp(cbar(q) h) < 1/rho")
    hi = max(2.0 * q_hint, 2.0)
    while fn(hi) < 0:
        hi *= 2.0
        if hi > Q_HI_LIMIT:
            return math.inf
    return _bisect_sign(fn, q_hint, hi, tol)


@dataclass
class ExampleConstants:
    b: float = -0.1
    k: float = -0.2
    r: float = 16.0
    sigma0: float = 0.36
    q: Optional[float] = None
    h: Optional[float] = None
    beta: Optional[float] = None
    rho: Optional[float] = None
    cbar: Optional[float] = None
    c: Optional[float] = None

    def __post_init__(self):
        if self.q is not None and not self.q > 1:
            raise ValueError(f"q must exceed 1, got {self.q}")
        if self.beta is not None and self.rho is None:
            self.rho = (1.0 + self.beta) ** 2


@dataclass
class CertificateReport:
    h: float
    q: float
    rho: float
    beta: float
    sigma0: float
    feedback_margin: float
    feedback_ok: bool
    cbar: float
    cbar_mode: str
    condition_iii: ConditionIII
    q_star: float
    h_max: float
    q1: float
    q2: float
    rho_lo: float
    rho_hi: float
    q_window: tuple[float, float]
    decay_rate: float
    narrative: list[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.feedback_ok and self.condition_iii.passed

    def coherent(self) -> bool:
        """Booleans agree with the reported numbers."""
        c3 = self.condition_iii
        return (
            self.feedback_ok == (self.feedback_margin < 0)
            and c3.passed == (c3.q > 1 and c3.q > c3.inv_rho and c3.inv_rho > c3.growth)
            and math.isclose(c3.inv_rho, 1.0 / self.rho)
            and math.isclose(c3.growth, math.exp(self.cbar * self.h))
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["certified"] = self.certified
        return d


def _narrative(fb_margin: float, c3: ConditionIII) -> list[str]:
    lines = []
    if fb_margin >= 0:
        lines.append(f"feedback condition fails: k + sqrt(q)|b| + sqrt(sigma0)|k| = {fb_margin:.6g} >= 0")
    else:
        lines.append(f"feedback condition holds with margin {fb_margin:.6g}")
    if not c3.q > c3.inv_rho:
        lines.append(f"condition (iii) fails: q={c3.q:.6g} <= 1/rho={c3.inv_rho:.6g}")
    elif not c3.inv_rho > c3.growth:
        lines.append(f"condition (iii) fails: 1/rho={c3.inv_rho:.6g} <= exp(cbar h)={c3.growth:.6g}")
    else:
        lines.append(f"condition (iii) holds with gaps {c3.gap_q:.6g} and {c3.gap_rho:.6g}")
    return lines


def certify(b: float, k: float, q: float, h: float, rho: float, sigma0: float,
            mode: str = "full", bound: Optional[DwellBound] = None,
            roots: Optional[tuple[float, float]] = None) -> CertificateReport:
    """Evaluate both stability conditions for user-chosen constants."""
    fn = cbar_function(b, k, mode)
    bound = dwell_bound(fn) if bound is None else bound
    if roots is None:
        try:
            roots = fixed_point_roots(h, fn, bound=bound)
        except NoRootError:
            roots = (math.nan, math.nan)
    q1, q2 = roots
    rho_lo, rho_hi = (1.0 / q2, 1.0 / q1) if q1 == q1 else (math.nan, math.nan)
    cb = fn(q)
    c3 = condition_iii_check(q, rho, cb, h)
    fb = feedback_margin(k, b, q, sigma0)
    beta = math.sqrt(rho) - 1.0
    return CertificateReport(
        h=h, q=q, rho=rho, beta=beta, sigma0=sigma0,
        feedback_margin=fb, feedback_ok=fb < 0,
        cbar=cb, cbar_mode=mode, condition_iii=c3,
        q_star=bound.q_star, h_max=bound.h_max,
        q1=q1, q2=q2, rho_lo=rho_lo, rho_hi=rho_hi,
        q_window=(1.0 / rho, q2),
        decay_rate=decay_rate(k, b, q, sigma0),
        narrative=_narrative(fb, c3),
    )


def select_parameters(b: float, k: float, target_h: Optional[float] = None,
                      sigma0: float = 0.36, mode: str = "full", r: float = 16.0,
                      contraction: bool = True) -> tuple[ExampleConstants, CertificateReport]:
    """Pick (h, rho, beta, q) satisfying condition (iii) for the scalar example.

    h is ``target_h`` or half the dwell bound; rho is the geometric mean of the
    admissible interval; q is the midpoint of the window of q for which
    q > 1/rho > exp(cbar(q) h) holds with cbar evaluated at q itself.
    """
    fn = cbar_function(b, k, mode)
    bound = dwell_bound(fn)
    if bound.diverged:
        raise CertificateError("dwell bound is unbounded for this cbar")
    if target_h is None:
        h = 0.5 * bound.h_max
    elif not 0 < target_h < bound.h_max:
        raise InfeasibleDwellError(target_h, bound.h_max)
    else:
        h = target_h
    q1, q2 = fixed_point_roots(h, fn, bound=bound)
    rho_lo, rho_hi = rho_interval(q1, q2)
    rho = math.sqrt(rho_lo * rho_hi)
    beta = math.sqrt(rho) - 1.0 if contraction else -math.sqrt(rho) - 1.0
    q_lo = 1.0 / rho
    q_top = min(q2, q_upper(rho, h, fn, q_lo))
    q = 0.5 * (q_lo + q_top)
    report = certify(b, k, q, h, rho, sigma0, mode, bound=bound, roots=(q1, q2))
    report.beta = beta
    report.q_window = (q_lo, q_top)
    consts = ExampleConstants(b=b, k=k, r=r, sigma0=sigma0, q=q, h=h, beta=beta, rho=rho,
                              cbar=report.cbar, c=report.decay_rate)
    return consts, report
