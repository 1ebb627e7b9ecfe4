import math

import pytest

from hybrid_ei.certificates import (
    CertificateError,
    H,
    InfeasibleDwellError,
    NoRootError,
    cbar,
    cbar_function,
    certify,
    condition_iii_check,
    decay_rate,
    dwell_bound,
    feedback_margin,
    fixed_point_roots,
    golden_section_max,
    q_upper,
    rho_interval,
    select_parameters,
)

# oracles: roots of q = exp(0.6 sqrt(q) h) at h = 0.666, computed at 50 digits
Q1_ORACLE = 1.67806746416556
Q2_ORACLE = 162.159456383743
H_MAX = 10.0 / (3.0 * math.e)
FN = cbar_function(-0.1, -0.2)


# feedback inequality --------------------------------------------------------

def test_feedback_margin_example_is_positive():
    expected = -0.2 + 0.1 * math.sqrt(3.0) + 0.12
    assert feedback_margin(-0.2, -0.1, 3.0, 0.36) == pytest.approx(expected, abs=1e-15)
    assert feedback_margin(-0.2, -0.1, 3.0, 0.36) == pytest.approx(0.09320508, abs=1e-8)


def test_feedback_margin_other_cases():
    assert feedback_margin(-0.2, 0.0, 4.0, 0.0) == pytest.approx(-0.2)
    assert feedback_margin(-1.0, -0.1, 4.0, 0.25) == pytest.approx(-0.3)
    with pytest.raises(ValueError):
        feedback_margin(-1.0, -0.1, 1.0, 0.25)


def test_decay_rate_sign_matches_margin():
    assert decay_rate(-1.0, -0.1, 4.0, 0.25) > 0


# cbar -----------------------------------------------------------------------

def test_cbar_values():
    assert cbar(3.0, 0.1, 0.2) == pytest.approx(0.6 * math.sqrt(3.0), abs=1e-12)
    assert cbar(3.0, 0.1, 0.2, "impulsive_only") == pytest.approx(0.2 * math.sqrt(3.0), abs=1e-12)
    assert cbar(1.0 + 1e-9, 0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        cbar(3.0, 0.1, 0.2, "other")


# condition (iii) ------------------------------------------------------------

def test_condition_iii_tight_pass():
    res = condition_iii_check(3.0, 0.4998, 0.6 * math.sqrt(3.0), 0.666)
    assert res.passed
    assert res.inv_rho == pytest.approx(2.0008, abs=1e-4)
    assert res.growth == pytest.approx(1.99797, abs=1e-5)


def test_condition_iii_failures():
    assert not condition_iii_check(3.0, 1.0, 0.1, 1.0).passed
    assert not condition_iii_check(1.0 / 0.4998, 0.4998, 0.6 * math.sqrt(3.0), 0.666).passed


# dwell bound ----------------------------------------------------------------

def test_golden_section_on_parabola():
    x, fx = golden_section_max(lambda t: -(t - 0.3) ** 2, -1.0, 2.0)
    assert x == pytest.approx(0.3, abs=1e-6) and fx == pytest.approx(0.0, abs=1e-12)


def test_dwell_bound_analytic():
    bound = dwell_bound(FN)
    assert bound.h_max == pytest.approx(H_MAX, abs=1e-9)
    assert bound.q_star == pytest.approx(math.e ** 2, rel=1e-5)
    assert bound.unimodal and not bound.diverged


@pytest.mark.parametrize("a", [0.2, 0.6, 1.0])
def test_dwell_bound_scaling_law(a):
    assert dwell_bound(lambda q: a * math.sqrt(q)).h_max == pytest.approx(2.0 / (a * math.e), abs=1e-6)


def test_dwell_bound_constant_cbar_diverges():
    bound = dwell_bound(lambda q: 0.5)
    assert bound.diverged and math.isinf(bound.h_max)


# fixed point roots ----------------------------------------------------------

def test_roots_match_oracle():
    q1, q2 = fixed_point_roots(0.666, FN)
    assert q1 == pytest.approx(Q1_ORACLE, rel=1e-9)
    assert q2 == pytest.approx(Q2_ORACLE, rel=1e-9)


def test_root_correctness():
    q1, q2 = fixed_point_roots(0.666, FN)
    assert abs(H(q1, 0.666, FN)) < 1e-8
    assert abs(H(q2, 0.666, FN)) < 1e-8
    assert H(0.5 * (q1 + q2), 0.666, FN) > 0


def test_roots_near_bound_bracket_qstar():
    q1, q2 = fixed_point_roots(1.2, FN)
    assert q1 < math.e ** 2 < q2
    assert H(math.e ** 2, 1.2, FN) > 0


def test_roots_small_h_limits():
    q1, q2 = fixed_point_roots(1e-3, FN)
    assert 1.0 < q1 < 1.01 and q2 > 1e6


def test_no_root_beyond_bound():
    with pytest.raises(NoRootError) as info:
        fixed_point_roots(1.3, FN)
    assert info.value.h_max == pytest.approx(H_MAX, abs=1e-9)


# rho interval ---------------------------------------------------------------

def test_rho_interval_reciprocals():
    lo, hi = rho_interval(1.6792, 161.62)
    assert lo == pytest.approx(0.006187, abs=1e-6) and hi == pytest.approx(0.59552, abs=1e-5)
    lo, hi = rho_interval(1.5, 150.0)
    assert lo == pytest.approx(0.006667, abs=1e-6) and hi == pytest.approx(2.0 / 3.0)
    with pytest.raises(CertificateError):
        rho_interval(2.0, 2.0)


# parameter selection --------------------------------------------------------

def test_select_parameters_example():
    consts, rep = select_parameters(-0.1, -0.2, target_h=0.666)
    assert rep.q1 == pytest.approx(Q1_ORACLE, rel=1e-9)
    assert rep.q2 == pytest.approx(Q2_ORACLE, rel=1e-9)
    assert rep.rho_lo < 0.4998 < rep.rho_hi
    assert rep.condition_iii.passed
    assert consts.beta == pytest.approx(math.sqrt(consts.rho) - 1.0)
    assert consts.beta < 0
    assert rep.coherent()


def test_select_parameters_without_delay_coefficient():
    consts, rep = select_parameters(0.0, -0.2)
    assert rep.condition_iii.passed
    assert consts.h == pytest.approx(0.5 * dwell_bound(cbar_function(0.0, -0.2)).h_max)


def test_select_parameters_infeasible():
    with pytest.raises(InfeasibleDwellError) as info:
        select_parameters(-0.1, -0.2, target_h=2.0)
    assert info.value.h_max == pytest.approx(H_MAX, abs=1e-6)


def test_interval_consistency_corrected_window():
    # cbar is evaluated at q itself, so the admissible q window is (1/rho, q_upper(rho))
    q1, q2 = fixed_point_roots(0.666, FN)
    lo, hi = rho_interval(q1, q2)
    for frac in (0.05, 0.3, 0.5, 0.7, 0.95):
        rho = lo * (hi / lo) ** frac
        q_lo = 1.0 / rho
        q_top = min(q2, q_upper(rho, 0.666, FN, q_lo))
        assert q_lo < q_top
        for t in (0.01, 0.5, 0.99):
            q = q_lo + t * (q_top - q_lo)
            assert condition_iii_check(q, rho, FN(q), 0.666).passed
        assert not condition_iii_check(q_lo, rho, FN(q_lo), 0.666).passed
        assert not condition_iii_check(q_top * (1 + 1e-9), rho, FN(q_top * (1 + 1e-9)), 0.666).passed
    # rho endpoints fail
    assert not condition_iii_check(1.0 / hi, hi, FN(1.0 / hi), 0.666).passed
    assert not condition_iii_check(q2, lo, FN(q2), 0.666).passed


def test_literal_midpoint_rule_fails_condition_iii():
    q1, q2 = fixed_point_roots(0.666, FN)
    lo, hi = rho_interval(q1, q2)
    rho = math.sqrt(lo * hi)
    q_mid = 0.5 * (1.0 / rho + q2)
    assert not condition_iii_check(q_mid, rho, FN(q_mid), 0.666).passed


def test_report_coherence_and_dict():
    rep = certify(-0.1, -0.2, 3.0, 0.666, (1 - 0.293) ** 2, 0.36)
    assert rep.coherent()
    assert rep.condition_iii.passed and not rep.feedback_ok and not rep.certified
    d = rep.to_dict()
    assert d["certified"] is False
    assert any("feedback condition fails" in line for line in rep.narrative)
