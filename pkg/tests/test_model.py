import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magtunnel.model import (ModelParams, SpectralConstants, agmon_distance, e0_sequence, error_budget,
                             k_factor, magnetic_translation, tunneling_action, wedge_phase, xi_and_e, xi_h)

P1 = ModelParams(1.0, 1.0, 0.1)


def mp_agmon(B, R, r):
    with mp.workdps(40):
        B, R, r = mp.mpf(B), mp.mpf(R), mp.mpf(r)
        return B / 4 * (r * r - R * R) - B * R * R / 2 * mp.log(r / R)


def mp_s0(B, R, ell):
    with mp.workdps(40):
        B, R, ell = mp.mpf(B), mp.mpf(R), mp.mpf(ell)
        return B * ell / 4 * mp.sqrt(ell**2 - 4 * R**2) - B * R**2 * mp.acosh(ell / (2 * R))


def test_agmon_frozen_values():
    assert agmon_distance(P1, 1.0) == 0.0
    assert agmon_distance(P1, 2.0) == pytest.approx(0.403426, abs=5e-7)
    assert agmon_distance(P1, 5.0) == pytest.approx(5.195281, abs=5e-7)
    assert agmon_distance(P1, 2.0) == pytest.approx(float(mp_agmon(1, 1, 2)), rel=1e-14)


def test_agmon_rejects_inside_disc():
    with pytest.raises(ValueError):
        agmon_distance(P1, 0.5)


def test_action_frozen_values(consts):
    assert tunneling_action(P1, 2.0, consts.theta0).value == pytest.approx(0.0, abs=1e-15)
    assert tunneling_action(P1, 6.0, consts.theta0).S0 == pytest.approx(6.722534, abs=5e-7)
    p = ModelParams(1.0, 1.0, 0.01)
    want = float(mp_s0(1, 1, 6)) - 2 * math.sqrt(0.01 * consts.theta0) * 1.762747
    assert tunneling_action(p, 6.0, consts.theta0).value == pytest.approx(want, abs=1e-6)


def test_k_factor():
    assert k_factor(2.0, 1.0) == 1.0
    assert k_factor(6.0, 1.0) == pytest.approx(3 + 2 * math.sqrt(2), rel=1e-15)
    assert 1 / k_factor(6.0, 1.0) == pytest.approx(3 - math.sqrt(8), rel=1e-12)


@pytest.mark.parametrize("xi,e,mm,tie", [(10.3, 0.3, 10, False), (10.5, 0.5, 10, True), (10.7, 0.3, 11, False)])
def test_xi_and_e_examples(consts, xi, e, mm, tie):
    info = xi_and_e(P1, consts, xi=xi)
    assert info.e == pytest.approx(e, abs=1e-12)
    assert info.m_minus == mm and info.m_plus == mm + 1 and info.tie == tie


def test_e0_sequence_against_bisection(consts):
    from scipy.optimize import brentq
    h = e0_sequence(1.0, 1.0, consts, 0.5, 10)
    hb = brentq(lambda x: xi_h(ModelParams(1, 1, x), consts) - 10.5, 1e-3, 1.0, xtol=1e-15)
    assert h == pytest.approx(hb, rel=1e-12)
    assert h == pytest.approx(0.06772499, rel=1e-6)


def test_wedge_phase_examples():
    assert wedge_phase((0, 0), (3.0, -2.0), 1.0, 0.3) == 1
    assert wedge_phase((1, 0), (0, 1), 2 * math.pi, 1.0) == pytest.approx(-1, abs=1e-15)


def test_magnetic_translation_commutation_phase():
    # tau_a tau_b = exp(i B a^b / h) tau_b tau_a on a test point
    B, h = 1.3, 0.4
    a, b = (0.7, -0.2), (0.1, 0.9)
    pa, _ = magnetic_translation(a, B, h)
    pb, _ = magnetic_translation(b, B, h)
    x = np.array([0.3, 0.5])
    ab = pa(*x) * pb(*(x - np.array(a)))
    ba = pb(*x) * pa(*(x - np.array(b)))
    assert ab / ba == pytest.approx(np.exp(1j * B * (a[0] * b[1] - a[1] * b[0]) / h), abs=1e-14)


def test_error_budget_examples():
    r = error_budget(6.0, 1.0, 0.4)
    assert 2 * agmon_distance(P1, 5.0) == pytest.approx(10.390562, abs=5e-7)
    assert r.self_margin == pytest.approx(10.390562 - 6.722534, abs=1e-6)
    assert error_budget(6.0 + 1e-3, 1.0, 0.4).self_margin > 0
    assert error_budget(25.0, 1.0, 0.4).passed


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        SpectralConstants(theta0=1.2)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.2, 3), st.floats(1.0, 6.0))
def test_agmon_matches_mpmath(B, R, x):
    p = ModelParams(B, R, 0.1)
    assert agmon_distance(p, R * x) == pytest.approx(float(mp_agmon(B, R, R * x)), rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.2, 3), st.floats(1.0001, 10.0))
def test_action_positive_and_increasing(B, R, x):
    p = ModelParams(B, R, 1.0)
    a = tunneling_action(p, 2 * R * x, 0.59).S0
    b = tunneling_action(p, 2 * R * x * 1.01, 0.59).S0
    assert 0 < a < b
    assert a == pytest.approx(float(mp_s0(B, R, 2 * R * x)), rel=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.floats(-0.4999, 0.5), st.integers(2, 100000))
def test_e0_sequence_round_trip(e0, n):
    from magtunnel.model import FROZEN_CONSTANTS as c
    h = e0_sequence(1.0, 1.0, c, e0, n)
    assert xi_h(ModelParams(1, 1, h), c) == pytest.approx(n + e0, abs=1e-12 * (n + 1))
    assert e0_sequence(1.0, 1.0, c, e0, n + 1) < h


@settings(max_examples=100, deadline=None)
@given(st.floats(0.6, 1e6))
def test_xi_and_e_invariants(xi):
    from magtunnel.model import FROZEN_CONSTANTS as c
    info = xi_and_e(P1, c, xi=xi)
    assert -0.5 < info.e_signed <= 0.5 + 1e-12
    assert info.m_plus == info.m_minus + 1
    assert abs(info.m_second - xi) == pytest.approx(1 - info.e, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_wedge_phase_antisymmetric(a, b):
    assert abs(wedge_phase(a, b, 1.0, 0.3) * wedge_phase(b, a, 1.0, 0.3) - 1) < 1e-12
