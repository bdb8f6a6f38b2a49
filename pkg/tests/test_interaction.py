import cmath
import math

import numpy as np
import pytest

from magtunnel.interaction import (CutoffSpec, W_entry, compare_methods, extract_C_ell, fiber_pair, gram_patch,
                                   overlap, overlap_envelope, self_overlap, w_line_integral, w_table)
from magtunnel.fiber import crossing_near
from magtunnel.model import ModelParams, agmon_distance, e0_sequence, wedge

H = 0.25
P = ModelParams(1.0, 1.0, H)
CUT = CutoffSpec.default(6.0, 1.0)


@pytest.fixture(scope="module")
def pair(consts):
    return fiber_pair(P, consts)


@pytest.fixture(scope="module")
def wtab(consts, pair):
    return w_table(P, consts, 6.0, pair, spins=(-1, 1))


def test_methods_agree(consts, pair):
    a, b, rel = compare_methods(P, consts, -1, -1, 6.0, pair)
    assert rel < 1e-8 and not b.flagged


def test_w_is_real(consts, pair):
    c = w_line_integral(P, consts, -1, -1, 6.0, pair=pair)
    assert abs(math.sin(c.phase)) < 1e-9


def test_w_decays_in_ell(consts, pair):
    a = w_line_integral(P, consts, -1, -1, 6.0, pair=pair)
    b = w_line_integral(P, consts, -1, -1, 7.0, pair=pair)
    assert b.log_magnitude < a.log_magnitude


def test_self_overlap_bound(consts, pair):
    so = self_overlap(pair.state(-1), CUT)
    d = agmon_distance(P, CUT.L - CUT.R - 3 * CUT.eta)
    dev = abs(1 - so.value)
    assert dev <= math.exp(-2 * d / H)


def test_cross_spin_same_centre(consts, pair):
    assert overlap(P, consts, (0, 0), (0, 0), -1, 1, CUT, pair).value == 0


def test_overlap_envelope_ratio(consts):
    ratios = []
    for h in (0.35, 0.3, 0.25):
        p = ModelParams(1.0, 1.0, h)
        o = overlap(p, consts, (0, 0), (6, 0), -1, -1, CUT)
        assert o.est_error < 1e-2 * abs(o.value)
        ratios.append(abs(o.value) / overlap_envelope(p, consts, 6.0, CUT))
    assert max(ratios) < 1.0


def test_W_entry_hermitian_and_horizontal_formula(consts, pair, wtab):
    a, b = (0.0, 0.0), (6.0, 0.0)
    for s in (-1, 1):
        for sp in (-1, 1):
            wab = W_entry(P, a, b, s, sp, wtab, pair)
            wba = W_entry(P, b, a, sp, s, wtab, pair)
            assert abs(wab - np.conj(wba)) < 1e-12 * abs(wab)
    m = pair.state(-1).m
    want = (-1) ** m * 2 * wtab[(-1, -1)]
    assert W_entry(P, a, b, -1, -1, wtab, pair) == pytest.approx(want, rel=1e-14)


def test_W_entry_rotation_covariance(consts, pair, wtab):
    a = np.array([0.3, -0.2])
    d = np.array([6.0, 0.0])
    t = 0.7
    Rm = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    b0, b1 = a + d, a + Rm @ d
    for s, sp in ((-1, 1), (1, -1), (1, 1)):
        e0 = W_entry(P, a, b0, s, sp, wtab, pair) / cmath.exp(0.5j * wedge(a, b0) / H)
        e1 = W_entry(P, a, b1, s, sp, wtab, pair) / cmath.exp(0.5j * wedge(a, b1) / H)
        ms, msp = pair.state(s).m, pair.state(sp).m
        assert e1 / e0 == pytest.approx(cmath.exp(1j * (ms - msp) * t), abs=1e-12)


@pytest.fixture(scope="module")
def patch(consts, pair):
    return gram_patch(P, consts, [(0.0, 0.0), (6.0, 0.0)], CUT, pair=pair)


def test_gram_structure(patch):
    I = np.eye(len(patch.G))
    T = patch.T
    assert np.linalg.norm(patch.G - I - T, 2) == 0.0
    err = np.linalg.norm(patch.G_inv_sqrt - I + T / 2, 2)
    assert err <= np.linalg.norm(T, 2) ** 2 + 1e-14
    assert np.abs(patch.M - patch.M.conj().T).max() < 1e-12 * np.abs(patch.M).max()


def test_two_centre_gap(patch, consts, pair):
    ev = np.linalg.eigvalsh(patch.M)
    w = w_line_integral(P, consts, -1, -1, 6.0, pair=pair).value.real
    assert (ev[1] - ev[0]) / (4 * abs(w)) == pytest.approx(1.0, abs=0.2)


@pytest.mark.slow
def test_mixed_coefficients_share_C(consts):
    ns = (8, 12, 16, 24, 32, 48)
    a = extract_C_ell(1.0, 1.0, consts, 1, -1, 6.0, 0.5, ns)
    b = extract_C_ell(1.0, 1.0, consts, -1, 1, 6.0, 0.5, ns)
    assert abs(a.value - b.value) <= 3 * (a.error + b.error)
    assert a.real_part_nonzero and b.real_part_nonzero
    assert a.jackknife_shift < 0.1 and b.jackknife_shift < 0.1


def test_e0_half_sequence_index_matches_pair(consts):
    h = e0_sequence(1.0, 1.0, consts, 0.5, 20)
    pr = fiber_pair(ModelParams(1.0, 1.0, h), consts, m_minus=20)
    assert pr.state(-1).m == 20 and pr.state(1).m == 21


@pytest.mark.slow
def test_crossing_patch_middle_pair(consts):
    h = crossing_near(1.0, 1.0, 3, consts)
    p = ModelParams(1.0, 1.0, h)
    pr = fiber_pair(p, consts, m_minus=3)
    P = gram_patch(p, consts, [(0.0, 0.0), (6.0, 0.0)], CUT, spins=(-1, 1), pair=pr)
    mu = np.diag(P.D).real.mean()
    assert np.ptp(np.diag(P.D).real) < 1e-15
    ev = np.linalg.eigvalsh(P.M - mu * np.eye(4))
    assert ev[0] == pytest.approx(-ev[3], rel=1e-3)
    assert (ev[2] - ev[1]) / (ev[3] - ev[0]) < 1e-2
