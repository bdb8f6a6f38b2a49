import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magtunnel import lattice as lt


def h_for(phi, B=1.0, L=1.0):
    return B * L * L / (2 * math.pi * phi)


def test_X_phases_and_flux():
    patch = lt.LatticePatch(5, 4, 1.0)
    h = h_for(0.3)
    X = lt.build_X(patch, 1.0, h)
    assert X.hermiticity_residual() == 0.0
    vals = X.matrix.data
    assert np.allclose(abs(vals), 1.0, atol=1e-15)
    fl = lt.plaquette_fluxes(X, patch)
    assert np.allclose(fl, np.exp(1j * 1.0 / h), atol=1e-13)
    assert X.meta["phi"] == pytest.approx(0.3)


def test_y_block_at_K1():
    assert np.allclose(lt.y_block(1.0, 0.0), [[-1, 1], [-1, 1]], atol=1e-15)


def test_y_block_K_scaling():
    K = 3.0
    b = lt.y_block(K, 0.0)
    assert b[0, 0] == pytest.approx(-K) and b[1, 1] == pytest.approx(1 / K)
    assert b[0, 1] == pytest.approx(1) and b[1, 0] == pytest.approx(-1)


def test_Y_hermitian():
    patch = lt.LatticePatch(6, 6, 1.0)
    Y = lt.build_Y(patch, 1.0, h_for(0.5), 2.0)
    assert Y.hermiticity_residual() < 1e-14


def test_Y_rejects_nonpositive_K():
    with pytest.raises(ValueError):
        lt.build_Y(lt.LatticePatch(2, 2), 1.0, 1.0, 0.0)


def test_two_by_two_gap():
    s = lt.two_disc_effective(0.3, 0.0, 0.2 - 0.1j, 2.0, crossing=False)
    assert s.gap == pytest.approx(2 * abs(0.2 - 0.1j), rel=1e-14)


def test_synthetic_four_by_four():
    s = lt.two_disc_effective(0.0, 0.0, 1.0, 2.0, crossing=True)
    assert np.allclose(s.eigenvalues, [-2.5, 0, 0, 2.5], atol=1e-12)
    assert np.allclose(np.linalg.eigvalsh(s.matrix), s.eigenvalues, atol=1e-14)


def test_four_by_four_perturbative_limit():
    # mu_+ far above: lower block splits by 2|lam|/K
    lam, K = 1e-4, 2.0
    s = lt.two_disc_effective(0.0, 10.0, lam, K, crossing=True)
    assert s.gap == pytest.approx(2 * lam / K, rel=1e-4)


def test_amo_phi_zero_exact():
    for th in np.linspace(0, 2 * np.pi, 7):
        b = lt.amo_spectrum(th, 0, 1)
        assert np.allclose(b, [[-2 + 2 * np.cos(th), 2 + 2 * np.cos(th)]], atol=1e-14)


def test_amo_phi_half_closed_form():
    for th in np.linspace(0, 2 * np.pi, 9):
        b = lt.amo_spectrum(th, 1, 2, nk=64)
        c2 = 4 * np.cos(th) ** 2
        lo, hi = math.sqrt(c2), math.sqrt(c2 + 4)
        assert np.allclose(b, [[-hi, -lo], [lo, hi]], atol=1e-10)


def test_amo_third_has_three_bands():
    b = lt.amo_spectrum(0.4, 1, 3, nk=64)
    assert b.shape == (3, 2)
    assert np.all(b[:-1, 1] <= b[1:, 0] + 1e-12)


def test_amo_truncation_converges():
    union = lt.amo_spectrum(0.7, 1, 3)
    ev = lt.amo_truncated(0.7, 1 / 3, 300, periodic=True)
    pts = np.linspace(union[:, 0], union[:, 1], 50).T.ravel()
    assert lt.hausdorff(ev, union, pts) < 0.05


def test_X_zero_flux_within_free_band():
    patch = lt.LatticePatch(8, 8, 1.0)
    X = lt.build_X(patch, 0.0, 1.0)
    ev = X.eigenvalues()
    assert ev.min() >= -4 - 1e-12 and ev.max() <= 4 + 1e-12


def test_gauge_invariance_of_spectrum():
    patch = lt.LatticePatch(5, 5, 1.0)
    h = h_for(0.25)
    Y = lt.build_Y(patch, 1.0, h, 1.5)
    G = lt.gauge_conjugate(Y, patch, 1.0, h)
    assert np.allclose(Y.eigenvalues(), G.eigenvalues(), atol=1e-12)


@pytest.mark.parametrize("K", [0.5, 1.0, 2.0, 3.0, 0.1])
def test_T_det_exactly_zero(K):
    assert lt.t_matrix_det_exact(K) == 0


def test_A_symmetric():
    A = lt.a_matrix(0.3, 0.25, 3, 2.0)
    assert np.array_equal(A, A.T)


def test_X_reduction_half_flux():
    patch = lt.LatticePatch(30, 30, 1.0)
    h = h_for(0.5)
    r = lt.fourier_reduce_check(lt.build_X(patch, 1.0, h), 1.0, h, 1.0)
    assert r.phi == Fraction(1, 2)
    assert r.excess < 0.05


def test_Y_reduction_bulk_excess():
    patch = lt.LatticePatch(20, 20, 1.0)
    h, K = h_for(0.5), 2.0
    Y = lt.build_Y(patch, 1.0, h, K)
    r = lt.fourier_reduce_check(Y, 1.0, h, 1.0, patch=patch,
                                bands_fn=lambda t: lt.hprime_bands(t, 1, 2, K))
    assert r.bulk_excess < 0.1
    assert r.n_bulk > r.n_eigs // 2


def test_hprime_periodic_matches_bloch():
    th, K = 0.9, 1.7
    H = lt.build_Hprime(th, 1 / 3, K, 30, periodic=True)
    ev = np.linalg.eigvalsh(H)
    union = lt.merge_intervals(lt.hprime_bands(th, 1, 3, K, nk=65))
    assert lt.distance_to_union(ev, union).max() < 1e-9


def test_butterfly_schema_and_symmetries():
    ds = lt.butterfly(12, n_theta=4)
    assert ds.COLUMNS == ("q", "p", "theta", "band_index", "E_min", "E_max")
    n_frac = sum(1 for _ in lt.fractions_up_to(12))
    assert len(ds.rows) == 4 * sum(q for p, q in lt.fractions_up_to(12))
    assert n_frac > 0
    res = lt.butterfly_symmetry_residuals(ds)
    assert res["mirror"] < 1e-10 and res["reflection"] < 1e-10


def test_butterfly_limits():
    with pytest.raises(ValueError):
        lt.butterfly(61)
    with pytest.raises(ValueError):
        lt.butterfly(5, n_theta=3)


def test_fibonacci_bandwidth_shrinks():
    fib = [(1, 2), (2, 3), (3, 5), (5, 8), (8, 13), (13, 21)]
    widths = [np.sum(np.diff(lt.amo_spectrum(0.0, p, q, nk=16), axis=1)) for p, q in fib]
    assert all(b < a for a, b in zip(widths[1:], widths[2:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 15), st.integers(0, 15), st.floats(0, 2 * math.pi))
def test_amo_bands_inside_minus4_4_and_total_mirror(q, p, th):
    p = p % q
    if math.gcd(p, q) != 1:
        p = 1 if q > 1 else 0
    b = lt.amo_spectrum(th, p, q)
    assert b.min() >= -4 - 1e-12 and b.max() <= 4 + 1e-12
    b2 = lt.amo_spectrum(-th, (q - p) % q, q)
    assert np.allclose(b, b2, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(-math.pi, math.pi))
def test_y_block_unitary_angle_covariance(K, ang):
    b0, b = lt.y_block(K, 0.0), lt.y_block(K, ang)
    U = np.diag([np.exp(-0.5j * ang), np.exp(0.5j * ang)])
    assert np.allclose(b, U @ b0 @ U.conj(), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.floats(0.05, 3.0))
def test_X_hermitian_any_patch(n1, n2, h):
    X = lt.build_X(lt.LatticePatch(n1, n2, 1.0), 1.0, h)
    assert X.hermiticity_residual() < 1e-14
    assert X.matrix.nnz == 2 * len(lt.LatticePatch(n1, n2).bonds())
