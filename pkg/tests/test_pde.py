import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import sparse

from magtunnel import fiber, pde
from magtunnel.model import ModelParams, agmon_distance, e0_sequence, xi_and_e

SMALL = ModelParams(1.0, 1.0, 0.5)


@pytest.fixture(scope="module")
def small_op():
    dom = pde.DiscreteDomain.around([(0.0, 0.0)], 1.0, math.sqrt(0.5) / 8, 3.0)
    return pde.assemble(SMALL, dom)


def test_hermitian(small_op):
    M = small_op.matrix
    assert abs(M - M.conj().T).max() < 1e-15


def test_plaquette_flux_uniform():
    dom = pde.DiscreteDomain(0.05, -0.3, -0.2, 12, 9, ((5.0, 5.0),), 0.5)
    ph = pde.plaquette_phases(SMALL, dom)
    assert np.allclose(ph, SMALL.B * dom.a**2 / SMALL.h, atol=1e-14)


def test_zero_field_matches_box_laplacian():
    # disc radius below every node distance: plain Dirichlet box
    n, a, h = 11, 0.1, 0.3
    dom = pde.DiscreteDomain(a, -0.55, -0.55, n, n, ((0.0, 0.0),), 0.01)
    op = pde.assemble(SimpleNamespace(B=0.0, R=1.0, h=h), dom, check=False)
    assert op.size == n * n
    assert np.abs(op.matrix.imag).max() == 0
    k = np.arange(1, n + 1)
    one = 2 - 2 * np.cos(k * np.pi / (n + 1))
    want = np.sort((one[:, None] + one[None, :]).ravel()) * h * h / (a * a)
    assert np.allclose(np.linalg.eigvalsh(op.matrix.toarray().real), want, atol=1e-12)


def test_spacing_check():
    dom = pde.DiscreteDomain.around([(0.0, 0.0)], 1.0, 0.2, 1.0)
    with pytest.raises(ValueError):
        pde.assemble(SMALL, dom)


def test_memory_guard():
    dom = pde.DiscreteDomain(1e-3, -1.0, -1.0, 2000, 2000, ((0.0, 0.0),), 0.5)
    assert dom.memory_estimate() > pde.MEMORY_LIMIT
    with pytest.raises(pde.GridMemoryError):
        pde.assemble(SMALL, dom, check=False)


@pytest.mark.parametrize("kind", ["zero", "linear", "random"])
def test_gauge_drift(small_op, kind):
    rng = np.random.default_rng(7)
    x, y = small_op.points.T
    chi = {"zero": np.zeros_like(x), "linear": 3 * x - 2 * y,
           "random": rng.uniform(-np.pi, np.pi, len(x))}[kind]
    a = pde.lowest_eigs(small_op, 2).values
    b = pde.lowest_eigs(pde.gauge_transform(small_op, chi), 2).values
    assert np.abs(a - b).max() / abs(a[0]) < 1e-12


def test_gauge_transform_unitary_conjugation(small_op):
    chi = np.linspace(0, 1, small_op.size)
    g = pde.gauge_transform(small_op, chi)
    D = sparse.diags(np.exp(1j * chi))
    assert abs(g.matrix - D @ small_op.matrix @ D.conj()).max() < 1e-15


def test_ground_state_angular_purity(small_op, consts):
    e = pde.lowest_eigs(small_op, 1)
    m, w = pde.angular_purity(small_op, e.vectors[:, 0])
    info = xi_and_e(SMALL, consts)
    assert m in (info.m_minus, info.m_plus)
    assert w > 0.99


def test_residuals_small(small_op):
    e = pde.lowest_eigs(small_op, 2)
    assert np.all(e.residuals < 1e-8)
    assert np.all(e.values > 0)


def test_link_phase_antisymmetric():
    p, q = np.array([0.3, -1.2]), np.array([0.35, -1.2])
    assert pde.link_phase(SMALL, p, q) == pytest.approx(-pde.link_phase(SMALL, q, p))


@pytest.mark.slow
def test_single_disc_matches_fiber(consts):
    p = ModelParams(1.0, 1.0, 0.125)
    a0 = math.sqrt(p.h) / 8
    run = pde.single_disc_lowest(p, [a0, a0 / 2, a0 / 3], theta0=consts.theta0)
    info = xi_and_e(p, consts)
    ref = min(fiber.fiber_ground_energy(p, m, consts.theta0)
              for m in (info.m_minus - 1, info.m_minus, info.m_plus))
    assert ref == pytest.approx(0.08344187315826755, rel=1e-10)
    assert abs(run.extrapolated - ref) / ref < 5e-3
    assert run.values[0] < run.values[1] < run.values[2] < ref


@pytest.mark.slow
def test_two_disc_gap_slopes(consts):
    p = ModelParams(1.0, 1.0, 0.25)
    rows = pde.two_disc_gap(p, [3.0, 3.5, 4.0, 4.5], math.sqrt(p.h) / 8, theta0=consts.theta0)
    gaps = [r.gap for r in rows]
    assert all(g > 0 for g in gaps) and not any(r.flagged for r in rows)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    s = pde.gap_slopes(rows, p.h)
    assert np.all((s >= -1.5) & (s <= -0.6))


def _ground_gap(h, margin_lengths=10.0):
    p = ModelParams(1.0, 1.0, h)
    dom = pde.DiscreteDomain.around([(0.0, 0.0)], 1.0, math.sqrt(h) / 8, margin_lengths * math.sqrt(h))
    e = pde.lowest_eigs(pde.assemble(p, dom), 2).values
    return e, e[1] - e[0]


def test_crossing_collapses_gap(consts):
    _, g_cross = _ground_gap(fiber.crossing_near(1.0, 1.0, 2, consts))
    _, g_generic = _ground_gap(e0_sequence(1.0, 1.0, consts, 0.0, 2))
    assert g_generic > 10 * g_cross


def test_dirichlet_cap_insensitive():
    a, _ = _ground_gap(0.5, 10.0)
    b, _ = _ground_gap(0.5, 20.0)
    assert np.abs(a - b).max() / a[0] < 1e-9


def test_agmon_envelope_on_ray(small_op):
    p = small_op.params
    dom = pde.DiscreteDomain.around([(0.0, 0.0)], 1.0, math.sqrt(p.h) / 8, 10 * math.sqrt(p.h))
    op = pde.assemble(p, dom)
    v = pde.lowest_eigs(op, 1).vectors[:, 0]
    x, y = op.points.T
    sel = (np.abs(y) < 1e-12) & (x > 1.0) & (x < 8.0)
    o = np.argsort(x[sel])
    r, lv = x[sel][o], np.log(np.abs(v[sel][o]))
    d = agmon_distance(p, r)
    assert np.max(lv - lv[0] + 0.7 * (d - d[0]) / p.h) < 0.1
