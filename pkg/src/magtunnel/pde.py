"""Link-phase finite-difference discretisation of the magnetic Neumann Laplacian outside discs.

Nodes of a uniform grid inside a box are kept when they lie outside every
disc.  The quadratic form is

    sum over links (i, j) of h^2 |exp(-i theta_ij) psi_j - psi_i|^2 / a^2

with ``theta_ij`` the exact line integral of ``A = (-B x2 / 2, B x1 / 2)``
divided by ``h``.  Links into a disc are dropped (staircase Neumann) and
links leaving the box keep a zero ghost value (Dirichlet).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .model import ModelParams, tunneling_action

MEMORY_LIMIT = 3.0e9


class GridMemoryError(MemoryError):
    pass


@dataclass(frozen=True)
class DiscreteDomain:
    """Uniform grid ``x = x0 + i a``, ``y = y0 + j a`` with discs removed."""

    a: float
    x0: float
    y0: float
    nx: int
    ny: int
    centers: tuple
    R: float

    @classmethod
    def around(cls, centers, R: float, a: float, margin: float) -> "DiscreteDomain":
        """Box of the given margin around the discs, symmetric under ``x1 -> -x1`` and ``x2 -> -x2``
        when the centres are."""
        c = np.asarray(centers, float)
        hx = np.abs(c[:, 0]).max() + R + margin
        hy = np.abs(c[:, 1]).max() + R + margin
        nx = 2 * int(math.ceil(hx / a)) + 1
        ny = 2 * int(math.ceil(hy / a)) + 1
        return cls(a, -(nx // 2) * a, -(ny // 2) * a, nx, ny, tuple(map(tuple, c)), R)

    def check(self, params: ModelParams):
        ell = math.sqrt(params.h / params.B)
        if self.a > ell / 8 * (1 + 1e-12):
            raise ValueError(f"grid spacing {self.a} above sqrt(h/B)/8 = {ell / 8}")

    def coords(self):
        x = self.x0 + self.a * np.arange(self.nx)
        y = self.y0 + self.a * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def fluid_mask(self) -> np.ndarray:
        X, Y = self.coords()
        m = np.ones(X.shape, bool)
        for cx, cy in self.centers:
            m &= (X - cx) ** 2 + (Y - cy) ** 2 >= self.R**2
        return m

    def memory_estimate(self) -> float:
        """Bytes for a complex sparse LU with nested-dissection fill ``~ 10 N log2 N``."""
        N = self.nx * self.ny
        return 16.0 * 10 * N * math.log2(max(N, 2))


@dataclass
class DiscreteMagneticOperator:
    matrix: sparse.csr_matrix
    domain: DiscreteDomain
    index: np.ndarray
    points: np.ndarray
    params: ModelParams

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def link_phase(params: ModelParams, p, q) -> np.ndarray:
    """``(1/h) int_p^q A . dl`` for straight links (exact: ``A`` is linear)."""
    p, q = np.asarray(p), np.asarray(q)
    mid = 0.5 * (p + q)
    d = q - p
    return params.B * 0.5 * (-mid[..., 1] * d[..., 0] + mid[..., 0] * d[..., 1]) / params.h


def assemble(params: ModelParams, domain: DiscreteDomain, check: bool = True,
             memory_limit: float = MEMORY_LIMIT) -> DiscreteMagneticOperator:
    if check:
        domain.check(params)
    need = domain.memory_estimate()
    if need > memory_limit:
        raise GridMemoryError(f"grid {domain.nx}x{domain.ny} needs about {need / 1e9:.1f} GB "
                              f"for the factorisation (limit {memory_limit / 1e9:.1f} GB)")
    X, Y = domain.coords()
    fluid = domain.fluid_mask()
    idx = -np.ones(fluid.shape, int)
    idx[fluid] = np.arange(fluid.sum())
    pts = np.stack([X[fluid], Y[fluid]], axis=1)
    N = len(pts)
    c = params.h**2 / domain.a**2
    diag = np.zeros(N)
    rows, cols, vals = [], [], []
    for di, dj in ((1, 0), (0, 1)):
        # links (i, j) -> (i + di, j + dj)
        src = np.zeros(fluid.shape, bool)
        src[: fluid.shape[0] - di, : fluid.shape[1] - dj] = True
        a_in = fluid & src
        b = np.zeros(fluid.shape, bool)
        b[: fluid.shape[0] - di, : fluid.shape[1] - dj] = fluid[di:, dj:]
        both = a_in & b
        i0 = idx[both]
        i1 = idx[np.roll(np.roll(both, di, 0), dj, 1)]
        p = np.stack([X[both], Y[both]], axis=1)
        q = p + domain.a * np.array([di, dj])
        th = link_phase(params, p, q)
        rows += [i0, i1]
        cols += [i1, i0]
        vals += [-c * np.exp(-1j * th), -c * np.exp(1j * th)]
        np.add.at(diag, i0, c)
        np.add.at(diag, i1, c)
    # Dirichlet: links leaving the box
    border = np.zeros(fluid.shape)
    border[0, :] += 1
    border[-1, :] += 1
    border[:, 0] += 1
    border[:, -1] += 1
    diag += c * border[fluid]
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag.astype(complex))
    M = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
    return DiscreteMagneticOperator(M, domain, idx, pts, params)


def plaquette_phases(params: ModelParams, domain: DiscreteDomain) -> np.ndarray:
    """Sum of link phases counter-clockwise around every grid cell."""
    X, Y = domain.coords()
    a = domain.a
    p00 = np.stack([X[:-1, :-1], Y[:-1, :-1]], -1)
    e1, e2 = np.array([a, 0.0]), np.array([0.0, a])
    return (link_phase(params, p00, p00 + e1) + link_phase(params, p00 + e1, p00 + e1 + e2)
            + link_phase(params, p00 + e1 + e2, p00 + e2) + link_phase(params, p00 + e2, p00))


class KrylovError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray


def lowest_eigs(op: DiscreteMagneticOperator, k: int = 2, sigma: float | None = None,
                theta0: float = 0.5901061250880943, tol: float = 1e-9) -> EigResult:
    """``k`` smallest eigenpairs by shift-invert Lanczos below ``Theta0 B h``."""
    if k > 10:
        raise ValueError("k <= 10")
    p = op.params
    sigma = 0.5 * theta0 * p.B * p.h if sigma is None else sigma
    try:
        w, v = eigsh(op.matrix, k=k, sigma=sigma, which="LM", tol=1e-13)
    except Exception as exc:  # ARPACK failure modes
        raise KrylovError(str(exc)) from exc
    o = np.argsort(w)
    w, v = w[o], v[:, o]
    res = np.linalg.norm(op.matrix @ v - v * w, axis=0)
    scale = sparse.linalg.norm(op.matrix, 1)
    if np.any(res > tol * scale):
        raise KrylovError(f"residual {res.max():.2e} above {tol:.0e} * {scale:.2e}")
    if np.any(w < sigma):
        # shift must stay below the spectrum so no lower level is missed
        return lowest_eigs(op, k, sigma=0.5 * w.min(), theta0=theta0, tol=tol)
    return EigResult(w, v, res)


def gauge_transform(op: DiscreteMagneticOperator, chi: np.ndarray) -> DiscreteMagneticOperator:
    """``theta_ij -> theta_ij + chi_j - chi_i`` on every link (unitary diagonal conjugation)."""
    chi = np.asarray(chi, float)
    D = sparse.diags(np.exp(1j * chi))
    Dc = sparse.diags(np.exp(-1j * chi))
    return DiscreteMagneticOperator((D @ op.matrix @ Dc).tocsr(), op.domain, op.index, op.points,
                                    op.params)


def angular_purity(op: DiscreteMagneticOperator, vec: np.ndarray, center=(0.0, 0.0),
                   radii=None, n_angle: int = 256) -> tuple[int, float]:
    """Dominant angular mode and its weight, sampled on circles by bilinear interpolation."""
    from scipy.interpolate import RegularGridInterpolator

    dom = op.domain
    full = np.zeros((dom.nx, dom.ny), complex)
    full[op.index >= 0] = vec[op.index[op.index >= 0]]
    x = dom.x0 + dom.a * np.arange(dom.nx)
    y = dom.y0 + dom.a * np.arange(dom.ny)
    re = RegularGridInterpolator((x, y), full.real)
    im = RegularGridInterpolator((x, y), full.imag)
    R, h, B = dom.R, op.params.h, op.params.B
    radii = radii if radii is not None else R + np.array([0.25, 0.5, 1.0]) * math.sqrt(h / B)
    t = 2 * np.pi * np.arange(n_angle) / n_angle
    power = np.zeros(n_angle)
    for r in radii:
        pts = np.stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)], -1)
        f = re(pts) + 1j * im(pts)
        power += np.abs(np.fft.fft(f)) ** 2
    m = int(np.argmax(power))
    m = m if m < n_angle // 2 else m - n_angle
    return m, float(power.max() / power.sum())


# ---------------------------------------------------------------------------
# oracle runs


def _richardson(vals: np.ndarray, spacings: np.ndarray, order: float) -> float:
    r = spacings[0] / spacings[1]
    return float((r**order * vals[1] - vals[0]) / (r**order - 1))


@dataclass(frozen=True)
class SingleDiscRun:
    spacings: tuple
    values: tuple
    extrapolated: float
    observed_order: float | None


def single_disc_lowest(params: ModelParams, spacings, margin_lengths: float = 10.0,
                       theta0: float = 0.5901061250880943, order: float = 1.0) -> SingleDiscRun:
    """Lowest eigenvalue outside one disc on several grids plus Richardson extrapolation.

    The staircase boundary gives first-order convergence, hence ``order=1``
    by default; with three spacings the observed order is reported.
    """
    vals = []
    margin = margin_lengths * math.sqrt(params.h / params.B)
    for a in spacings:
        dom = DiscreteDomain.around([(0.0, 0.0)], params.R, a, margin)
        vals.append(lowest_eigs(assemble(params, dom), 1, theta0=theta0).values[0])
    vals, sp = np.array(vals), np.array(spacings, float)
    obs = None
    if len(vals) >= 3:
        d1, d2 = vals[0] - vals[1], vals[1] - vals[2]
        if d1 * d2 > 0:
            obs = math.log(d1 / d2) / math.log(sp[0] / sp[1])
    ext = _richardson(vals[-2:], sp[-2:], order)
    return SingleDiscRun(tuple(spacings), tuple(map(float, vals)), ext, obs)


@dataclass(frozen=True)
class GapRow:
    L: float
    gap: float
    lam1: float
    lam2: float
    residual: float
    action: float
    flagged: bool


def two_disc_gap(params: ModelParams, Ls, a: float, margin_lengths: float = 10.0,
                 theta0: float = 0.5901061250880943, noise: float = 1e-10) -> list[GapRow]:
    """Splitting of the two lowest eigenvalues for discs at ``(+-L/2, 0)``."""
    rows = []
    margin = margin_lengths * math.sqrt(params.h / params.B)
    for L in Ls:
        dom = DiscreteDomain.around([(-L / 2, 0.0), (L / 2, 0.0)], params.R, a, margin)
        e = lowest_eigs(assemble(params, dom), 2, theta0=theta0)
        gap = float(e.values[1] - e.values[0])
        floor = noise * abs(e.values[0]) + float(e.residuals.max())
        S = tunneling_action(params, L, theta0).value
        rows.append(GapRow(float(L), gap, float(e.values[0]), float(e.values[1]),
                           float(e.residuals.max()), S, gap <= floor))
    return rows


def gap_slopes(rows: list[GapRow], h: float) -> np.ndarray:
    """``h * Delta log(gap) / Delta S_h(L)`` between consecutive rows."""
    g = np.log([r.gap for r in rows])
    S = np.array([r.action for r in rows])
    return h * np.diff(g) / np.diff(S)
