"""Effective operators: two-disc matrices, lattice hopping operators and Harper reduction.

The lattice operators act on finite open patches of ``L Z^2``.  The
Almost-Mathieu operator

    (H u)(n) = u(n - 1) + u(n + 1) + 2 cos(theta + 2 pi n phi) u(n)

is handled for rational ``phi = p/q`` through ``q x q`` Bloch matrices.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .model import wedge

DENSE_LIMIT = 4000


@dataclass(frozen=True)
class LatticePatch:
    """``n1 x n2`` open patch of ``L Z^2`` starting at the origin."""

    n1: int
    n2: int
    L: float = 1.0

    @property
    def centers(self) -> list[tuple[float, float]]:
        return [(i * self.L, j * self.L) for i in range(self.n1) for j in range(self.n2)]

    def bonds(self):
        """Nearest-neighbour ordered pairs ``(a, b)`` with ``a < b``."""
        idx = lambda i, j: i * self.n2 + j
        out = []
        for i in range(self.n1):
            for j in range(self.n2):
                if i + 1 < self.n1:
                    out.append((idx(i, j), idx(i + 1, j)))
                if j + 1 < self.n2:
                    out.append((idx(i, j), idx(i, j + 1)))
        return out


@dataclass
class EffectiveOperator:
    matrix: sparse.csr_matrix
    spin: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_residual(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    def eigenvalues(self, k: int | None = None) -> np.ndarray:
        """All eigenvalues (dense) or the ``k`` extreme ones (Lanczos) above ``DENSE_LIMIT``."""
        if self.dim <= DENSE_LIMIT or k is None:
            return np.linalg.eigvalsh(self.dense())
        return np.sort(eigsh(self.matrix, k=k, which="BE", return_eigenvectors=False))


def _with_L(patch: LatticePatch, L):
    return patch if L is None else LatticePatch(patch.n1, patch.n2, L)


def build_X(patch: LatticePatch, B: float, h: float, L: float | None = None) -> EffectiveOperator:
    """``X_ab = exp(i B a^b / 2h)`` on nearest-neighbour pairs of the patch."""
    patch = _with_L(patch, L)
    c = patch.centers
    rows, cols, vals = [], [], []
    for a, b in patch.bonds():
        ph = np.exp(0.5j * B * wedge(c[a], c[b]) / h)
        rows += [a, b]
        cols += [b, a]
        vals += [ph, np.conj(ph)]
    n = len(c)
    M = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
    return EffectiveOperator(M, meta={"phi": B * patch.L**2 / (2 * math.pi * h)})


def plaquette_fluxes(op: EffectiveOperator, patch: LatticePatch) -> np.ndarray:
    """Product of hopping phases counter-clockwise around every unit cell."""
    M = op.matrix.tocsr()
    idx = lambda i, j: i * patch.n2 + j
    out = []
    for i in range(patch.n1 - 1):
        for j in range(patch.n2 - 1):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            out.append(M[a, b] * M[b, c] * M[c, d] * M[d, a])
    return np.array(out)


SPINS = (1, -1)


def y_block(K: float, angle: float) -> np.ndarray:
    """2x2 spin block ``-s' exp(-i (s - s')/2 angle) K^((s + s')/2)``, spin order (+, -)."""
    blk = np.empty((2, 2), dtype=complex)
    for i, s in enumerate(SPINS):
        for j, sp in enumerate(SPINS):
            blk[i, j] = -sp * np.exp(-0.5j * (s - sp) * angle) * K ** ((s + sp) / 2)
    return blk


def build_Y(patch: LatticePatch, B: float, h: float, K: float, L: float | None = None) -> EffectiveOperator:
    """Spinful hopping operator; index ``2 * site + spin`` with spin order (+, -)."""
    patch = _with_L(patch, L)
    if K <= 0:
        raise ValueError("K must be positive")
    c = patch.centers
    n = len(c)
    M = sparse.lil_matrix((2 * n, 2 * n), dtype=complex)
    for a, b in patch.bonds():
        for (u, v) in ((a, b), (b, a)):
            ang = math.atan2(c[v][1] - c[u][1], c[v][0] - c[u][0])
            blk = np.exp(0.5j * B * wedge(c[u], c[v]) / h) * y_block(K, ang)
            M[2 * u:2 * u + 2, 2 * v:2 * v + 2] = blk
    return EffectiveOperator(M.tocsr(), spin=2, meta={"phi": B * patch.L**2 / (2 * math.pi * h), "K": K})


def gauge_conjugate(op: EffectiveOperator, patch: LatticePatch, B: float, h: float) -> EffectiveOperator:
    """Conjugate by ``diag(exp(i B a1 a2 / 2h))``."""
    c = np.asarray(patch.centers)
    d = np.exp(0.5j * B * c[:, 0] * c[:, 1] / h)
    d = np.repeat(d, op.spin)
    D = sparse.diags(d)
    return EffectiveOperator((D @ op.matrix @ D.conj()).tocsr(), op.spin, dict(op.meta))


# ---------------------------------------------------------------------------
# two discs


@dataclass(frozen=True)
class TwoDiscSpectrum:
    eigenvalues: np.ndarray
    matrix: np.ndarray

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])


def two_disc_effective(mu_minus: float, mu_plus: float, lam: complex, K: float,
                       crossing: bool) -> TwoDiscSpectrum:
    """Two-disc effective matrix.

    Without crossing: ``[[mu, lam], [conj(lam), mu]]`` with ``mu = mu_minus``.
    At a crossing: the 4x4 matrix on (alpha-, beta-, alpha+, beta+) with
    couplings ``lam K^-1``, ``lam`` and ``-lam K``.
    """
    if not crossing:
        M = np.array([[mu_minus, lam], [np.conj(lam), mu_minus]], dtype=complex)
    else:
        lm = lam
        M = np.array([
            [mu_minus, lm / K, 0, -lm],
            [lm / K, mu_minus, lm, 0],
            [0, lm, mu_plus, -lm * K],
            [-lm, 0, -lm * K, mu_plus],
        ], dtype=complex)
    return TwoDiscSpectrum(np.linalg.eigvalsh(M), M)


# ---------------------------------------------------------------------------
# Almost-Mathieu


def _check_fraction(p: int, q: int):
    if q < 1 or math.gcd(p, q) != 1:
        raise ValueError(f"{p}/{q} is not a reduced fraction")


def amo_bloch(theta: float, p: int, q: int, k: float) -> np.ndarray:
    """``q x q`` Bloch matrix of the Almost-Mathieu operator at quasimomentum ``k``."""
    n = np.arange(q)
    H = np.diag(2 * np.cos(theta + 2 * np.pi * n * p / q)).astype(complex)
    if q == 1:
        H[0, 0] += 2 * math.cos(k)
        return H
    for i in range(q - 1):
        H[i, i + 1] += 1
        H[i + 1, i] += 1
    H[q - 1, 0] += np.exp(1j * k)
    H[0, q - 1] += np.exp(-1j * k)
    return H


def amo_spectrum(theta: float, p: int, q: int, nk: int = 0) -> np.ndarray:
    """Band intervals ``(q, 2)`` of ``H_{theta, p/q}``.

    Band edges sit at ``k = 0`` and ``k = pi``; ``nk > 0`` adds interior
    quasimomenta as a consistency check.
    """
    _check_fraction(p, q)
    ks = [0.0, math.pi] + list(np.linspace(0, 2 * math.pi, nk, endpoint=False)) if nk else [0.0, math.pi]
    ev = np.array([np.linalg.eigvalsh(amo_bloch(theta, p, q, k)) for k in ks])
    return np.stack([ev.min(axis=0), ev.max(axis=0)], axis=1)


def amo_truncated(theta: float, phi: float, N: int, periodic: bool = True) -> np.ndarray:
    """Eigenvalues of the Almost-Mathieu operator on ``N`` sites."""
    n = np.arange(N)
    d = 2 * np.cos(theta + 2 * np.pi * n * phi)
    H = np.diag(d) + np.diag(np.ones(N - 1), 1) + np.diag(np.ones(N - 1), -1)
    if periodic:
        H[0, -1] = H[-1, 0] = 1.0
    return np.linalg.eigvalsh(H)


def merge_intervals(iv) -> np.ndarray:
    iv = sorted(map(tuple, np.asarray(iv).reshape(-1, 2)))
    out = [list(iv[0])]
    for a, b in iv[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.array(out)


def distance_to_union(x: np.ndarray, union: np.ndarray) -> np.ndarray:
    x = np.asarray(x)[:, None]
    lo, hi = union[None, :, 0], union[None, :, 1]
    d = np.where(x < lo, lo - x, np.where(x > hi, x - hi, 0.0))
    return d.min(axis=1)


def hausdorff(a: np.ndarray, union: np.ndarray, pts_b: np.ndarray) -> float:
    """Hausdorff distance between points ``a`` and the union, sampled by ``pts_b``."""
    one = distance_to_union(a, union).max()
    a = np.sort(a)
    j = np.clip(np.searchsorted(a, pts_b), 1, len(a) - 1)
    two = np.minimum(abs(pts_b - a[j - 1]), abs(pts_b - a[j])).max()
    return float(max(one, two))


def theta_union(p: int, q: int, n_theta: int = 64, bands_fn=None) -> np.ndarray:
    """Union over ``theta`` of the band intervals (merged)."""
    bands_fn = bands_fn or (lambda th: amo_spectrum(th, p, q))
    thetas = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    return merge_intervals(np.concatenate([bands_fn(t) for t in thetas]))


@dataclass(frozen=True)
class ReductionReport:
    phi: Fraction
    excess: float
    n_eigs: int
    union: np.ndarray
    bulk_excess: float | None = None
    n_bulk: int | None = None


def edge_weights(vecs: np.ndarray, patch: LatticePatch, spin: int, depth: int) -> np.ndarray:
    """Weight of each eigenvector on sites within ``depth`` rows of the patch boundary."""
    i, j = np.divmod(np.arange(patch.n1 * patch.n2), patch.n2)
    d = np.minimum.reduce([i, j, patch.n1 - 1 - i, patch.n2 - 1 - j])
    mask = np.repeat(d < depth, spin)
    return (np.abs(vecs[mask]) ** 2).sum(axis=0)


def fourier_reduce_check(op: EffectiveOperator, B: float, h: float, L: float, n_theta: int = 64,
                         bands_fn=None, max_den: int = 1000, patch: LatticePatch | None = None,
                         edge_depth: int = 3, edge_cut: float = 0.9) -> ReductionReport:
    """One-sided excess of patch eigenvalues outside the theta-union of the reduced spectra.

    ``bands_fn(theta)`` defaults to the Almost-Mathieu bands at
    ``phi = B L^2 / (2 pi h)``; pass a spinful variant for ``Y`` patches.
    When ``patch`` is given, eigenvectors carrying more than ``edge_cut`` of
    their weight within ``edge_depth`` rows of the boundary are classed as
    edge states and ``bulk_excess`` is reported over the remaining ones.
    Edge states sit inside spectral gaps, so only ``bulk_excess`` decays
    with patch size when the union has gaps.
    """
    phi = flux_fraction(B, h, L, max_den)
    p, q = phi.numerator % phi.denominator, phi.denominator
    bands_fn = bands_fn or (lambda th: amo_spectrum(th, p, q))
    thetas = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    union = merge_intervals(np.concatenate([bands_fn(t) for t in thetas]))
    if patch is None:
        ev = op.eigenvalues()
        return ReductionReport(phi, float(distance_to_union(ev, union).max()), len(ev), union)
    ev, vecs = np.linalg.eigh(op.dense())
    dist = distance_to_union(ev, union)
    bulk = edge_weights(vecs, patch, op.spin, edge_depth) < edge_cut
    return ReductionReport(phi, float(dist.max()), len(ev), union,
                           float(dist[bulk].max()), int(bulk.sum()))


def flux_fraction(B: float, h: float, L: float, max_den: int = 1000) -> Fraction:
    return Fraction(B * L * L / (2 * math.pi * h)).limit_denominator(max_den)


# ---------------------------------------------------------------------------
# spinful reduced operator


def t_matrix(K: float) -> np.ndarray:
    return np.array([[-K, 1.0], [-1.0, 1.0 / K]])


def t_matrix_det_exact(K: float) -> Fraction:
    """Determinant of the hopping block in exact rational arithmetic."""
    k = Fraction(K)
    return -k * (1 / k) + 1


def a_matrix(theta: float, phi: float, n: int, K: float) -> np.ndarray:
    x = 2 * np.pi * n * phi - theta
    c, s = math.cos(x), math.sin(x)
    return np.array([[-K * c, s], [s, c / K]])


def build_Hprime(theta: float, phi: float, K: float, N: int, periodic: bool = False) -> np.ndarray:
    """``(H' u)(n) = T u(n+1) + T* u(n-1) + 2 A_n u(n)`` on ``N`` sites, as a dense matrix."""
    if K <= 0:
        raise ValueError("K must be positive")
    T = t_matrix(K)
    H = np.zeros((2 * N, 2 * N), dtype=complex)
    for n in range(N):
        H[2 * n:2 * n + 2, 2 * n:2 * n + 2] = 2 * a_matrix(theta, phi, n, K)
        m = n + 1
        if m < N or periodic:
            m %= N
            H[2 * n:2 * n + 2, 2 * m:2 * m + 2] += T
            H[2 * m:2 * m + 2, 2 * n:2 * n + 2] += T.conj().T
    return H


def hprime_bloch(theta: float, p: int, q: int, K: float, k: float) -> np.ndarray:
    T = t_matrix(K)
    phi = p / q
    H = np.zeros((2 * q, 2 * q), dtype=complex)
    for n in range(q):
        H[2 * n:2 * n + 2, 2 * n:2 * n + 2] += 2 * a_matrix(theta, phi, n, K)
        m = (n + 1) % q
        ph = np.exp(1j * k) if n == q - 1 else 1.0
        H[2 * n:2 * n + 2, 2 * m:2 * m + 2] += ph * T
        H[2 * m:2 * m + 2, 2 * n:2 * n + 2] += np.conj(ph) * T.conj().T
    return H


def hprime_bands(theta: float, p: int, q: int, K: float, nk: int = 33) -> np.ndarray:
    """Band intervals ``(2q, 2)`` of the spinful operator from a quasimomentum grid."""
    ks = np.linspace(0, 2 * np.pi, nk)
    ev = np.array([np.linalg.eigvalsh(hprime_bloch(theta, p, q, K, k)) for k in ks])
    return np.stack([ev.min(axis=0), ev.max(axis=0)], axis=1)


# ---------------------------------------------------------------------------
# butterfly


@dataclass
class ButterflyDataset:
    rows: list
    q_max: int
    thetas: tuple

    COLUMNS = ("q", "p", "theta", "band_index", "E_min", "E_max")

    def by_key(self) -> dict:
        return {(r[0], r[1], round(r[2], 12), r[3]): r for r in self.rows}


def fractions_up_to(q_max: int):
    for q in range(1, q_max + 1):
        for p in range(0, q + 1):
            if math.gcd(p, q) == 1:
                yield p, q


def _butterfly_job(args):
    p, q, thetas = args
    rows = []
    for th in thetas:
        b = amo_spectrum(th, p, q)
        for j, (lo, hi) in enumerate(b):
            rows.append((q, p, th, j, float(lo), float(hi)))
    return rows


def butterfly(q_max: int, n_theta: int = 8, jobs: int = 1) -> ButterflyDataset:
    """Band intervals for every reduced ``p/q`` in ``[0, 1]`` with ``q <= q_max``.

    The theta grid ``2 pi j / n_theta`` (``n_theta`` even) is closed under
    ``theta -> -theta`` and ``theta -> theta + pi``, so both symmetries can
    be checked row by row.
    """
    if q_max > 60:
        raise ValueError("q_max above 60 is outside desk scale")
    if n_theta % 2:
        raise ValueError("n_theta must be even")
    thetas = tuple(2 * math.pi * j / n_theta for j in range(n_theta))
    tasks = [(p, q, thetas) for p, q in fractions_up_to(q_max)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_butterfly_job, tasks))
    else:
        parts = [_butterfly_job(t) for t in tasks]
    rows = sorted((r for part in parts for r in part), key=lambda r: (r[0], r[1], r[2], r[3]))
    return ButterflyDataset(rows=rows, q_max=q_max, thetas=thetas)


def butterfly_symmetry_residuals(ds: ButterflyDataset) -> dict:
    """Largest row-wise violation of the two symmetries.

    ``phi -> 1 - phi`` pairs ``theta`` with ``-theta``; the reflection
    ``E -> -E`` pairs band ``j`` at ``theta`` with band ``q - 1 - j`` at
    ``theta + pi``.
    """
    n = len(ds.thetas)
    tindex = {round(t, 12): i for i, t in enumerate(ds.thetas)}
    table = {(r[0], r[1], tindex[round(r[2], 12)], r[3]): (r[4], r[5]) for r in ds.rows}
    mirror = reflect = 0.0
    for (q, p, i, j), (lo, hi) in table.items():
        lo2, hi2 = table[(q, q - p, (-i) % n, j)]
        mirror = max(mirror, abs(lo - lo2), abs(hi - hi2))
        lo3, hi3 = table[(q, p, (i + n // 2) % n, q - 1 - j)]
        reflect = max(reflect, abs(lo + hi3), abs(hi + lo3))
    return {"mirror": mirror, "reflection": reflect}
