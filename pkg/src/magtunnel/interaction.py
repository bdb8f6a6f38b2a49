"""Hopping coefficients, overlaps and the Gram-matrix reduction on finite patches.

Conventions: ``sigma = -1`` labels the fiber ``m_minus`` and ``sigma = +1``
the fiber ``m_plus = m_minus + 1``.  Quasimodes are

    Psi_alpha^sigma(x) = chi(|x - alpha|) exp(i B alpha^x / 2h) Phi^sigma(x - alpha),

inner products are linear in the first slot, ``G_ab = <Psi_a, Psi_b>`` and
``M~_ab = <L Psi_a, Psi_b>``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import integrate

from .fiber import KummerEigenpair, eigenpair, log_kummer_moments
from .model import (ModelParams, SpectralConstants, agmon_distance, e0_sequence, k_factor,
                    log_k_factor, tunneling_action, wedge, xi_and_e, xi_h)
from .phase import PhaseParams, saddle, saddle_shifted_integral


# ---------------------------------------------------------------------------
# cutoff


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff equal to 1 below ``L - R - 2 eta`` and 0 above ``L - R - eta``."""

    L: float
    R: float
    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.L - self.R - 2 * self.eta <= self.R:
            raise ValueError("cutoff plateau must contain the disc")

    @classmethod
    def default(cls, L: float, R: float) -> "CutoffSpec":
        return cls(L=L, R=R, eta=0.05 * (L - 2 * R))

    @property
    def inner(self) -> float:
        return self.L - self.R - 2 * self.eta

    @property
    def outer(self) -> float:
        return self.L - self.R - self.eta

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        x = np.clip((r - self.inner) / self.eta, 0.0, 1.0)
        # C^2 quintic smoothstep
        s = x**3 * (10 - 15 * x + 6 * x * x)
        return np.clip(1.0 - s, 0.0, 1.0)


# ---------------------------------------------------------------------------
# fiber pair bookkeeping


@dataclass(frozen=True)
class FiberPair:
    """Normalised ground states of ``m_minus`` and ``m_plus`` at one ``h``."""

    params: ModelParams
    xi: float
    minus: KummerEigenpair
    plus: KummerEigenpair

    def state(self, sigma: int) -> KummerEigenpair:
        return self.plus if sigma > 0 else self.minus


def fiber_pair(params: ModelParams, consts: SpectralConstants, m_minus: int | None = None) -> FiberPair:
    info = xi_and_e(params, consts)
    mm = info.m_minus if m_minus is None else m_minus
    return FiberPair(params=params, xi=info.xi,
                     minus=eigenpair(params, mm, theta0=consts.theta0),
                     plus=eigenpair(params, mm + 1, theta0=consts.theta0))


# ---------------------------------------------------------------------------
# line integral w


@dataclass(frozen=True)
class InteractionCoefficient:
    sigma: int
    sigma_prime: int
    ell: float
    h: float
    log_value: complex
    method: str
    rel_error: float = 0.0
    flagged: bool = False

    @property
    def value(self) -> complex:
        return complex(np.exp(self.log_value))

    @property
    def log_magnitude(self) -> float:
        return float(self.log_value.real)

    @property
    def phase(self) -> float:
        return float(self.log_value.imag)


def _w_log_integrand(a: KummerEigenpair, b: KummerEigenpair, ell: float):
    """``log`` of ``h^2 exp(-i B ell x2 / 2h) Phi_a(ell/2, x2) d1 Phi_b(ell/2, x2)``."""
    B, h = a.params.B, a.params.h

    def f(x2):
        la, _, _ = a.log_phi(ell / 2, x2)
        lb, d1b, _ = b.log_phi(ell / 2, x2)
        return 2 * math.log(h) - 0.5j * B * ell * x2 / h + la + lb + np.log(d1b)

    return f


def w_line_integral(params: ModelParams, consts: SpectralConstants, sigma: int, sigma_prime: int,
                    ell: float, method: str = "saddle-shifted", pair: FiberPair | None = None,
                    shift_fraction: float = 1.0) -> InteractionCoefficient:
    """``w^{sigma sigma'} = h^2 int exp(-i B ell x2/2h) Phi^sigma(ell/2, x2) d1 Phi^sigma'(ell/2, x2) dx2``.

    No complex conjugate appears; by the reflection ``x2 -> -x2`` the value is
    real.  ``method='real-axis'`` integrates on ``|x2| <= 36 sqrt(h/B)``
    (cancellation limits it to moderate ``B R^2/h``); ``'saddle-shifted'``
    moves the line to ``R + x2*``.
    """
    pair = pair or fiber_pair(params, consts)
    a, b = pair.state(sigma), pair.state(sigma_prime)
    f = _w_log_integrand(a, b, ell)
    B, h = params.B, params.h
    if method == "real-axis":
        L0 = f(0.0).real
        X = 36 * math.sqrt(h / B)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(lambda x: np.exp(f(x) - L0), -X, X, epsabs=0, epsrel=1e-12,
                                      limit=2000, complex_func=True)
        lv = L0 + np.log(val)
        rel = abs(err) / abs(val)
    elif method == "saddle-shifted":
        pp = PhaseParams(ell, B, h, params.R, a.m, b.m)
        res = saddle_shifted_integral(pp, f, include_phase=False, shift_fraction=shift_fraction)
        lv, rel = res.log_value, res.rel_error
    else:
        raise ValueError(f"unknown method {method!r}")
    lv = complex(lv)
    return InteractionCoefficient(sigma, sigma_prime, ell, h, lv, method, rel)


def compare_methods(params, consts, sigma, sigma_prime, ell, pair=None, flag_tol: float = 0.05):
    """Both quadratures; the second result is flagged when they differ by more than ``flag_tol``."""
    pair = pair or fiber_pair(params, consts)
    a = w_line_integral(params, consts, sigma, sigma_prime, ell, "saddle-shifted", pair)
    b = w_line_integral(params, consts, sigma, sigma_prime, ell, "real-axis", pair)
    rel = abs(a.value - b.value) / abs(a.value)
    if rel > flag_tol:
        b = InteractionCoefficient(b.sigma, b.sigma_prime, b.ell, b.h, b.log_value, b.method,
                                   b.rel_error, flagged=True)
    return a, b, rel


def k_power(m_sigma: int, m_sigma_prime: int, xi: float) -> float:
    """Exponent ``m + m' - 2 xi`` of ``K`` in the critical value of the phase."""
    return m_sigma + m_sigma_prime - 2 * xi


def normalized_w(params, consts, coeff: InteractionCoefficient, pair: FiberPair) -> complex:
    """``w / (K^{m + m' - 2 xi} h exp(-S_h / h))``; tends to ``C_ell``."""
    ell = coeff.ell
    ms = pair.state(coeff.sigma).m, pair.state(coeff.sigma_prime).m
    lk = log_k_factor(ell, params.R)
    S = tunneling_action(params, ell, consts.theta0).value
    log_ref = k_power(ms[0], ms[1], pair.xi) * lk + math.log(params.h) - S / params.h
    return complex(np.exp(coeff.log_value - log_ref))


@dataclass(frozen=True)
class CEstimate:
    value: complex
    error: float
    samples: tuple
    jackknife_shift: float

    @property
    def real_part_nonzero(self) -> bool:
        return abs(self.value.real) > 3 * self.error


def _extrapolate(sq, vals, deg):
    V = np.vander(sq, deg + 1, increasing=True)
    re = np.linalg.lstsq(V, vals.real, rcond=None)[0][0]
    im = np.linalg.lstsq(V, vals.imag, rcond=None)[0][0]
    return complex(re, im)


def _w_job(args):
    B, R, h, consts, s, sp, ell, mm = args
    p = ModelParams(B, R, h)
    pair = fiber_pair(p, consts, m_minus=mm)
    c = w_line_integral(p, consts, s, sp, ell, pair=pair)
    return h, c, normalized_w(p, consts, c, pair)


def w_along_sequence(B, R, consts, sigma, sigma_prime, ell, e0, ns, jobs: int = 1):
    """``(h, InteractionCoefficient, normalised value)`` along an e0-sequence."""
    tasks = []
    for n in ns:
        h = e0_sequence(B, R, consts, e0, n)
        tasks.append((B, R, h, consts, sigma, sigma_prime, ell, n))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_w_job, tasks))
    return [_w_job(t) for t in tasks]


def extract_C_ell(B, R, consts, sigma, sigma_prime, ell, e0, ns, jobs: int = 1, deg: int = 1,
                  rows=None) -> CEstimate:
    """Extrapolate ``w / (K^{m+m'-2xi} h e^{-S_h/h})`` to ``h -> 0`` as a polynomial in ``sqrt h``.

    The error bar combines the change between polynomial degrees ``deg`` and
    ``deg + 1`` with the jackknife shift from dropping the largest ``h``.
    """
    if len(ns) < 6:
        raise ValueError("need at least 6 sequence points")
    rows = rows or w_along_sequence(B, R, consts, sigma, sigma_prime, ell, e0, ns, jobs)
    h = np.array([r[0] for r in rows])
    vals = np.array([r[2] for r in rows])
    sq = np.sqrt(h)
    est = _extrapolate(sq, vals, deg)
    alt = _extrapolate(sq, vals, deg + 1)
    order = np.argsort(h)
    keep = order[:-1]
    jack = _extrapolate(sq[keep], vals[keep], deg)
    err = max(abs(est - alt), abs(est - jack))
    return CEstimate(value=est, error=float(err), samples=tuple(rows),
                     jackknife_shift=float(abs(est - jack) / abs(est)))


@dataclass(frozen=True)
class SpinRatio:
    """``|w++| / |w--|`` along a sequence, divided by ``K^(2 m_minus + 2 - 2 xi)`` predictions."""

    h: np.ndarray
    ratio: np.ndarray
    extrapolated: float
    k_pred: float


def spin_ratio(B, R, consts, ell, e0, ns, deg: int = 2) -> SpinRatio:
    """Magnitude ratio ``|w++/w--|`` along an e0-sequence, extrapolated in ``sqrt h``.

    ``log`` of the ratio is fitted by a degree-``deg`` polynomial in
    ``sqrt h`` and its intercept returned.  ``k_pred = K^2`` is the ratio of
    the ``K^(m + m' - 2 xi)`` factors.
    """
    hs, rs = [], []
    for n in ns:
        h = e0_sequence(B, R, consts, e0, n)
        p = ModelParams(B, R, h)
        pair = fiber_pair(p, consts, m_minus=n)
        wm = w_line_integral(p, consts, -1, -1, ell, pair=pair)
        wp = w_line_integral(p, consts, 1, 1, ell, pair=pair)
        hs.append(h)
        rs.append(math.exp(wp.log_magnitude - wm.log_magnitude))
    hs, rs = np.array(hs), np.array(rs)
    c = np.polyfit(np.sqrt(hs), np.log(rs), deg)
    return SpinRatio(h=hs, ratio=rs, extrapolated=float(math.exp(c[-1])), k_pred=k_factor(ell, R) ** 2)


# ---------------------------------------------------------------------------
# overlaps


class _RadialTable:
    """Chebyshev interpolant of ``-z/2 + log I(z)`` on ``[R, r_max]``."""

    def __init__(self, pair: KummerEigenpair, r_max: float, deg: int = 160):
        B, h, R = pair.params.B, pair.params.h, pair.params.R
        self.a, self.b = R, r_max
        x = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        r = 0.5 * (self.a + self.b) + 0.5 * (self.b - self.a) * x
        vals = []
        for ri in r:
            z = B * ri * ri / (2 * h)
            li, _ = log_kummer_moments(z, pair.m, pair.delta)
            vals.append(li - z / 2)
        self.coef = cheb.chebfit(x, np.array(vals), deg)

    def __call__(self, r):
        x = (2 * np.asarray(r) - (self.a + self.b)) / (self.b - self.a)
        return cheb.chebval(x, self.coef)


def _log_quasimode(pair: KummerEigenpair, table: _RadialTable, alpha, x1, x2):
    B, h = pair.params.B, pair.params.h
    y1, y2 = x1 - alpha[0], x2 - alpha[1]
    r = np.hypot(y1, y2)
    gauge = 0.5j * B * (alpha[0] * x2 - alpha[1] * x1) / h
    return pair.log_c + pair.m * np.log(y1 + 1j * y2) + table(r) + gauge, r


@dataclass(frozen=True)
class OverlapResult:
    value: complex
    est_error: float
    note: str = ""


def self_overlap(pair: KummerEigenpair, cutoff: CutoffSpec) -> OverlapResult:
    """``<Psi, Psi> = 1 - 2 pi int (1 - chi^2) f^2 r dr``, computed as a tail integral."""
    B, h = pair.params.B, pair.params.h

    def lf(r):
        z = B * r * r / (2 * h)
        li, _ = log_kummer_moments(z, pair.m, pair.delta)
        return pair.log_c + pair.m * math.log(r) - z / 2 + li

    a = cutoff.inner
    l0 = lf(a)
    W = 40 * math.sqrt(h / B)
    tail, _ = integrate.quad(lambda r: (1 - cutoff(r) ** 2) * math.exp(2 * (lf(r) - l0)) * r,
                             a, a + W, epsabs=0, epsrel=1e-10, limit=200)
    dev = 2 * math.pi * tail * math.exp(2 * l0)
    return OverlapResult(value=complex(1.0 - dev), est_error=abs(dev) * 1e-9, note="radial tail")


def _lens_quadrature(params, a, b, ta, tb, alpha, beta, cutoff, n):
    B, R, h = params.B, params.R, params.h
    d = beta - alpha
    ell = float(np.hypot(*d))
    e = d / ell
    en = np.array([-e[1], e[0]])
    mid = 0.5 * (alpha + beta)
    rho = cutoff.outer
    X1 = rho - ell / 2
    g, w = np.polynomial.legendre.leggauss(n)
    u = X1 * g
    # half-height of the intersection of the two cutoff discs at each x1'
    Y = np.sqrt(np.maximum(rho**2 - (ell / 2 + np.abs(u)) ** 2, 0.0))
    U = np.repeat(u[:, None], n, axis=1)
    V = Y[:, None] * g[None, :]
    Wt = (w * X1 * Y)[:, None] * w[None, :]
    x1 = mid[0] + U * e[0] + V * en[0]
    x2 = mid[1] + U * e[1] + V * en[1]
    la, ra = _log_quasimode(a, ta, alpha, x1, x2)
    lb, rb = _log_quasimode(b, tb, beta, x1, x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = la + np.conj(lb) + np.log(cutoff(np.maximum(ra, R)) * cutoff(np.maximum(rb, R)))
    lg = np.where((ra > R) & (rb > R), lg, -np.inf)
    off = np.max(lg.real)
    return np.sum(Wt * np.exp(lg - off)) * np.exp(off)


def overlap(params: ModelParams, consts: SpectralConstants, alpha, beta, sigma: int, sigma_prime: int,
            cutoff: CutoffSpec, pair: FiberPair | None = None, n: int = 200) -> OverlapResult:
    """``<Psi_alpha^sigma, Psi_beta^sigma'> = int Psi_alpha conj(Psi_beta)``.

    Same centre: unit self-overlap minus the cut-off tail, or exactly zero for
    different fibers (radial cutoff, distinct angular modes).  Different
    centres: Gauss-Legendre quadrature over the intersection of the two
    cutoff supports, in the frame of the pair.  ``est_error`` compares ``n``
    and ``n/2`` nodes per direction.
    """
    pair = pair or fiber_pair(params, consts)
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    a, b = pair.state(sigma), pair.state(sigma_prime)
    if np.allclose(alpha, beta):
        if sigma != sigma_prime:
            return OverlapResult(0j, 0.0, "angular orthogonality")
        return self_overlap(a, cutoff)
    ell = float(np.hypot(*(beta - alpha)))
    if ell >= 2 * cutoff.outer:
        return OverlapResult(0j, 0.0, "disjoint supports")
    ta = _RadialTable(a, cutoff.outer)
    tb = ta if a is b else _RadialTable(b, cutoff.outer)
    val = _lens_quadrature(params, a, b, ta, tb, alpha, beta, cutoff, n)
    coarse = _lens_quadrature(params, a, b, ta, tb, alpha, beta, cutoff, n // 2)
    return OverlapResult(value=complex(val), est_error=float(abs(val - coarse)), note="lens quadrature")


def overlap_envelope(params: ModelParams, consts: SpectralConstants, ell: float, cutoff: CutoffSpec) -> float:
    """``h^(1/2) e^{-S_h/h} + e^{-(d(L-R-3 eta) + d(ell-L+R+2 eta))/h}``."""
    L, eta, R, h = cutoff.L, cutoff.eta, params.R, params.h
    S = tunneling_action(params, ell, consts.theta0).value
    d1 = agmon_distance(params, L - R - 3 * eta)
    d2 = agmon_distance(params, ell - L + R + 2 * eta)
    return math.sqrt(h) * math.exp(-S / h) + math.exp(-(d1 + d2) / h)


# ---------------------------------------------------------------------------
# hopping entries and patches


def W_entry(params: ModelParams, alpha, beta, sigma: int, sigma_prime: int,
            w: dict, pair: FiberPair) -> complex:
    """Phase-dressed hopping ``W_{alpha beta}^{sigma sigma'}``.

    ``w`` maps ``(sigma, sigma')`` to the real line-integral values at
    ``ell = |beta - alpha|``.
    """
    B, h = params.B, params.h
    ms, msp = pair.state(sigma).m, pair.state(sigma_prime).m
    d = np.asarray(beta, float) - np.asarray(alpha, float)
    ang = math.atan2(d[1], d[0])
    sign = -1.0 if int(msp) % 2 else 1.0
    amp = (w[(sigma, sigma_prime)] + w[(sigma_prime, sigma)]).real
    return sign * complex(np.exp(0.5j * B * wedge(alpha, beta) / h + 1j * (ms - msp) * ang)) * amp


def w_table(params, consts, ell, pair: FiberPair, spins=(-1,)):
    out = {}
    for s in spins:
        for sp in spins:
            out[(s, sp)] = w_line_integral(params, consts, s, sp, ell, pair=pair).value.real
    return out


@dataclass
class PatchMatrices:
    G: np.ndarray
    W: np.ndarray
    M: np.ndarray
    D: np.ndarray
    T: np.ndarray
    residual: float
    labels: list = field(default_factory=list)

    @property
    def G_inv_sqrt(self) -> np.ndarray:
        ev, U = np.linalg.eigh(self.G)
        return (U / np.sqrt(ev)) @ U.conj().T


def gram_patch(params: ModelParams, consts: SpectralConstants, centers, cutoff: CutoffSpec,
               eps: float = 2.0, spins=(-1,), pair: FiberPair | None = None,
               w_cache: dict | None = None) -> PatchMatrices:
    """Orthonormalised effective matrix ``M = G^{-1/2} M~ G^{-1/2}`` on a finite patch.

    ``M~ = D + W + mu_bar T`` with ``D`` the fiber energies, ``W`` the hopping
    entries and ``T = G - I`` the overlaps.  The returned residual is
    ``||M - D - W||_2``.
    """
    centers = [tuple(map(float, c)) for c in centers]
    if len(centers) > 25:
        raise ValueError("patch limited to 25 centres")
    pair = pair or fiber_pair(params, consts)
    labels = [(c, s) for c in centers for s in spins]
    n = len(labels)
    G = np.eye(n, dtype=complex)
    W = np.zeros((n, n), dtype=complex)
    D = np.diag([pair.state(s).mu for _, s in labels]).astype(complex)
    L = min(np.hypot(a[0] - b[0], a[1] - b[1]) for a in centers for b in centers if a != b)
    w_cache = {} if w_cache is None else w_cache
    for i, (ca, sa) in enumerate(labels):
        for j, (cb, sb) in enumerate(labels):
            if j < i:
                continue
            dist = math.hypot(cb[0] - ca[0], cb[1] - ca[1])
            if dist == 0:
                G[i, j] = overlap(params, consts, ca, cb, sa, sb, cutoff, pair).value
            elif dist <= L * (1 + eps) + 1e-12:
                G[i, j] = overlap(params, consts, ca, cb, sa, sb, cutoff, pair).value
                key = round(dist, 12)
                if key not in w_cache:
                    w_cache[key] = w_table(params, consts, dist, pair, spins)
                W[i, j] = W_entry(params, ca, cb, sa, sb, w_cache[key], pair)
            G[j, i] = np.conj(G[i, j])
            W[j, i] = np.conj(W[i, j])
    T = G - np.eye(n)
    mu = np.real(np.diag(D))
    mubar = 0.5 * (mu[:, None] + mu[None, :])
    Mt = D + W + mubar * T
    ev, U = np.linalg.eigh(G)
    if ev.min() <= 0:
        raise np.linalg.LinAlgError("Gram matrix not positive definite")
    Gi = (U / np.sqrt(ev)) @ U.conj().T
    M = Gi @ Mt @ Gi
    M = 0.5 * (M + M.conj().T)
    res = float(np.linalg.norm(M - D - W, 2))
    return PatchMatrices(G=G, W=W, M=M, D=D, T=T, residual=res, labels=labels)
