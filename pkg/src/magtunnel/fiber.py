"""Single-disc fiber problem and its Kummer-integral eigenfunctions.

For angular momentum ``m`` the radial operator is

    L_{h,m} = -h^2 r^-1 d/dr r d/dr + (h m - B r^2 / 2)^2 / r^2   on r > R,

with Neumann condition at ``r = R``.  Its decaying solutions are

    f(r) = r^m exp(-z/2) I(z),   z = B r^2 / (2h),
    I(z) = int_0^inf exp(-z s) (1 + s)^(m - delta) s^(delta - 1) ds,

with ``delta = 1/2 - mu / (2 B h)``.  ``I`` is computed in the log domain
after the substitution ``s = sigma^(1/delta)``; complex ``z`` with
``Re z > 0`` is supported.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import eigh_tridiagonal

from .model import ModelParams, SpectralConstants, e0_sequence, xi_and_e

QUAD_RTOL = 1e-12


class BracketError(RuntimeError):
    """Raised when the Neumann function does not change sign on the bracket."""


def log_kummer_moments(z, m: float, delta: float, rtol: float = QUAD_RTOL):
    """Return ``(log I(z), J(z) / I(z))`` where ``J`` carries an extra factor ``s``.

    ``z`` may be complex with positive real part.  The log is principal
    branch for real ``z`` and continuous along smooth paths otherwise only up
    to multiples of ``2 pi i``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    z = complex(z)
    zr = z.real
    if zr <= 0:
        raise ValueError("need Re z > 0")
    p = 1.0 / delta
    a = m - delta
    sstar = max(0.0, a / zr - 1.0)

    def g(s):
        return -zr * s + a * math.log1p(s)

    gs = g(sstar)
    hi = sstar + 1.0
    while g(hi) > gs - 60.0:
        hi = sstar + 2.0 * (hi - sstar)
    pts = [sstar**delta] if sstar > 0 else None
    real = z.imag == 0.0
    vals = []
    for j in (0, 1):
        def f(sig, j=j):
            s = sig**p
            return np.exp(-z * s + a * np.log1p(s) - gs) * s**j

        if real:
            v, _ = integrate.quad(lambda x: f(x).real, 0.0, hi**delta, points=pts,
                                  epsabs=0, epsrel=rtol, limit=400)
        else:
            with warnings.catch_warnings():
                # oscillation from Im z caps the attainable rtol near 1e-12
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                v, _ = integrate.quad(f, 0.0, hi**delta, points=pts, epsabs=0,
                                      epsrel=rtol, limit=400, complex_func=True)
        vals.append(v)
    log_i = gs + np.log(complex(vals[0])) - math.log(delta)
    ratio = vals[1] / vals[0]
    if real:
        return float(log_i.real), float(ratio.real)
    return complex(log_i), complex(ratio)


@dataclass(frozen=True)
class KummerValue:
    """``I`` at a radius, in the convention with the ``exp(-B r^2 / 4h)`` factor included.

    ``log_value`` is ``log I(r)`` and ``dlog`` is ``I'(r) / I(r)``.
    """

    log_value: complex
    dlog: complex

    @property
    def value(self):
        return np.exp(self.log_value)

    @property
    def derivative(self):
        return self.dlog * np.exp(self.log_value)


def kummer_integral(params: ModelParams, m: float, mu: float, r) -> KummerValue:
    """``I(r) = int exp(-B r^2 (1 + 2s) / 4h) (1 + s)^(m - delta) s^(delta - 1) ds``."""
    B, h = params.B, params.h
    delta = 0.5 - mu / (2 * B * h)
    r = complex(r)
    rho = r * r
    if rho.real <= 0:
        raise ValueError("need Re(r^2) > 0")
    z = B * rho / (2 * h)
    if rho.imag == 0 and r.imag == 0:
        z = z.real
    log_i, ratio = log_kummer_moments(z, m, delta)
    # d/dr of -z/2 + log I(z) with dz/dr = 2 z / r
    dlog = (2 * z / r) * (-0.5 - ratio)
    lv = log_i - z / 2
    if isinstance(lv, complex) or isinstance(dlog, complex):
        return KummerValue(complex(lv), complex(dlog))
    return KummerValue(float(lv), float(dlog))


def neumann_function(params: ModelParams, m: float, mu: float) -> float:
    """``R f'(R) / f(R)`` for the Kummer solution; zero at an eigenvalue."""
    B, R, h = params.B, params.R, params.h
    delta = 0.5 - mu / (2 * B * h)
    z = B * R * R / (2 * h)
    _, ratio = log_kummer_moments(z, m, delta)
    return m - z * (1 + 2 * ratio)


def fiber_ground_energy(params: ModelParams, m: float, theta0: float = 0.5901061249) -> float:
    """Lowest Neumann eigenvalue of ``L_{h,m}`` as a root of the boundary condition."""
    B, h = params.B, params.h
    a, b = 0.55 * theta0 * B * h, 0.999 * B * h
    fa, fb = neumann_function(params, m, a), neumann_function(params, m, b)
    if fa * fb > 0:
        scan = [(x, neumann_function(params, m, x)) for x in np.linspace(a, b, 9)]
        raise BracketError(f"no sign change for m={m}, h={h}: {scan}")
    return optimize.brentq(lambda x: neumann_function(params, m, x), a, b,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)


class GridResolutionWarning(UserWarning):
    pass


def _fd_level(params: ModelParams, m: float, n: int, width: float) -> float:
    B, R, h = params.B, params.R, params.h
    W = width * math.sqrt(h / B)
    dr = W / n
    r = R + (np.arange(n) + 0.5) * dr
    rf = R + np.arange(n + 1) * dr
    V = (h * m - B * r**2 / 2) ** 2 / r**2
    c = h * h / (dr * dr)
    d = c * (rf[1:] + rf[:-1]) / r + V
    d[0] -= c * rf[0] / r[0]
    d[-1] += c * rf[-1] / r[-1]
    off = -c * rf[1:-1] / np.sqrt(r[1:] * r[:-1])
    w = eigh_tridiagonal(d, off, eigvals_only=True, select="i", select_range=(0, 0))
    return float(w[0])


def fd_fiber_solver(params: ModelParams, m: float, n: int = 4000, width: float = 20.0,
                    levels: int = 3, return_levels: bool = False):
    """Oracle eigenvalue by a symmetric finite-volume scheme plus Richardson extrapolation.

    Cells span ``[R, R + width sqrt(h/B)]``; Neumann at ``R`` by omitting the
    boundary flux and Dirichlet at the cap through a ghost cell.
    """
    import warnings

    vals = [_fd_level(params, m, n * 2**k, width) for k in range(levels)]
    table = [vals]
    cur = vals
    for j in range(1, levels):
        f = 4.0**j
        cur = [(f * cur[i + 1] - cur[i]) / (f - 1) for i in range(len(cur) - 1)]
        table.append(cur)
    est = cur[0]
    if levels >= 3:
        spread = abs(table[-2][-1] - est) / abs(est)
        if spread > 1e-7:
            warnings.warn(f"Richardson disagreement {spread:.2e}", GridResolutionWarning)
    return (est, vals) if return_levels else est


@dataclass(frozen=True)
class KummerEigenpair:
    """Normalised fiber ground state ``Phi = C (x1 + i x2)^m exp(-z/2) I(z)``."""

    m: float
    mu: float
    delta: float
    log_c: float
    sign: int
    params: ModelParams

    def log_radial(self, r) -> KummerValue:
        """``log f(r)`` with ``f = r^m exp(-z/2) I(z)`` (no normalisation)."""
        kv = kummer_integral(self.params, self.m, self.mu, r)
        return KummerValue(self.m * np.log(complex(r) if np.iscomplexobj(r) else r) + kv.log_value,
                           self.m / r + kv.dlog)

    def log_phi(self, x1, x2):
        """Return ``(log Phi, d1 log Phi, d2 log Phi)`` at a possibly complex point."""
        B, h = self.params.B, self.params.h
        x1c, x2c = complex(x1), complex(x2)
        w = x1c + 1j * x2c
        rho = x1c * x1c + x2c * x2c
        if rho.real <= 0:
            raise ValueError("need Re(r^2) > 0")
        z = B * rho / (2 * h)
        zz = z.real if (z.imag == 0 and x1c.imag == 0 and x2c.imag == 0) else z
        log_i, ratio = log_kummer_moments(zz, self.m, self.delta)
        lp = self.log_c + self.m * np.log(w) - z / 2 + log_i
        common = -B / (2 * h) - (B / h) * ratio
        d1 = self.m / w + x1c * common
        d2 = 1j * self.m / w + x2c * common
        return complex(lp), complex(d1), complex(d2)

    def radial_value(self, r: float) -> float:
        """Real normalised radial profile ``C f(r)``."""
        return self.sign * math.exp(self.log_c + float(np.real(self.log_radial(r).log_value)))


def normalization_log(params: ModelParams, m: float, mu: float) -> float:
    """``log C`` with ``2 pi C^2 int_R^inf f(r)^2 r dr = 1``."""
    B, R, h = params.B, params.R, params.h
    delta = 0.5 - mu / (2 * B * h)

    def logf(r):
        z = B * r * r / (2 * h)
        li, _ = log_kummer_moments(z, m, delta)
        return m * math.log(r) - z / 2 + li

    f0 = logf(R)
    W = 25.0 * math.sqrt(h / B)
    val, _ = integrate.quad(lambda r: math.exp(2 * (logf(r) - f0)) * r, R, R + W,
                            epsabs=0, epsrel=1e-12, limit=200)
    return -0.5 * (math.log(2 * math.pi * val) + 2 * f0)


def eigenpair(params: ModelParams, m: float, mu: float | None = None,
              theta0: float = 0.5901061249) -> KummerEigenpair:
    if mu is None:
        mu = fiber_ground_energy(params, m, theta0)
    delta = 0.5 - mu / (2 * params.B * params.h)
    return KummerEigenpair(m=m, mu=mu, delta=delta, log_c=normalization_log(params, m, mu),
                           sign=1, params=params)


def eigenfunction_eval(pair: KummerEigenpair, x):
    """Value and gradient of ``Phi`` at a 2D point ``x`` (real or complex coordinates)."""
    lp, d1, d2 = pair.log_phi(x[0], x[1])
    val = np.exp(lp)
    return val, np.array([d1 * val, d2 * val])


def radial_ode_residual(pair: KummerEigenpair, r: float, step: float | None = None) -> float:
    """Relative residual of ``L_{h,m} f = mu f`` at ``r``.

    Derivatives come from central differences at ``step`` and ``step/2``
    combined by Richardson extrapolation.
    """
    B, h, m = pair.params.B, pair.params.h, pair.m
    lf = lambda x: float(np.real(pair.log_radial(x).log_value))
    if step is None:
        # resolve the local decay scale as well as the boundary layer
        step = 2e-2 / max(abs(float(np.real(pair.log_radial(r).dlog))), math.sqrt(B / h))
    f0 = lf(r)

    def diffs(s):
        fp, fm = math.exp(lf(r + s) - f0), math.exp(lf(r - s) - f0)
        return (fp - 2 + fm) / s**2, (fp - fm) / (2 * s)

    (a2, a1), (b2, b1) = diffs(step), diffs(step / 2)
    d2, d1 = (4 * b2 - a2) / 3, (4 * b1 - a1) / 3
    lhs = -h * h * (d2 + d1 / r) + (h * m - B * r * r / 2) ** 2 / (r * r)
    return abs(lhs - pair.mu) / pair.mu


# ---------------------------------------------------------------------------
# two lowest fibers, crossings and calibration


@dataclass(frozen=True)
class MuPair:
    h: float
    xi: float
    e: float
    m_minus: int
    m_plus: int
    mu_minus: float
    mu_plus: float
    crossing: bool


def mu_pm(params: ModelParams, consts: SpectralConstants) -> MuPair:
    """Ground energies of the fibers ``m_minus`` and ``m_plus = m_minus + 1``."""
    info = xi_and_e(params, consts)
    a = fiber_ground_energy(params, info.m_minus, consts.theta0)
    b = fiber_ground_energy(params, info.m_plus, consts.theta0)
    scale = consts.c0_rate(params.R) * params.h**2 if consts.c1 > 0 else params.h**2
    return MuPair(h=params.h, xi=info.xi, e=info.e, m_minus=info.m_minus, m_plus=info.m_plus,
                  mu_minus=a, mu_plus=b, crossing=abs(a - b) < 1e-4 * scale)


def lowest_two(params: ModelParams, consts: SpectralConstants):
    """``(mu1, mu2)``: lowest energies over the three integers nearest ``xi_h``."""
    info = xi_and_e(params, consts)
    ms = (info.m_minus - 1, info.m_minus, info.m_minus + 1)
    mus = sorted(fiber_ground_energy(params, m, consts.theta0) for m in ms)
    return mus[0], mus[1]


def find_crossing(B: float, R: float, m: int, consts: SpectralConstants, h_lo: float, h_hi: float,
                  xtol: float = 1e-15) -> float:
    """Bisection in ``h`` for ``mu(m) = mu(m + 1)``."""
    def g(h):
        p = ModelParams(B, R, h)
        return fiber_ground_energy(p, m, consts.theta0) - fiber_ground_energy(p, m + 1, consts.theta0)

    return optimize.brentq(g, h_lo, h_hi, xtol=xtol, rtol=1e-14)


def crossing_near(B: float, R: float, n: int, consts: SpectralConstants) -> float:
    """Crossing between fibers ``n`` and ``n + 1`` (near ``xi_h = n + 1/2``)."""
    h_mid = e0_sequence(B, R, consts, 0.5, n)
    h_a = e0_sequence(B, R, consts, 0.5, n - 1)
    h_b = e0_sequence(B, R, consts, 0.5, n + 1)
    return find_crossing(B, R, n, consts, 0.5 * (h_b + h_mid), 0.5 * (h_mid + h_a))


@dataclass(frozen=True)
class ContinuousMin:
    h: float
    m_star: float
    mu_min: float
    curvature: float


def continuous_minimum(params: ModelParams, theta0: float) -> ContinuousMin:
    """Minimum of ``mu(m)`` over real ``m``.

    A quartic through the five integers nearest the leading-order minimiser
    gives a first estimate, refined by Brent minimisation over real ``m``.
    """
    B, R, h = params.B, params.R, params.h
    guess = B * R * R / (2 * h) + math.sqrt(theta0 * B * R * R / h)
    m0 = round(guess)
    ms = np.arange(m0 - 2, m0 + 3, dtype=float)
    mus = np.array([fiber_ground_energy(params, m, theta0) for m in ms])
    scale = theta0 * B * h
    c = np.polynomial.Polynomial.fit(ms - m0, (mus - scale) / (h * h), 4).convert()
    dc = c.deriv()
    roots = [r.real for r in dc.roots() if abs(r.imag) < 1e-12 and -2.5 < r.real < 2.5]
    x = min(roots, key=lambda r: c(r))

    def g(mm):
        return (fiber_ground_energy(params, mm, theta0) - scale) / (h * h)

    # the quartic is only a starting point; its truncation error shifts m* by ~1e-4
    res = optimize.minimize_scalar(g, bracket=(m0 + x - 0.3, m0 + x, m0 + x + 0.3),
                                   method="brent", tol=1e-9)
    m_star = float(res.x)
    mu_min = fiber_ground_energy(params, m_star, theta0)
    return ContinuousMin(h=h, m_star=m_star, mu_min=mu_min,
                         curvature=0.5 * c.deriv(2)(x) * h * h)


@dataclass(frozen=True)
class Calibration:
    consts: SpectralConstants
    c0_rate: float
    c0_from_curvature: float
    c0_const_two_sequences: float
    residuals: dict
    samples: tuple


def _poly_intercept(x, y, deg):
    V = np.vander(x, deg + 1, increasing=True)
    coef, res, *_ = np.linalg.lstsq(V, y, rcond=None)
    resid = float(np.max(np.abs(V @ coef - y))) if len(x) > deg + 1 else 0.0
    return coef, resid


def calibrate_constants(B: float, R: float, theta0: float, h_grid=None, deg: int = 4,
                        k0: float = float("nan")) -> Calibration:
    """Fit ``c1``, ``c0_const`` and ``c2`` from the continuous-``m`` minimum.

    ``m*(h) - B R^2/2h - sqrt(Theta0 B R^2/h)`` and
    ``(mu_min - Theta0 B h) R / (sqrt(B) h^1.5)`` are fitted as polynomials
    in ``sqrt(h)``; their intercepts are ``c2`` and ``c1``, and the linear
    coefficient of the second fit is ``c0_rate * c0_const * R / sqrt(B)``.
    ``c0_const`` is also recovered from two e0-sequences (e0 = 0 and 1/4).
    """
    if h_grid is None:
        h_grid = np.geomspace(2e-2, 2.5e-4, 14) * R * R * B
    samples = [continuous_minimum(ModelParams(B, R, h), theta0) for h in h_grid]
    h = np.array([s.h for s in samples])
    sq = np.sqrt(h)
    y2 = np.array([s.m_star for s in samples]) - B * R * R / (2 * h) - np.sqrt(theta0 * B * R * R / h)
    c2_coef, r2 = _poly_intercept(sq, y2, deg)
    y1 = (np.array([s.mu_min for s in samples]) - theta0 * B * h) * R / (math.sqrt(B) * h**1.5)
    c1_coef, r1 = _poly_intercept(sq, y1, deg)
    c1 = float(c1_coef[0])
    c2 = float(c2_coef[0])
    rate = 3 * c1 * math.sqrt(theta0) / R**2
    c0_const = float(c1_coef[1]) * math.sqrt(B) / (R * rate)
    curv = np.array([s.curvature / s.h**2 for s in samples])
    ccoef, _ = _poly_intercept(sq, curv, 2)
    consts = SpectralConstants(theta0=theta0, c1=c1, c0_const=c0_const, c2=c2, k0=k0,
                               calibrated=True)
    c0_two = c0_const_from_sequences(B, R, consts)
    return Calibration(consts=consts, c0_rate=rate, c0_from_curvature=float(ccoef[0]),
                       c0_const_two_sequences=c0_two,
                       residuals={"c2_fit": r2, "c1_fit": r1}, samples=tuple(samples))


def h2_coefficient(B: float, R: float, consts: SpectralConstants, e0: float, ns) -> np.ndarray:
    """``(mu1 - Theta0 B h - c1 sqrt(B) h^1.5 / R) / h^2`` along an e0-sequence."""
    out = []
    for n in ns:
        h = e0_sequence(B, R, consts, e0, n)
        p = ModelParams(B, R, h)
        mu1 = fiber_ground_energy(p, n, consts.theta0)
        out.append((h, (mu1 - consts.theta0 * B * h - consts.c1 * math.sqrt(B) * h**1.5 / R) / h**2))
    return np.array(out)


def c0_const_from_sequences(B: float, R: float, consts: SpectralConstants,
                            ns=(400, 800, 1600, 3200)) -> float:
    """Solve ``A(e0) = c0 (e0^2 + c0_const)`` from the e0 = 0 and e0 = 1/4 limits."""
    lim = []
    for e0 in (0.0, 0.25):
        tab = h2_coefficient(B, R, consts, e0, ns)
        coef, _ = _poly_intercept(np.sqrt(tab[:, 0]), tab[:, 1], 2)
        lim.append(coef[0])
    rate = (lim[1] - lim[0]) / 0.0625
    return float(lim[0] / rate)
