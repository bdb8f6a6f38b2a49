"""Half-line de Gennes model ``-v'' + (t - xi)^2 v`` with Neumann condition at 0.

Provides the constant ``Theta0 = min_xi mu(xi)``, the minimiser ``xi0``, the
boundary profile ``v(t)`` and the normalisation constant ``K0``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy import integrate, optimize, special
from scipy.linalg import eigh_tridiagonal


@dataclass(frozen=True)
class HalfLineProblem:
    """Discretisation of the half line ``[0, t_max]`` with ``n`` cells."""

    xi: float
    t_max: float | None = None
    n: int = 2000

    def __post_init__(self):
        if self.t_max is None:
            object.__setattr__(self, "t_max", max(self.xi, 0.0) + 12.0)
        if self.t_max < max(self.xi, 0.0) + 10.0:
            raise ValueError("t_max must exceed xi + 10")
        if self.n < 16:
            raise ValueError("too few cells")


class EigenSolverError(RuntimeError):
    pass


def _fd_ground(xi: float, t_max: float, n: int, vectors: bool = False):
    # cell-centred grid; ghost cells give Neumann at 0 and Dirichlet at t_max
    dt = t_max / n
    t = (np.arange(n) + 0.5) * dt
    d = 2.0 / dt**2 + (t - xi) ** 2
    d[0] -= 1.0 / dt**2
    d[-1] += 1.0 / dt**2
    e = -np.ones(n - 1) / dt**2
    if not vectors:
        w = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0))
        return float(w[0])
    w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    u = v[:, 0] / math.sqrt(dt)
    res = np.abs(d * u + np.r_[e * u[1:], 0] + np.r_[0, e * u[:-1]] - w[0] * u).max()
    if res > 1e-6 * (1 + abs(w[0])) / math.sqrt(dt):
        raise EigenSolverError(f"eigenvector residual {res:.3e}")
    return float(w[0]), t, u, dt


def _richardson(a: float, b: float, c: float) -> float:
    """Two-step Richardson for an O(dt^2) sequence at dt, dt/2, dt/4."""
    r1 = (4 * b - a) / 3
    r2 = (4 * c - b) / 3
    return (16 * r2 - r1) / 15


def mu_of_xi(problem: HalfLineProblem | float) -> float:
    """Ground energy ``mu(xi)`` by finite differences and Richardson extrapolation."""
    p = problem if isinstance(problem, HalfLineProblem) else HalfLineProblem(float(problem))
    vals = [_fd_ground(p.xi, p.t_max, p.n * k) for k in (1, 2, 4)]
    return _richardson(*vals)


def dmu_dxi(problem: HalfLineProblem | float) -> float:
    """``mu'(xi) = -2 <u, (t - xi) u>`` (Feynman-Hellmann), Richardson extrapolated."""
    p = problem if isinstance(problem, HalfLineProblem) else HalfLineProblem(float(problem))
    vals = []
    for k in (1, 2, 4):
        _, t, u, dt = _fd_ground(p.xi, p.t_max, p.n * k, vectors=True)
        vals.append(-2.0 * float(np.sum((t - p.xi) * u * u) * dt))
    return _richardson(*vals)


def mu_exact(xi: float, dps: int = 30) -> float:
    """Independent oracle: ``mu = 2 nu + 1`` with ``D_nu'(-sqrt(2) xi) = 0``.

    ``D_nu`` is the parabolic cylinder function; the Neumann condition at
    ``t = 0`` becomes a root in ``nu``, found with mpmath.
    """
    with mp.workdps(dps):
        x = -mp.sqrt(2) * mp.mpf(xi)

        def dD(nu):
            return x / 2 * mp.pcfd(nu, x) - mp.pcfd(nu + 1, x)

        guess = mp.mpf(mu_of_xi(HalfLineProblem(float(xi), n=400)) - 1) / 2
        nu = mp.findroot(dD, guess)
        return float(2 * nu + 1)


@dataclass(frozen=True)
class DeGennesResult:
    theta0: float
    xi0: float
    delta0: float
    k0: float
    t_samples: np.ndarray
    v_samples: np.ndarray
    table: tuple

    @property
    def identity_residual(self) -> float:
        return abs(self.xi0**2 - self.theta0)


def theta0(n: int = 2000, t_extra: float = 12.0) -> tuple[float, float]:
    """Return ``(Theta0, xi0)``.

    Golden-section search brackets the minimum; the minimiser is then refined
    as the root of ``mu'(xi)``, since a flat minimum only locates ``xi0`` to
    about the square root of the eigenvalue accuracy.
    """
    def f(x):
        return mu_of_xi(HalfLineProblem(x, t_max=x + t_extra, n=n))

    res = optimize.minimize_scalar(f, bracket=(0.5, 0.75, 1.0), method="golden",
                                   options={"xtol": 1e-6})
    x = res.x

    def g(x):
        return dmu_dxi(HalfLineProblem(x, t_max=x + t_extra, n=n))

    a, b = x - 1e-3, x + 1e-3
    if g(a) * g(b) > 0:
        raise RuntimeError("flat minimum: derivative does not change sign near golden-section estimate")
    xi0 = optimize.brentq(g, a, b, xtol=1e-14, rtol=1e-14)
    return f(xi0), xi0


def delta0_from(theta: float) -> float:
    return 0.5 * (1.0 - theta)


def v_profile(t, theta: float, deriv: int = 0):
    """Boundary profile ``v(t) = int_0^inf exp(-(s^2/4 + t s - sqrt(Theta0) s)) s^(delta0-1) ds``.

    ``deriv=1`` returns ``v'(t)``.  The substitution ``s = sigma^(1/delta0)``
    removes the endpoint singularity.  Complex ``t`` is accepted.
    """
    d = delta0_from(theta)
    p = 1.0 / d
    a = math.sqrt(theta)

    def one(tt):
        tt = complex(tt)
        tr = tt.real
        # peak of -(s^2/4 + (t - a) s) on s >= 0
        sstar = max(0.0, 2 * (a - tr))
        # upper cut where the Gaussian factor has decayed by e^-60
        hi = sstar + 2 * math.sqrt(60.0) + 2 * max(0.0, -(a - tr)) + 4.0
        ex0 = sstar * sstar / 4 + (tr - a) * sstar

        def f(sig):
            s = sig**p
            return np.exp(-(s * s / 4 + (tt - a) * s) + ex0) * s**deriv

        pts = [sstar**d] if sstar > 0 else None
        opts = dict(epsabs=0, epsrel=1e-12, limit=400, points=pts)
        if tt.imag != 0:
            val, _ = integrate.quad(f, 0.0, hi**d, complex_func=True, **opts)
        else:
            val, _ = integrate.quad(lambda x: f(x).real, 0.0, hi**d, **opts)
        sign = -1 if deriv % 2 else 1
        return sign * val * math.exp(-ex0) / d

    if np.ndim(t) == 0:
        return one(t)
    out = np.array([one(x) for x in np.ravel(t)])
    return out.reshape(np.shape(t))


def v_exact(t: float, theta: float) -> float:
    """Closed form of ``v`` through the parabolic cylinder function (oracle).

    ``v(t) = 2^(d/2) Gamma(d) exp((t - a)^2 / 2) D_{-d}(sqrt(2) (t - a))`` with
    ``a = sqrt(Theta0)`` and ``d = delta0``.
    """
    d = delta0_from(theta)
    z = mp.sqrt(2) * (mp.mpf(t) - mp.sqrt(theta))
    return float(mp.power(2, d / 2) * mp.gamma(d) * mp.exp(z * z / 4) * mp.pcfd(-d, z))


def k0_constant(theta: float, scheme: str = "direct") -> float:
    """Normalisation constant with ``K0^-2 = 2 pi int exp(-(t^2 - 2 t sqrt(Theta0))) v(t)^2 dt``.

    ``scheme='direct'`` integrates ``v^2`` with nested quadrature;
    ``scheme='double'`` integrates over ``t`` in closed form first and does a
    2D quadrature over the two ``s`` variables.
    """
    a = math.sqrt(theta)
    d = delta0_from(theta)
    if scheme == "direct":
        val, _ = integrate.quad(lambda t: math.exp(-(t * t - 2 * t * a)) * v_profile(t, theta) ** 2,
                                0.0, a + 12.0, epsabs=0, epsrel=1e-11, limit=200)
    elif scheme == "double":
        p = 1.0 / d

        def inner(c):
            # int_0^inf exp(-t^2 + c t) dt
            return 0.5 * math.sqrt(math.pi) * math.exp(c * c / 4) * special.erfc(-c / 2)

        def f(s2, s1):
            x, y = s1**p, s2**p
            c = 2 * a - x - y
            return (math.exp(-(x * x + y * y) / 4 + a * (x + y)) * inner(c)) / (d * d)

        top = (2 * a + 16.0) ** d
        val, _ = integrate.dblquad(f, 0.0, top, 0.0, top, epsabs=0, epsrel=1e-10)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return 1.0 / math.sqrt(2 * math.pi * val)


def ground_state_boundary_value(xi: float, n: int = 4000) -> float:
    """``u(0)^2`` for the normalised ground state at ``xi`` (FD, Richardson)."""
    vals = []
    for k in (1, 2, 4):
        _, t, u, dt = _fd_ground(xi, xi + 12.0, n * k, vectors=True)
        # quadratic extrapolation to t = 0 from the first cells
        u0 = (15 * u[0] - 10 * u[1] + 3 * u[2]) / 8
        vals.append(u0 * u0)
    return _richardson(*vals)


@functools.lru_cache(maxsize=4)
def solve(n: int = 2000, n_samples: int = 121) -> DeGennesResult:
    """Compute and cache all half-line constants."""
    table = []
    for k in (1, 2):
        th, x0 = theta0(n=n * k)
        table.append((n * k, th, x0))
    th, x0 = table[-1][1], table[-1][2]
    ts = np.linspace(0.0, 12.0, n_samples)
    vs = v_profile(ts, th)
    return DeGennesResult(theta0=th, xi0=x0, delta0=delta0_from(th), k0=k0_constant(th),
                          t_samples=ts, v_samples=vs, table=tuple(table))
