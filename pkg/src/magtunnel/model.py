"""Parameters, actions and phase algebra shared by every other module.

Units: ``B`` is the field strength, ``R`` the disc radius and ``h`` the
semiclassical parameter.  All functions are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the exterior magnetic Neumann problem."""

    B: float
    R: float
    h: float

    def __post_init__(self):
        for name in ("B", "R", "h"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v!r}")

    @property
    def flux(self) -> float:
        """The combination ``B R^2 / h``."""
        return self.B * self.R**2 / self.h

    def with_h(self, h: float) -> "ModelParams":
        return replace(self, h=h)


@dataclass(frozen=True)
class SpectralConstants:
    """Universal constants of the single-disc expansion.

    ``c0_const`` is the constant added to ``e0**2`` in the ``h**2`` term,
    ``c2`` the shift inside ``xi_h``.  ``calibrated`` is False while ``c1``,
    ``c0_const`` and ``c2`` are placeholders.
    """

    theta0: float
    c1: float = 0.0
    c0_const: float = 0.0
    c2: float = 0.0
    k0: float = float("nan")
    calibrated: bool = False
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 < self.theta0 < 1.0:
            raise ValueError("theta0 must lie in (0, 1)")
        if self.calibrated and self.c1 <= 0:
            raise ValueError("calibrated c1 must be positive")

    def c0_rate(self, R: float) -> float:
        """Curvature of the fiber parabola, ``3 c1 sqrt(theta0) / R^2``."""
        return 3.0 * self.c1 * math.sqrt(self.theta0) / R**2

    def as_dict(self) -> dict:
        return {
            "theta0": self.theta0,
            "c1": self.c1,
            "c0_const": self.c0_const,
            "c2": self.c2,
            "k0": self.k0,
            "calibrated": self.calibrated,
        }


@dataclass(frozen=True)
class Geometry:
    """A finite set of obstacle centres."""

    centers: tuple
    R: float

    def __post_init__(self):
        pts = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "centers", tuple(map(tuple, pts)))
        if len(pts) > 1 and self.L <= 2 * self.R:
            raise ValueError("obstacles overlap: minimal distance must exceed 2R")

    @property
    def L(self) -> float:
        pts = np.asarray(self.centers)
        if len(pts) < 2:
            return math.inf
        d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
        d[np.diag_indices(len(pts))] = np.inf
        return float(d.min())


@dataclass(frozen=True)
class XiInfo:
    """``e_signed = xi - m_minus`` lies in (-1/2, 1/2]; ``e = |e_signed|``."""

    xi: float
    e: float
    e_signed: float
    m_minus: int
    m_plus: int
    tie: bool

    @property
    def m_second(self) -> int:
        """Second closest integer to ``xi``."""
        return self.m_minus + (1 if self.e_signed >= 0 else -1)


def agmon_distance(params: ModelParams, r):
    """Agmon distance ``d(r) = B/4 (r^2 - R^2) - B R^2/2 log(r/R)``."""
    B, R = params.B, params.R
    r = np.asarray(r, dtype=float)
    if np.any(r < R):
        raise ValueError("agmon_distance needs r >= R")
    x = r / R
    # log1p form keeps relative accuracy near r = R
    u = x * x - 1.0
    val = 0.25 * B * R**2 * (u - np.log1p(u))
    return float(val) if val.ndim == 0 else val


def k_factor(ell: float, R: float) -> float:
    """Hopping factor ``K = ell/2R + sqrt(ell^2/4R^2 - 1)``."""
    if ell < 2 * R:
        raise ValueError("k_factor needs ell >= 2R")
    a = ell / (2 * R)
    return a + math.sqrt(a * a - 1.0)


def log_k_factor(ell: float, R: float) -> float:
    if ell < 2 * R:
        raise ValueError("log_k_factor needs ell >= 2R")
    return math.acosh(ell / (2 * R))


@dataclass(frozen=True)
class Action:
    S0: float
    S1: float
    h: float

    @property
    def value(self) -> float:
        return self.S0 + math.sqrt(self.h) * self.S1


def tunneling_action(params: ModelParams, ell: float, theta0: float) -> Action:
    """Tunneling action ``S_h(ell) = S0(ell) + sqrt(h) S1(ell)``."""
    B, R, h = params.B, params.R, params.h
    if ell < 2 * R:
        raise ValueError("tunneling_action needs ell >= 2R")
    lk = log_k_factor(ell, R)
    s0 = 0.25 * B * ell * math.sqrt(ell * ell - 4 * R * R) - B * R * R * lk
    s1 = -2.0 * math.sqrt(theta0 * B * R * R) * lk
    return Action(S0=s0, S1=s1, h=h)


def xi_h(params: ModelParams, consts: SpectralConstants) -> float:
    B, R, h = params.B, params.R, params.h
    return B * R * R / (2 * h) + math.sqrt(consts.theta0 * B * R * R / h) + consts.c2


def xi_and_e(params: ModelParams, consts: SpectralConstants, xi: float | None = None) -> XiInfo:
    """Oscillating parameter, its distance to the integers and the two nearest integers.

    ``m_minus`` is the nearest integer (the smaller one on a tie, flagged by
    ``tie``) and ``m_plus = m_minus + 1`` always.
    """
    if xi is None:
        xi = xi_h(params, consts)
    lo = math.floor(xi)
    frac = xi - lo
    tie = abs(frac - 0.5) < 1e-12
    m_minus = lo if (frac < 0.5 or tie) else lo + 1
    es = xi - m_minus
    return XiInfo(xi=xi, e=abs(es), e_signed=es, m_minus=int(m_minus),
                  m_plus=int(m_minus) + 1, tie=tie)


def e0_sequence(B: float, R: float, consts: SpectralConstants, e0: float, n: int) -> float:
    """Return ``h_n`` with ``xi_{h_n} = n + e0`` exactly."""
    if not -0.5 < e0 <= 0.5:
        raise ValueError("e0 must lie in (-1/2, 1/2]")
    target = n + e0 - consts.c2
    if target <= 0:
        raise ValueError("n + e0 must exceed c2")
    a = consts.theta0 * B * R * R
    b = B * R * R
    # x = h^{-1/2} solves b/2 x^2 + sqrt(a) x - target = 0
    x = 2 * target / (math.sqrt(a) + math.sqrt(a + 2 * b * target))
    return 1.0 / (x * x)


def wedge(a: Sequence[float], b: Sequence[float]) -> float:
    return a[0] * b[1] - a[1] * b[0]


def wedge_phase(alpha, beta, B: float, h: float) -> complex:
    """Magnetic translation phase ``exp(i B alpha^beta / 2h)``."""
    return complex(np.exp(0.5j * B * wedge(alpha, beta) / h))


def magnetic_translation(alpha, B: float, h: float):
    """Return ``(phase, shift)`` so that ``(tau_alpha u)(x) = phase(x) u(x - alpha)``."""
    alpha = tuple(map(float, alpha))

    def phase(x1, x2):
        return np.exp(0.5j * B * (alpha[0] * np.asarray(x2) - alpha[1] * np.asarray(x1)) / h)

    return phase, alpha


@dataclass(frozen=True)
class BudgetReport:
    L: float
    R: float
    eps: float
    eta: float
    self_margin: float
    cross_margin: float
    S0: float

    @property
    def passed(self) -> bool:
        return self.self_margin > 0 and self.cross_margin > 0

    def as_dict(self) -> dict:
        return {
            "L": self.L, "R": self.R, "eps": self.eps, "eta": self.eta,
            "self_margin": self.self_margin, "cross_margin": self.cross_margin,
            "S0": self.S0, "passed": self.passed,
        }


def error_budget(L: float, R: float, eps: float, eta: float = 0.0, B: float = 1.0) -> BudgetReport:
    """Margins of the two exponential inequalities that control the remainders.

    ``self_margin = 2 d(L - R - 4 eta) - S0(L)`` and
    ``cross_margin = d(L - R - 4 eta) + d(eps L + R + 2 eta) - S0(L)``.
    Failing margins are reported, not raised.
    """
    if L <= 2 * R:
        raise ValueError("error_budget needs L > 2R")
    if eps <= 0 or eta < 0:
        raise ValueError("need eps > 0 and eta >= 0")
    p = ModelParams(B=B, R=R, h=1.0)
    s0 = tunneling_action(p, L, 0.5).S0
    r1 = L - R - 4 * eta
    r2 = eps * L + R + 2 * eta
    d1 = agmon_distance(p, r1) if r1 >= R else -math.inf
    d2 = agmon_distance(p, r2)
    return BudgetReport(L=L, R=R, eps=eps, eta=eta, self_margin=2 * d1 - s0,
                        cross_margin=d1 + d2 - s0, S0=s0)


# calibrated values (B = R = 1); recomputed by ``magtunnel calibrate``
FROZEN_CONSTANTS = SpectralConstants(
    theta0=0.5901061250880943,
    c1=0.2540680753624319,
    c0_const=-0.3234933116518104,
    c2=0.16537534415588553,
    k0=0.04435929166995508,
    calibrated=True,
)
