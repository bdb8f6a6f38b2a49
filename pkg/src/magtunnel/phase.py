"""Interaction phases between two discs and a saddle-shifted quadrature engine.

The two discs sit at ``(-ell/2, 0)`` and ``(ell/2, 0)``.  ``s_h`` is the
holomorphic phase whose real part controls the product of the two
eigenfunction tails; ``s_0`` replaces ``h m`` by ``B R^2 / 2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .model import ModelParams, SpectralConstants, log_k_factor, tunneling_action, xi_h


class BranchCutError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseParams:
    ell: float
    B: float
    h: float
    R: float
    m_sigma: float
    m_sigma_prime: float

    def __post_init__(self):
        if self.ell <= 2 * self.R:
            raise ValueError("need ell > 2R")


@dataclass(frozen=True)
class SaddleData:
    x2_star: complex
    crit_value: float
    hess11: float
    hess22: float
    cross: float = 0.0


def _log_arg(w: complex) -> complex:
    if w.real <= 0:
        raise BranchCutError(f"log argument {w} has nonpositive real part")
    return complex(np.log(w))


def phase_eval(p: PhaseParams, x1, x2, principal: bool = False) -> complex:
    """``s_h^{sigma sigma'}(x1, x2)``; with ``principal=True`` the ``h m`` factors become ``B R^2/2``."""
    B, R, ell, h = p.B, p.R, p.ell, p.h
    x1, x2 = complex(x1), complex(x2)
    if not (-ell / 2 < x1.real < ell / 2) or x2.imag > 1e-14:
        raise BranchCutError("point outside the strip Re x1 in (-ell/2, ell/2), Im x2 <= 0")
    quad = (B / 4) * (x1 + ell / 2) ** 2 + (B / 4) * (x1 - ell / 2) ** 2 + (B / 2) * x2 * x2
    quad += -B * R * R / 2 + 0.5j * B * ell * x2
    if principal:
        a = b = B * R * R / 2
    else:
        a, b = h * p.m_sigma, h * p.m_sigma_prime
    la = _log_arg((ell / 2 + x1 + 1j * x2) / R)
    lb = _log_arg((ell / 2 - x1 + 1j * x2) / R)
    return quad - a * la - b * lb


def s0(p: PhaseParams, x1, x2) -> complex:
    return phase_eval(p, x1, x2, principal=True)


def saddle(ell: float, R: float, B: float) -> SaddleData:
    """Critical point, value and Hessian of ``s_0``."""
    if ell <= 2 * R:
        raise ValueError("need ell > 2R")
    q = math.sqrt(ell * ell - 4 * R * R)
    crit = tunneling_action(ModelParams(B, R, 1.0), ell, 0.5).S0
    return SaddleData(
        x2_star=-0.5j * q,
        crit_value=crit,
        hess11=B * ell * (ell - q) / (2 * R * R),
        hess22=B * q * (ell - q) / (2 * R * R),
    )


def critical_value_sh(p: PhaseParams, consts: SpectralConstants) -> tuple[float, float]:
    """Both closed forms of ``s_h(0, x2*)``.

    Returns ``(direct, via_action)`` where ``direct`` is
    ``B ell q / 4 - h (m + m') log K`` and ``via_action`` is
    ``S_h - h (2 c2 + m + m' - 2 xi_h) log K``.
    """
    q = math.sqrt(p.ell**2 - 4 * p.R**2)
    lk = log_k_factor(p.ell, p.R)
    msum = p.m_sigma + p.m_sigma_prime
    direct = p.B * p.ell * q / 4 - p.h * msum * lk
    params = ModelParams(p.B, p.R, p.h)
    S = tunneling_action(params, p.ell, consts.theta0).value
    via = S - p.h * (2 * consts.c2 + msum - 2 * xi_h(params, consts)) * lk
    return direct, via


class TailError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShiftedIntegral:
    """``log`` of an integral; ``log_value.real`` is the log-magnitude."""

    log_value: complex
    rel_error: float
    truncation: float
    shift: complex

    @property
    def value(self) -> complex:
        return complex(np.exp(self.log_value))


def saddle_shifted_integral(p: PhaseParams, log_amplitude: Callable[[complex], complex],
                            C: float = 5.0, shift_fraction: float = 1.0, method: str = "adaptive",
                            n_nodes: int = 80, rtol: float = 1e-10, tail_tol: float = 1e-9,
                            include_phase: bool = True) -> ShiftedIntegral:
    """``int_R exp(-s_h(0, x2)/h) a(x2) dx2`` along ``R + shift_fraction * x2*``.

    ``log_amplitude`` returns ``log a`` and must be analytic in the strip
    swept by the shift.  With ``include_phase=False`` the callback is taken
    to return the full log-integrand.  The line is truncated at
    ``|t| <= C h^(1/4)``; ``C`` is doubled while the endpoint tail exceeds
    ``tail_tol`` relative to the result.  ``method='hermite'`` uses
    Gauss-Hermite nodes scaled by ``sqrt(2h / hess22)`` instead, which is
    only accurate for amplitudes close to polynomial on that scale.
    """
    h = p.h
    sd = saddle(p.ell, p.R, p.B)
    shift = shift_fraction * sd.x2_star

    def logf(t):
        x2 = t + shift
        la = log_amplitude(x2)
        if include_phase:
            la = la - phase_eval(p, 0.0, x2) / h
        return complex(la)

    L0 = logf(0.0)
    sc = math.sqrt(2 * h / sd.hess22)
    if method == "hermite":
        y, w = np.polynomial.hermite.hermgauss(n_nodes)
        tot = sum(wi * np.exp(logf(sc * yi) - L0 + yi * yi) for yi, wi in zip(y, w)) * sc
        return ShiftedIntegral(L0 + np.log(tot), float("nan"), float("nan"), shift)
    if method != "adaptive":
        raise ValueError(f"unknown method {method!r}")
    for _ in range(6):
        T = C * h**0.25
        with warnings.catch_warnings():
            # roundoff notices at the requested rtol; the error estimate is returned instead
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(lambda t: np.exp(logf(t) - L0), -T, T, epsabs=0, epsrel=rtol,
                                      limit=1000, complex_func=True)
        tail = max(abs(np.exp(logf(T) - L0)), abs(np.exp(logf(-T) - L0))) * sc / abs(val)
        if tail < tail_tol:
            return ShiftedIntegral(L0 + np.log(val), abs(err) / abs(val), tail, shift)
        C *= 2
    raise TailError(f"truncation tail {tail:.2e} above tolerance")
