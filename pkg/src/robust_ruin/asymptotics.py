"""First-order expansion of the robust ruin probability in small ``eps``.

``psi(w; eps) = f0(w) + eps * f1(w) + O(eps**2)`` where ``f0`` is the
non-robust probability and ``f1 = coeff * (f0 - f0**2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closed_forms import psi_nonrobust, wealth_ratio
from .errors import ParameterError
from .model import ModelParams, derive


@dataclass(frozen=True)
class ExpansionCoefficients:
    coeff: float
    d: float
    R: float


def expansion_coefficients(params: ModelParams) -> ExpansionCoefficients:
    if params.lam <= 0:
        raise ParameterError("lam", "small-eps expansion needs lambda > 0")
    dc = derive(params)
    R, d, r = dc.R, dc.d, params.r
    denom = (d - 1.0) ** 2 * (2.0 * d * r - params.lam) + 2.0 * R * d
    if denom <= 0:
        raise ParameterError("lam", "expansion denominator is not positive")
    return ExpansionCoefficients(coeff=R * d * d / denom, d=d, R=R)


def exponent_quadratic_residual(params: ModelParams) -> float:
    """Relative residual of ``k = d`` in the homogeneous Cauchy-Euler
    indicial equation ``k^2 - (2d - 1 - r(d-1)^2/R) k - lam (d-1)^2/R``."""
    dc = derive(params)
    d, R, r, lam = dc.d, dc.R, params.r, params.lam
    lin = 2.0 * d - 1.0 - r * (d - 1.0) ** 2 / R
    const = lam * (d - 1.0) ** 2 / R
    value = d * d - lin * d - const
    scale = d * d + abs(lin * d) + abs(const)
    return abs(value) / scale


def f0(params: ModelParams, w):
    return psi_nonrobust(params, w)


def f1(params: ModelParams, w):
    coef = expansion_coefficients(params).coeff
    p0 = np.asarray(f0(params, w))
    out = coef * (p0 - p0 * p0)
    return out if np.ndim(w) else float(out)


def _f_derivatives(params: ModelParams, w):
    """(f0, f0', f0'', f1, f1', f1'') at interior wealth ``w``."""
    ec = expansion_coefficients(params)
    d, k = ec.d, ec.coeff
    x = wealth_ratio(params, w)
    s = params.r / (params.c - params.r * params.b)
    p0 = x**d
    dp0 = -d * s * x ** (d - 1.0)
    d2p0 = d * (d - 1.0) * s * s * x ** (d - 2.0)
    p1 = k * (x**d - x ** (2.0 * d))
    dp1 = -k * s * (d * x ** (d - 1.0) - 2.0 * d * x ** (2.0 * d - 1.0))
    d2p1 = k * s * s * (d * (d - 1.0) * x ** (d - 2.0) - 2.0 * d * (2.0 * d - 1.0) * x ** (2.0 * d - 2.0))
    return p0, dp0, d2p0, p1, dp1, d2p1


def f1_ode_coefficients(params: ModelParams, w):
    """``A(w), B(w), C(w)`` of the linear equation ``f1'' + A f1' + B f1 + C = 0``."""
    dc = derive(params)
    d, R, r, lam = dc.d, dc.R, params.r, params.lam
    x = params.c - r * np.asarray(w, dtype=float)
    X = params.c - r * params.b
    A = r * (d - 1.0) * (2.0 * R - r * d + r) / R / x
    B = -lam * r * r * (d - 1.0) ** 2 / R / x**2
    C = r * r * d * d / X ** (2.0 * d) * x ** (2.0 * d - 2.0)
    return A, B, C


def f1_ode_residual(params: ModelParams, w):
    """Plug the closed-form ``f1`` into its defining linear ODE."""
    _, _, _, p1, dp1, d2p1 = _f_derivatives(params, w)
    A, B, C = f1_ode_coefficients(params, w)
    return d2p1 + A * dp1 + B * p1 + C


def first_order_residual(params: ModelParams, w):
    """Residual of the order-``eps`` balance of the polynomial HJB form,

    ``[(rw-c) f1' - lam f1] f0'' + [(rw-c) f0' - lam f0][(f0')^2 + f1''] - 2R f0' f1'``.
    """
    R = derive(params).R
    p0, dp0, d2p0, p1, dp1, d2p1 = _f_derivatives(params, w)
    a = params.r * np.asarray(w, dtype=float) - params.c
    return (a * dp1 - params.lam * p1) * d2p0 + (a * dp0 - params.lam * p0) * (dp0**2 + d2p1) - 2.0 * R * dp0 * dp1


def expansion(params: ModelParams, w, eps: float, clamp: bool = True):
    """``f0 + eps * f1``; clamped to ``[0, 1]`` unless ``clamp`` is False."""
    if eps < 0:
        raise ParameterError("eps", "eps must be non-negative")
    out = np.asarray(f0(params, w)) + eps * np.asarray(f1(params, w))
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(w) else float(out)
