"""Exact value functions and feedback policies for the limiting regimes.

* ``eps = 0``: non-robust ruin probability and investment.
* ``eps = inf``: worst case, where the investor holds no risky asset.
* ``lam = 0``: perpetual life, solved explicitly by the Cole-Hopf transform.

Every function accepts scalars or arrays and extends the formulas by 1 below
the ruin level and 0 above the safe level.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ParameterError
from .model import ModelParams, derive

# expm1(eps) overflows past ~709.
_EXP_SAFE = 700.0


def wealth_ratio(params: ModelParams, w):
    """``(c - r w) / (c - r b)`` clipped to ``[0, 1]``."""
    w = np.asarray(w, dtype=float)
    x = (params.c - params.r * w) / (params.c - params.r * params.b)
    return np.clip(x, 0.0, 1.0)


def _scalar_or_array(out, w):
    return out if np.ndim(w) else float(out)


def psi_nonrobust(params: ModelParams, w):
    if params.lam <= 0:
        raise ParameterError("lam", "non-robust closed form needs lambda > 0")
    d = derive(params).d
    return _scalar_or_array(wealth_ratio(params, w) ** d, w)


def pi_nonrobust(params: ModelParams, w):
    """Optimal non-robust investment; zero outside ``[b, c/r]``."""
    if params.lam <= 0:
        raise ParameterError("lam", "pi_nonrobust is undefined for lambda = 0; use pi_perpetual")
    d = derive(params).d
    w = np.asarray(w, dtype=float)
    pi = (params.mu - params.r) / params.sigma**2 * (params.c - params.r * w) / ((d - 1.0) * params.r)
    inside = (w >= params.b) & (w <= params.w_safe)
    return _scalar_or_array(np.where(inside, pi, 0.0), w)


def psi_worstcase(params: ModelParams, w):
    """Ruin probability when nature may pick any drift at no cost."""
    return _scalar_or_array(wealth_ratio(params, w) ** (params.lam / params.r), w)


def _log_one_plus(eps: float, y):
    """``log(1 + (e**eps - 1) * y)`` without overflow for large ``eps``."""
    y = np.asarray(y, dtype=float)
    if eps <= _EXP_SAFE:
        return np.log1p(np.expm1(eps) * y)
    with np.errstate(divide="ignore"):
        out = eps + np.log(y + (1.0 - y) * np.exp(-eps))
    return np.where(y > 0, out, 0.0)


def _perpetual_power(params: ModelParams) -> float:
    return derive(params).R / params.r + 1.0


def psi_perpetual(params: ModelParams, w):
    """Robust ruin probability for an immortal investor (``lam`` ignored)."""
    eps = params.eps
    if eps <= 0:
        raise ParameterError("eps", "psi_perpetual needs eps > 0")
    y = wealth_ratio(params, w) ** _perpetual_power(params)
    return _scalar_or_array(_log_one_plus(eps, y) / eps, w)


def psi_perpetual_derivatives(params: ModelParams, w):
    """Analytic first and second wealth derivatives of ``psi_perpetual``."""
    eps = params.eps
    k = _perpetual_power(params)
    x = wealth_ratio(params, w)
    scale = params.c - params.r * params.b
    y = x**k
    # phi = 1 + (e^eps - 1) y and psi' = phi' / (eps phi); weight = (e^eps - 1) / phi
    one_minus = -np.expm1(-eps)
    weight = one_minus / (np.exp(-eps) + one_minus * y)
    dy = -k * params.r / scale * x ** (k - 1.0)
    d2y = k * (k - 1.0) * (params.r / scale) ** 2 * x ** (k - 2.0)
    dpsi = weight * dy / eps
    d2psi = weight * d2y / eps - eps * dpsi**2
    return dpsi, d2psi


def pi_perpetual(params: ModelParams, w):
    w = np.asarray(w, dtype=float)
    pi = 2.0 * (params.c - params.r * w) / (params.mu - params.r)
    inside = (w >= params.b) & (w <= params.w_safe)
    return _scalar_or_array(np.where(inside, pi, 0.0), w)


def theta_perpetual(params: ModelParams, w):
    """Optimal drift distortion for the immortal investor; in
    ``(-2 sigma (R + r) / (mu - r), 0)`` on the open interval."""
    eps = params.eps
    if eps <= 0:
        raise ParameterError("eps", "theta_perpetual needs eps > 0")
    R = derive(params).R
    y = wealth_ratio(params, w) ** _perpetual_power(params)
    # q/(1+q) with q = (e^eps - 1) y, via the logistic function of log q
    log_em1 = eps + np.log1p(-np.exp(-eps))
    with np.errstate(divide="ignore"):
        frac = np.where(y > 0, expit(log_em1 + np.log(np.where(y > 0, y, 1.0))), 0.0)
    theta = -2.0 * params.sigma * (R + params.r) / (params.mu - params.r) * frac
    w_arr = np.asarray(w, dtype=float)
    theta = np.where((w_arr >= params.b) & (w_arr <= params.w_safe), theta, 0.0)
    return _scalar_or_array(theta, w)


def theta_perpetual_limit(params: ModelParams) -> float:
    """Limit of ``theta_perpetual`` as ``eps`` grows without bound."""
    R = derive(params).R
    return -2.0 * params.sigma * (R + params.r) / (params.mu - params.r)
