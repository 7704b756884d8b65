"""Model parameters, derived constants and the wealth grid.

Wealth lives on ``[b, c/r]``: ``b`` is the ruin level and ``c/r`` the safe
level at which interest alone pays for consumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

MIN_GRID_NODES = 18


@dataclass(frozen=True)
class ModelParams:
    """Market and preference scalars.

    Parameters
    ----------
    r : float
        Interest rate (1/year).
    mu : float
        Drift of the risky asset under the reference measure (1/year).
    sigma : float
        Volatility of the risky asset.
    c : float
        Consumption rate (wealth/year).
    b : float
        Ruin level.
    lam : float
        Hazard rate of the exponential death time (1/year).
    eps : float
        Ambiguity aversion; 0 is the non-robust problem.
    """

    r: float
    mu: float
    sigma: float
    c: float
    b: float
    lam: float
    eps: float

    @property
    def w_safe(self) -> float:
        return self.c / self.r

    def replace(self, **changes) -> "ModelParams":
        fields = {k: getattr(self, k) for k in ("r", "mu", "sigma", "c", "b", "lam", "eps")}
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class DerivedConstants:
    R: float
    d: float
    w_s: float
    eps_convex: float
    eps_concave: float


@dataclass(frozen=True)
class Grid:
    nodes: np.ndarray
    h: float

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]


def validate(params: ModelParams) -> ModelParams:
    """Check the standing assumptions; return ``params`` unchanged.

    Raises
    ------
    ParameterError
        One per violated assumption, naming the field.
    """
    for name in ("r", "mu", "sigma", "c", "b", "lam", "eps"):
        value = getattr(params, name)
        if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
            raise ParameterError(name, f"{name} must be a finite number, got {value!r}")
    if params.r <= 0:
        raise ParameterError("r", "r must be positive")
    if params.sigma <= 0:
        raise ParameterError("sigma", "sigma must be positive")
    if params.c <= 0:
        raise ParameterError("c", "c must be positive")
    if params.mu <= params.r:
        raise ParameterError("mu", "mu must exceed r")
    if params.lam < 0:
        raise ParameterError("lam", "lambda must be non-negative")
    if params.eps < 0:
        raise ParameterError("eps", "eps must be non-negative")
    if params.b >= params.c / params.r:
        raise ParameterError("b", f"b must be below safe level c/r = {params.c / params.r:g}")
    return params


def sharpe_half_squared(params: ModelParams) -> float:
    return 0.5 * ((params.mu - params.r) / params.sigma) ** 2


def derive(params: ModelParams) -> DerivedConstants:
    """Constants that recur throughout: ``R``, ``d``, the safe level, and the
    two ambiguity-aversion thresholds that govern convexity of the value
    function when ``r > lam``."""
    r, lam = params.r, params.lam
    R = sharpe_half_squared(params)
    s = r + lam + R
    d = (s + math.sqrt(s * s - 4.0 * r * lam)) / (2.0 * r)
    eps_convex = R / (r * d - lam) if r * d > lam else math.inf
    eps_concave = R / (r - lam) if r > lam else math.inf
    return DerivedConstants(R=R, d=d, w_s=params.c / r, eps_convex=eps_convex, eps_concave=eps_concave)


def make_grid(params: ModelParams, n: int) -> Grid:
    """Uniform grid with ``n`` nodes from ``b`` to ``c/r`` inclusive."""
    if int(n) != n or n < MIN_GRID_NODES:
        raise ParameterError("n", f"grid needs at least {MIN_GRID_NODES} nodes, got {n}")
    n = int(n)
    w_s = params.c / params.r
    nodes = np.linspace(params.b, w_s, n)
    nodes[0], nodes[-1] = params.b, w_s
    return Grid(nodes=nodes, h=(w_s - params.b) / (n - 1))
