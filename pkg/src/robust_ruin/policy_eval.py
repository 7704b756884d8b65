"""Robust ruin probability of a fixed investment rule.

With ``pi`` frozen the adversary still picks ``theta = sigma eps pi u'``,
leaving the semilinear equation

    lam u = (r w - c + (mu - r) pi) u' + sigma**2 pi**2 (u'' + eps u'**2) / 2

with ``u(b) = 1`` and ``u(c/r) = 0``.  It is solved with the stencil and
Newton scaffold of the HJB solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InadmissiblePolicy, ParameterError
from .hjb import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    FittedStencil,
    _check_solver_params,
    newton_tridiagonal,
    solve,
)
from .closed_forms import pi_nonrobust
from .model import Grid, ModelParams, make_grid

_RANGE_SLACK = 1e-6


@dataclass(frozen=True)
class PolicyTable:
    """Investment rule sampled on a grid, linearly interpolated in between.

    Zero outside the grid's wealth range and at its last node.
    """

    grid: Grid
    pi: np.ndarray = field(repr=False)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.shape != self.grid.nodes.shape:
            raise ParameterError("pi", f"policy has {pi.size} values for {self.grid.n} nodes")
        if not np.all(np.isfinite(pi)):
            raise ParameterError("pi", "policy values must be finite")
        pi[-1] = 0.0
        object.__setattr__(self, "pi", pi)

    def __call__(self, w):
        out = np.interp(w, self.grid.nodes, self.pi, left=0.0, right=0.0)
        return out if np.ndim(w) else float(out)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "PolicyTable":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))


@dataclass
class PolicyValue:
    """Robust ruin probability ``u`` of a fixed policy on ``grid``."""

    params: ModelParams
    grid: Grid
    u: np.ndarray
    pi: np.ndarray
    residual_sup: float
    iterations: int


def local_exponent(params: ModelParams, slope: float) -> float:
    """Power ``k`` with ``u ~ (c/r - w)**k`` near the safe level when the
    policy behaves like ``slope * (c/r - w)`` there.

    Positive root of ``sigma^2 s^2 k (k - 1) / 2 + (r - (mu - r) s) k = lam``.
    """
    s = slope
    a2 = 0.5 * params.sigma**2 * s * s
    a1 = params.r - (params.mu - params.r) * s - a2
    if a2 == 0.0:
        if a1 <= 0:
            raise InadmissiblePolicy("wealth drifts away from the safe level faster than interest pulls it in")
        return params.lam / a1
    return (-a1 + math.sqrt(a1 * a1 + 4.0 * a2 * params.lam)) / (2.0 * a2)


class _FixedPolicySystem:
    def __init__(self, params: ModelParams, grid: Grid, pi: np.ndarray):
        self.params = params
        pi_i = pi[1:-1]
        self.drift = params.r * grid.interior - params.c + (params.mu - params.r) * pi_i
        self.diff = 0.5 * params.sigma**2 * pi_i**2
        self.exponent = local_exponent(params, max(pi[-2], 0.0) / grid.h)
        self.stencil = FittedStencil.build(params, grid, self.exponent)

    def residual_and_jacobian(self, u):
        lam = self.params.lam
        p, q, dp, dq = self.stencil.apply(u, self.params.eps)
        F = lam * u[1:-1] - self.drift * p - self.diff * q
        jac = [-self.drift * dp[k] - self.diff * dq[k] for k in range(3)]
        jac[1] = jac[1] + lam
        return F, tuple(jac)

    def merit(self, u):
        if not np.all(np.isfinite(u)) or np.any(u[1:-1] <= 0):
            return math.inf
        lam = self.params.lam
        with np.errstate(over="ignore", invalid="ignore"):
            p, q, _, _ = self.stencil.apply(u, self.params.eps)
            F = lam * u[1:-1] - self.drift * p - self.diff * q
            scale = lam * u[1:-1] + np.abs(self.drift * p) + np.abs(self.diff * q)
        if not np.all(np.isfinite(F)):
            return math.inf
        return float(np.max(np.abs(F) / scale))


def evaluate_fixed_policy(
    params: ModelParams,
    policy: PolicyTable,
    grid: Grid,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    u_init: np.ndarray | None = None,
) -> PolicyValue:
    """Robust ruin probability when the investor follows ``policy``.

    Raises
    ------
    NonConvergence
        Newton did not reach ``tol``.
    InadmissiblePolicy
        The result leaves ``[0, 1]`` or increases with wealth.
    """
    _check_solver_params(params)
    pi = np.asarray(policy(grid.nodes), dtype=float)
    pi[-1] = 0.0
    if np.any(pi < 0):
        raise InadmissiblePolicy("short positions in the risky asset are not supported")
    system = _FixedPolicySystem(params, grid, pi)
    if u_init is None:
        x = (params.c - params.r * grid.nodes) / (params.c - params.r * params.b)
        u_init = np.clip(x, 0.0, 1.0) ** system.exponent
    u0 = np.array(u_init, dtype=float)
    u0[0], u0[-1] = 1.0, 0.0
    u, its = newton_tridiagonal(system.residual_and_jacobian, system.merit, u0, tol, max_iter, "fixed policy")
    u[0], u[-1] = 1.0, 0.0
    if np.any(u < -_RANGE_SLACK) or np.any(u > 1.0 + _RANGE_SLACK) or np.any(np.diff(u) > _RANGE_SLACK):
        raise InadmissiblePolicy("fixed-policy value left [0, 1] or is not decreasing")
    res = system.residual_and_jacobian(u)[0]
    return PolicyValue(params, grid, u, pi, float(np.max(np.abs(res))), its)


def max_deviation(params: ModelParams, n: int = 4001, tol: float = DEFAULT_TOL) -> float:
    """Largest excess ruin probability of the non-robust rule in the robust market."""
    grid = make_grid(params, n)
    sol = solve(params, grid, tol=tol)
    policy = PolicyTable.from_function(grid, lambda w: pi_nonrobust(params, w))
    value = evaluate_fixed_policy(params, policy, grid, tol=tol, u_init=sol.psi)
    return float(np.max(value.u - sol.psi))


def deviation_table(base: ModelParams, r_values, eps_values, n: int = 4001, decimals: int | None = 3):
    """``{(r, eps): max deviation}`` over all pairs, rounded unless ``decimals`` is None."""
    table = {}
    for r in r_values:
        for eps in eps_values:
            dev = max_deviation(base.replace(r=float(r), eps=float(eps)), n=n)
            table[(float(r), float(eps))] = round(dev, decimals) if decimals is not None else dev
    return table
