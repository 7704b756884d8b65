"""Finite-difference solver for the robust ruin HJB boundary-value problem.

The unknown is ``psi`` on a uniform grid, but the equation is discretised in
Cole-Hopf variables ``v = exp(eps * psi)``, where the problem is convex:

    lam v ln v v'' + R (v')**2 - (r w - c) v' v'' = 0,   v(b) = e**eps, v(c/r) = 1.

Near the safe level ``v - 1`` behaves like ``K (c - r w)**d``, a high power
when ``r`` is small, which plain central differences resolve poorly.  The
stencil therefore differences ``g = (v - 1) / phi`` with
``phi = ((c - r w)/(c - r b))**d`` and applies the product rule with the exact
derivatives of ``phi``.  This is exact for the non-robust value function and
for the immortal-investor closed form.

Every stencil is divided by the centre value ``v_i`` and by ``eps``, so only
``expm1`` of ``eps``-scaled differences appears and nothing overflows for
large ``eps``.  The row residual is

    lam psi_i q_i + R p_i**2 - (r w_i - c) p_i q_i,

with ``p = v'/(eps v)`` (a discrete ``psi'``) and ``q = v''/(eps v)`` (a
discrete ``eps psi'**2 + psi''``).  Damped Newton with an analytic tridiagonal
Jacobian drives it to zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .closed_forms import psi_nonrobust
from .errors import ConvexityLoss, DegenerateDenominator, InconsistentConcavity, NonConvergence, ParameterError
from .model import Grid, ModelParams, derive, validate

log = logging.getLogger(__name__)

DEFAULT_GRID_N = 4001
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200
EPS_MAX = 1e3
LAM_MAX = 10.0
_DENOM_FLOOR = 1e-14


@dataclass
class ValueSolution:
    """Discrete robust value function and its feedback controls.

    ``d2psi`` is NaN at the safe level, where the second derivative may blow up.
    """

    params: ModelParams
    grid: Grid
    psi: np.ndarray
    dpsi: np.ndarray
    d2psi: np.ndarray
    pi_star: np.ndarray
    theta_star: np.ndarray
    residual_sup: float
    iterations: int

    @property
    def w(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def sharpe_distorted(self) -> np.ndarray:
        p = self.params
        return (p.mu - p.r) / p.sigma + self.theta_star


def _check_solver_params(params: ModelParams) -> None:
    validate(params)
    if not 0 < params.eps <= EPS_MAX:
        raise ParameterError("eps", f"HJB solver needs 0 < eps <= {EPS_MAX:g}; use closed forms otherwise")
    if not 0 < params.lam <= LAM_MAX:
        raise ParameterError("lam", f"HJB solver needs 0 < lambda <= {LAM_MAX:g}; use closed forms otherwise")


@dataclass(frozen=True)
class FittedStencil:
    """Per-node weights of the power-law fitted difference operators.

    ``rho_p, rho_m`` are ``phi_i / phi_{i+1}`` and ``phi_i / phi_{i-1}``;
    ``l1, l2`` are ``phi'/phi`` and ``phi''/phi`` at interior nodes.  The last
    interior node extrapolates ``g`` linearly to the safe level.
    """

    h: float
    rho_p: np.ndarray
    rho_m: np.ndarray
    l1: np.ndarray
    l2: np.ndarray

    @classmethod
    def build(cls, params: ModelParams, grid: Grid, d: float) -> "FittedStencil":
        scale = params.c - params.r * params.b
        x = (params.c - params.r * grid.nodes) / scale
        x[0], x[-1] = 1.0, 0.0
        xi = x[1:-1]
        s = params.r / scale
        with np.errstate(divide="ignore"):
            rho_p = np.exp(d * (np.log(xi) - np.log(x[2:])))
        rho_p[-1] = np.nan
        rho_m = np.exp(d * (np.log(xi) - np.log(x[:-2])))
        return cls(h=grid.h, rho_p=rho_p, rho_m=rho_m, l1=-d * s / xi, l2=d * (d - 1.0) * s * s / xi**2)

    def apply(self, psi: np.ndarray, eps: float):
        """``(p, q)`` at interior nodes and their partial derivatives with
        respect to ``(psi_{i-1}, psi_i, psi_{i+1})``."""
        h = self.h
        ui = psi[1:-1]
        up = np.expm1(eps * (psi[2:] - ui)) / eps
        um = np.expm1(eps * (psi[:-2] - ui)) / eps
        e0 = np.exp(-eps * ui)
        m0 = -np.expm1(-eps * ui) / eps
        Ep, Em = 1.0 + eps * up, 1.0 + eps * um
        # G = phi_i g_j / (eps v_i) for j = i+1, i-1, i
        gp = self.rho_p * (up + m0)
        gm = self.rho_m * (um + m0)
        g0 = m0
        dgp = [np.zeros_like(ui), self.rho_p * (e0 - Ep), self.rho_p * Ep]
        dgm = [self.rho_m * Em, self.rho_m * (e0 - Em), np.zeros_like(ui)]
        dg0 = [np.zeros_like(ui), e0, np.zeros_like(ui)]
        # linear extrapolation of g into the safe level
        gp[-1] = 2.0 * g0[-1] - gm[-1]
        for k in range(3):
            dgp[k][-1] = 2.0 * dg0[k][-1] - dgm[k][-1]
        l1, l2 = self.l1, self.l2
        p = (gp - gm) / (2.0 * h) + l1 * g0
        q = (gp - 2.0 * g0 + gm) / (h * h) + l1 * (gp - gm) / h + l2 * g0
        dp = tuple((dgp[k] - dgm[k]) / (2.0 * h) + l1 * dg0[k] for k in range(3))
        dq = tuple(
            (dgp[k] - 2.0 * dg0[k] + dgm[k]) / (h * h) + l1 * (dgp[k] - dgm[k]) / h + l2 * dg0[k] for k in range(3)
        )
        return p, q, dp, dq


def newton_tridiagonal(residual_and_jacobian, merit, u0: np.ndarray, tol: float, max_iter: int, label: str):
    """Damped Newton for Dirichlet problems with tridiagonal Jacobians.

    ``residual_and_jacobian(u)`` returns ``(F, (lower, diag, upper))`` over
    interior nodes; ``merit(u)`` returns the convergence measure, or ``inf``
    for an inadmissible iterate.  Boundary values of ``u0`` stay fixed.

    Interior values must be positive.  Steps are taken in ``log u`` so that
    nodes whose values differ by many orders of magnitude (the value function
    decays like a high power near the safe level) are updated on their own
    scale.
    """
    u = u0.copy()
    if np.any(u[1:-1] <= 0):
        raise NonConvergence(f"{label}: initial guess must be positive in the interior", 0, math.nan)
    m = merit(u)
    if not math.isfinite(m):
        raise NonConvergence(f"{label}: initial guess is inadmissible", 0, m)
    for it in range(1, max_iter + 1):
        F, (lo, di, up) = residual_and_jacobian(u)
        x = u[1:-1]
        # chain rule for u = exp(log u): scale column j by u_j
        ab = np.zeros((3, di.size))
        ab[0, 1:] = up[:-1] * x[1:]
        ab[1] = di * x
        ab[2, :-1] = lo[1:] * x[:-1]
        try:
            step = solve_banded((1, 1), ab, -F)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NonConvergence(f"{label}: singular Jacobian ({exc})", it, m) from exc
        if not np.all(np.isfinite(step)):
            raise NonConvergence(f"{label}: non-finite Newton step", it, m)
        alpha = 1.0
        while True:
            trial = u.copy()
            with np.errstate(over="ignore", invalid="ignore"):
                trial[1:-1] = x * np.exp(alpha * step)
                m_trial = merit(trial)
            if m_trial < m or (m_trial <= tol and m <= tol):
                break
            if alpha == 1.0 and float(np.max(np.abs(step))) <= tol and m <= math.sqrt(tol):
                # rounding floor: cancellation in the second differences keeps
                # the merit above tol while Newton no longer moves the iterate
                log.debug("%s stagnated at residual %.3e", label, m)
                return u, it
            alpha *= 0.5
            if alpha < 1e-10:
                raise NonConvergence(f"{label}: line search failed at residual {m:.3e}", it, m)
        step_size = alpha * float(np.max(np.abs(step)))
        u, m = trial, m_trial
        log.debug("%s iter %d residual %.3e step %.3e alpha %g", label, it, m, step_size, alpha)
        if m <= tol and step_size <= tol:
            return u, it
    raise NonConvergence(f"{label}: max_iter={max_iter} reached, residual {m:.3e}", max_iter, m)


class _HJBSystem:
    """Residual, Jacobian and merit function of the discrete HJB equation."""

    def __init__(self, params: ModelParams, grid: Grid):
        self.params = params
        self.grid = grid
        dc = derive(params)
        self.R = dc.R
        self.a = params.r * grid.interior - params.c
        self.stencil = FittedStencil.build(params, grid, dc.d)

    def residual_and_jacobian(self, psi):
        lam, eps, R, a = self.params.lam, self.params.eps, self.R, self.a
        p, q, dp, dq = self.stencil.apply(psi, eps)
        ui = psi[1:-1]
        cq = lam * ui - a * p
        cp = 2.0 * R * p - a * q
        F = lam * ui * q + R * p * p - a * p * q
        lo = cq * dq[0] + cp * dp[0]
        di = lam * q + cq * dq[1] + cp * dp[1]
        up = cq * dq[2] + cp * dp[2]
        return F, (lo, di, up)

    def division_residual(self, psi):
        """Residual of the division form, its scale, and ``q`` at interior nodes."""
        lam, eps, R, a = self.params.lam, self.params.eps, self.R, self.a
        with np.errstate(over="ignore", invalid="ignore"):
            p, q, _, _ = self.stencil.apply(psi, eps)
        ui = psi[1:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            res = lam * ui + R * p * p / q - a * p
        scale = lam * np.abs(ui) + np.abs(a * p)
        return res, scale, q

    def merit(self, psi):
        if not np.all(np.isfinite(psi)) or np.any(psi[1:-1] <= 0):
            return math.inf
        res, scale, q = self.division_residual(psi)
        # v'' must stay positive: q = v''/(eps v)
        if np.any(~(q > 0)) or not np.all(np.isfinite(res)):
            return math.inf
        ok = scale > 0
        return float(np.max(np.abs(res[ok]) / scale[ok], initial=0.0))


def _newton_solve(params, grid, psi0, tol, max_iter):
    system = _HJBSystem(params, grid)
    return newton_tridiagonal(system.residual_and_jacobian, system.merit, psi0, tol, max_iter, f"HJB eps={params.eps:g}")


def _initial_guess(params: ModelParams, grid: Grid) -> np.ndarray:
    psi0 = np.asarray(psi_nonrobust(params, grid.nodes), dtype=float)
    psi0[0], psi0[-1] = 1.0, 0.0
    return psi0


def _solve_psi(params, grid, tol, max_iter, psi_init=None):
    """Newton from ``psi_init`` (default: non-robust solution); on failure,
    continue in ``eps`` from a quarter of the target value."""
    guess = _initial_guess(params, grid) if psi_init is None else psi_init
    try:
        return _newton_solve(params, grid, guess, tol, max_iter)
    except NonConvergence as first:
        if params.eps < 1e-3:
            raise
        log.info("direct Newton failed (%s); continuing from eps=%g", first, params.eps / 4)
        coarse, its = _solve_psi(params.replace(eps=params.eps / 4.0), grid, tol, max_iter, psi_init)
        psi, its2 = _newton_solve(params, grid, coarse, tol, max_iter)
        return psi, its + its2


def one_sided_slopes(u: np.ndarray, h: float):
    """Second-order one-sided first differences at both ends."""
    left = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    right = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return left, right


def _derivatives(params: ModelParams, grid: Grid, psi: np.ndarray):
    """``dpsi``, ``d2psi`` and the Cole-Hopf denominator ``q`` per node."""
    eps, h = params.eps, grid.h
    stencil = FittedStencil.build(params, grid, derive(params).d)
    p, q, _, _ = stencil.apply(psi, eps)
    n = grid.n
    dpsi = np.empty(n)
    qq = np.empty(n)
    dpsi[1:-1] = p
    qq[1:-1] = q
    # one-sided Cole-Hopf differences at the ruin level
    e = np.expm1(eps * (psi[1:4] - psi[0])) / eps
    dpsi[0] = (4.0 * e[0] - e[1]) / (2.0 * h)
    qq[0] = (-5.0 * e[0] + 4.0 * e[1] - e[2]) / (h * h)
    dpsi[-1] = one_sided_slopes(psi, h)[1]
    qq[-1] = np.nan
    d2psi = qq - eps * dpsi**2
    return dpsi, d2psi, qq


def extract_policy(sol: ValueSolution, params: ModelParams):
    """Optimal investment and drift distortion per node.

    ``pi = -(mu - r)/sigma^2 * psi' / (eps psi'^2 + psi'')`` and
    ``theta = sigma eps psi' pi``; both vanish at the safe level.
    """
    k = (params.mu - params.r) / params.sigma**2
    dpsi, d2psi = sol.dpsi, sol.d2psi
    denom = params.eps * dpsi[:-1] ** 2 + d2psi[:-1]
    if np.any(~(denom[1:] > 0)):
        bad = int(np.flatnonzero(~(denom[1:] > 0))[0]) + 1
        raise DegenerateDenominator(f"eps*psi'^2 + psi'' <= 0 at w={sol.grid.nodes[bad]:.6g}")
    pi = np.zeros(sol.grid.n)
    pi[:-1] = -k * dpsi[:-1] / denom
    small = denom < _DENOM_FLOOR
    if np.any(small):
        # v-form: pi = -k v'/v'', same quantity with the v-scaled denominator
        _, _, qq = _derivatives(params, sol.grid, sol.psi)
        idx = np.flatnonzero(small)
        pi[idx] = -k * dpsi[idx] / qq[idx]
    theta = params.sigma * params.eps * dpsi * pi
    theta[-1] = 0.0
    return pi, theta


def residual(params: ModelParams, w, psi, dpsi, d2psi):
    """``((r w - c) psi' - lam psi)(eps psi'^2 + psi'') - R psi'^2``."""
    R = derive(params).R
    w, psi, dpsi, d2psi = (np.asarray(x, dtype=float) for x in (w, psi, dpsi, d2psi))
    a = params.r * w - params.c
    return (a * dpsi - params.lam * psi) * (params.eps * dpsi**2 + d2psi) - R * dpsi**2


def solve(
    params: ModelParams,
    grid: Grid,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    psi_init: np.ndarray | None = None,
) -> ValueSolution:
    """Solve the robust ruin HJB problem on ``grid``.

    Raises
    ------
    ParameterError
        ``eps`` or ``lam`` outside the solver's range.
    NonConvergence
        Newton (with ``eps`` continuation) did not reach ``tol``.
    ConvexityLoss
        The converged discrete Cole-Hopf transform is not convex.
    """
    _check_solver_params(params)
    if grid.nodes[0] != params.b or not math.isclose(grid.nodes[-1], params.w_safe, rel_tol=1e-12):
        raise ParameterError("grid", "grid must span [b, c/r]")
    psi, iterations = _solve_psi(params, grid, tol, max_iter, psi_init)
    psi[0], psi[-1] = 1.0, 0.0
    dpsi, d2psi, qq = _derivatives(params, grid, psi)
    if np.any(qq[1:-1] <= 0):
        raise ConvexityLoss("discrete exp(eps*psi) is not strictly convex; refine the grid")
    res, _, _ = _HJBSystem(params, grid).division_residual(psi)
    residual_sup = float(np.max(np.abs(res)))
    sol = ValueSolution(
        params=params,
        grid=grid,
        psi=psi,
        dpsi=dpsi,
        d2psi=d2psi,
        pi_star=np.zeros(grid.n),
        theta_star=np.zeros(grid.n),
        residual_sup=residual_sup,
        iterations=iterations,
    )
    sol.pi_star, sol.theta_star = extract_policy(sol, params)
    return sol


def inflection_point(sol: ValueSolution, params: ModelParams) -> float | None:
    """Wealth where ``psi`` turns from concave to convex, or None.

    The point is where ``f(w) = (r w - c) psi' - lam psi`` falls through
    ``R / eps``; that is also where the distorted Sharpe ratio is zero.
    """
    dc = derive(params)
    if params.r <= params.lam or params.eps <= dc.eps_convex:
        return None
    w = sol.grid.nodes[1:-1]
    f = (params.r * w - params.c) * sol.dpsi[1:-1] - params.lam * sol.psi[1:-1]
    g = f - dc.R / params.eps
    down = np.flatnonzero((g[:-1] > 0) & (g[1:] <= 0))
    sign = np.sign(sol.d2psi[1:-1])
    sign = sign[sign != 0]
    changes = int(np.count_nonzero(sign[1:] != sign[:-1]))
    if changes > 1 or down.size > 1:
        raise InconsistentConcavity(f"{changes} concavity changes detected; refine the grid")
    if down.size == 0:
        return None
    i = int(down[0])
    w0 = w[i] + g[i] / (g[i] - g[i + 1]) * (w[i + 1] - w[i])
    d2 = sol.d2psi[1:-1]
    lo, hi = max(i - 2, 0), min(i + 3, d2.size - 1)
    if not (np.any(d2[lo : i + 1] < 0) and np.any(d2[i + 1 : hi + 1] > 0)):
        raise InconsistentConcavity(f"psi'' does not change sign near w0={w0:.6g}")
    return float(w0)


def boundary_slope(sol: ValueSolution, params: ModelParams, stencil: int = 3) -> float:
    """One-sided slope of ``pi_star`` at the safe level.

    Uses nodes ``stencil`` and ``2 * stencil`` cells in from the safe level
    where the discrete ``psi''`` is well resolved; ``pi_star`` vanishes at
    the safe level itself.
    """
    h = sol.grid.h
    pi = sol.pi_star
    k = stencil
    # second-order one-sided difference on a stride-k stencil anchored at w_s
    return float((3.0 * pi[-1] - 4.0 * pi[-1 - k] + pi[-1 - 2 * k]) / (2.0 * k * h))


def nonrobust_boundary_slope(params: ModelParams) -> float:
    """Slope of the non-robust investment at the safe level."""
    d = derive(params).d
    return -(params.mu - params.r) / (params.sigma**2 * (d - 1.0))
