"""Monte Carlo estimate of the robust objective under feedback controls.

Wealth follows the drift-distorted dynamics

    dW = [r W + (mu + sigma theta - r) pi - c] dt + sigma pi dB

simulated directly under the distorted measure with Euler-Maruyama.  The
death time is drawn once per path from ``Exp(lam)`` and the last step is cut
at it.  A path scores ``1{ruin before death} - penalty / eps`` where
``penalty = int theta**2 / 2 dt`` up to death, ruin or the safe level.

Ruin inside a step is detected with the Brownian-bridge crossing probability
``exp(-2 (w - b)(w' - b) / (sigma pi)**2 dt)`` on top of the endpoint test;
without it discrete monitoring misses crossings at a rate of order
``sqrt(dt)``.

Random numbers come from one SplitMix64 stream per path whose start is a hash
of ``(seed, path index)``, so a path's outcome does not depend on which worker
simulates it.  Per-path results are reduced in index order, which makes
estimates bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ParameterError
from .model import ModelParams, validate
from .policy_eval import PolicyTable

RUIN, DEATH, SAFE_HIT, TRUNCATED = 0, 1, 2, 3
EXIT_REASONS = ("ruin", "death", "safe_hit", "truncated")

DEFAULT_DT = 1e-3
DEFAULT_T_MAX = 400.0
DEFAULT_N_PATHS = 100_000
DEFAULT_SEED = 42

# crossing probabilities below exp(-40) are skipped
_BRIDGE_CUTOFF = 40.0
# paths advanced in lockstep by one worker
_LANES = 64

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_ONE = np.uint64(1)
_LOW7 = np.uint64(127)
_TWO_M53 = 2.0**-53


def _ziggurat_tables(layers: int = 128, tail: float = 3.442619855899, area: float = 9.91256303526217e-3):
    """Layer abscissae and ratios of the 128-layer normal ziggurat (Doornik, 2005)."""
    x = np.zeros(layers + 1)
    x[0] = area / math.exp(-0.5 * tail * tail)
    x[1] = tail
    for i in range(2, layers):
        x[i] = math.sqrt(-2.0 * math.log(area / x[i - 1] + math.exp(-0.5 * x[i - 1] ** 2)))
    ratio = x[1:] / x[:-1]
    return x, ratio


_ZIG_X, _ZIG_R = _ziggurat_tables()
_ZIG_TAIL = float(_ZIG_X[1])


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Parameters
    ----------
    w0 : float
        Initial wealth.
    n_paths : int
    dt : float
        Euler step in years.
    seed : int
        Unsigned 64-bit seed.
    t_max : float
        Paths still alive at ``t_max`` count as not ruined.
    workers : int, optional
        Threads; ``None`` uses the CPU count.  Results do not depend on it.
    """

    w0: float
    n_paths: int = DEFAULT_N_PATHS
    dt: float = DEFAULT_DT
    seed: int = DEFAULT_SEED
    t_max: float = DEFAULT_T_MAX
    workers: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt", "dt must be positive")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterError("n_paths", "n_paths must be a positive integer")
        if not self.t_max > 0:
            raise ParameterError("t_max", "t_max must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed", "seed must fit in 64 unsigned bits")
        if self.workers is not None and self.workers < 1:
            raise ParameterError("workers", "workers must be at least 1")


@dataclass(frozen=True)
class PathOutcome:
    ruined_before_death: bool
    penalty_integral: float
    exit_reason: str


@dataclass(frozen=True)
class Estimate:
    """Aggregate over paths; ``mean = ruin_frequency - mean_penalty / eps``."""

    mean: float
    std_error: float
    n_paths: int
    fraction_safe_hit: float
    ruin_frequency: float
    mean_penalty: float


@numba.njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(inline="always")
def _next(state):
    state = state + _GAMMA
    return state, _mix64(state)


@numba.njit(inline="always")
def _uniform(state):
    """Uniform on (0, 1]."""
    state, x = _next(state)
    return state, (np.float64(x >> _S11) + 1.0) * _TWO_M53


@numba.njit(inline="always")
def _normal(state, zx, zr):
    """Standard normal by the ziggurat method; one 64-bit draw on the fast path."""
    while True:
        state, bits = _next(state)
        state, z, ok = _normal_finish(state, bits, zx, zr)
        if ok:
            return state, z


@numba.njit(inline="always")
def _normal_finish(state, bits, zx, zr):
    """Complete one ziggurat attempt from the draw ``bits``; ``ok`` is False on rejection."""
    i = int(bits & _LOW7)
    u = 2.0 * np.float64(bits >> _S11) * _TWO_M53 - 1.0
    if abs(u) < zr[i]:
        return state, u * zx[i], True
    if i == 0:
        # tail beyond the base layer
        while True:
            state, a = _uniform(state)
            state, e = _uniform(state)
            x = math.log(a) / _ZIG_TAIL
            if -2.0 * math.log(e) >= x * x:
                break
        return state, (x - _ZIG_TAIL) if u < 0.0 else (_ZIG_TAIL - x), True
    x = u * zx[i]
    f0 = math.exp(-0.5 * (zx[i] * zx[i] - x * x))
    f1 = math.exp(-0.5 * (zx[i + 1] * zx[i + 1] - x * x))
    state, v = _uniform(state)
    return state, x, f1 + v * (f0 - f1) < 1.0


@numba.njit
def _normal_resume(state, bits, zx, zr):
    """Finish a normal whose first ziggurat draw ``bits`` missed the fast path."""
    state, z, ok = _normal_finish(state, bits, zx, zr)
    while not ok:
        state, bits = _next(state)
        state, z, ok = _normal_finish(state, bits, zx, zr)
    return state, z


@numba.njit(nogil=True, cache=True, fastmath=True)
def _simulate_range(
    start, stop, seed, w0, r, mu, sigma, c, b, lam, dt, t_max,
    pi_tab, th_tab, lo, h, zx, zr, ruined, penalty, reason,
):  # fmt: skip
    """Simulate paths ``start .. stop-1`` into the output arrays.

    ``_LANES`` paths advance in lockstep.  Each time step first runs two
    branch-free passes over the lanes (random draw with the ziggurat fast
    path, then the Euler update) that the compiler can vectorise, and then a
    scalar pass over the few lanes that need more work: a rejected ziggurat
    draw, a possible ruin, the safe level, or the last step.  A lane whose
    path ends picks up the next path index.  Each path reads only its own
    random stream in a fixed order, so the lane schedule does not affect any
    outcome.
    """
    L = _LANES
    n = pi_tab.size
    inv_h = 1.0 / h
    w_s = c / r
    seed_u = np.uint64(seed)
    sq_dt = math.sqrt(dt)
    half_cut = 0.5 * _BRIDGE_CUTOFF
    x_hi = float(n - 1)
    kk = np.full(L, -1, dtype=np.int64)
    st = np.zeros(L, dtype=np.uint64)
    bits = np.zeros(L, dtype=np.uint64)
    ws = np.full(L, 0.5 * (b + c / r))
    wn = np.zeros(L)
    zs = np.zeros(L)
    ok = np.zeros(L, dtype=np.bool_)
    ev = np.zeros(L, dtype=np.bool_)
    pens = np.zeros(L)
    rates = np.zeros(L)
    drifts = np.zeros(L)
    vols = np.zeros(L)
    tends = np.zeros(L)
    nfull = np.zeros(L, dtype=np.int64)
    js = np.full(L, -1, dtype=np.int64)
    ends = np.zeros(L, dtype=np.int64)
    nxt = start
    active = 0
    refill = True
    while True:
        if refill:
            # hand out new paths to idle lanes; trivial starting points finish here
            for lane in range(L):
                while kk[lane] < 0 and nxt < stop:
                    k = nxt
                    nxt += 1
                    if w0 <= b:
                        ruined[k], penalty[k], reason[k] = 1, 0.0, RUIN
                        continue
                    if w0 >= w_s:
                        ruined[k], penalty[k], reason[k] = 0, 0.0, SAFE_HIT
                        continue
                    state = _mix64(seed_u + _mix64(np.uint64(k) + _ONE))
                    state, u = _uniform(state)
                    t_end = -math.log(u) / lam
                    ends[lane] = DEATH
                    if t_end > t_max:
                        t_end = t_max
                        ends[lane] = TRUNCATED
                    kk[lane] = k
                    st[lane] = state
                    tends[lane] = t_end
                    nfull[lane] = int(t_end / dt)
                    js[lane] = 0
                    ws[lane] = w0
                    pens[lane] = 0.0
                    active += 1
            refill = False
        if active == 0:
            break
        # vector pass 1: one 64-bit draw per lane and the ziggurat fast path
        for lane in range(L):
            s = st[lane] + _GAMMA
            st[lane] = s
            x = _mix64(s)
            bits[lane] = x
            i = np.int64(x & _LOW7)
            u = 2.0 * np.float64(np.int64(x >> _S11)) * _TWO_M53 - 1.0
            zs[lane] = u * zx[i]
            ok[lane] = abs(u) < zr[i]
        for lane in range(L):
            if not ok[lane]:
                st[lane], zs[lane] = _normal_resume(st[lane], bits[lane], zx, zr)
        # vector pass 2: full Euler step with interpolated controls
        for lane in range(L):
            w = ws[lane]
            x = (w - lo) * inv_h
            m = 1.0 if (x > 0.0) & (x < x_hi) else 0.0
            xc = min(max(x, 0.0), x_hi - 1.0)
            i = int(xc)
            f = xc - i
            pi = (pi_tab[i] + f * (pi_tab[i + 1] - pi_tab[i])) * m
            th = (th_tab[i] + f * (th_tab[i + 1] - th_tab[i])) * m
            vol = sigma * pi
            drift = r * w - c + (mu - r + sigma * th) * pi
            w_new = w + drift * dt + vol * sq_dt * zs[lane]
            rate = 0.5 * th * th
            gap = (w - b) * (w_new - b)
            e = (js[lane] == nfull[lane]) | (w_new <= b) | (gap < half_cut * vol * vol * dt) | (w_new >= w_s)
            ev[lane] = e
            drifts[lane] = drift
            vols[lane] = vol
            rates[lane] = rate
            ws[lane] = w if e else w_new
            pens[lane] = pens[lane] if e else pens[lane] + rate * dt
            js[lane] = js[lane] if e else js[lane] + 1
        # scalar pass: last partial step, ruin, bridge crossing, safe level
        for lane in range(L):
            if not ev[lane]:
                continue
            k = kk[lane]
            if k < 0:
                continue
            w, drift, vol, rate = ws[lane], drifts[lane], vols[lane], rates[lane]
            last = js[lane] == nfull[lane]
            step = tends[lane] - js[lane] * dt if last else dt
            w_new = w + drift * step + vol * math.sqrt(step) * zs[lane]
            pen = pens[lane]
            state = st[lane]
            out = -1
            if w_new <= b:
                pen += rate * step * (w - b) / (w - w_new)
                out = RUIN
            else:
                var = vol * vol * step
                gap = (w - b) * (w_new - b)
                if gap < half_cut * var:
                    # Brownian bridge: chance the path dipped below b inside the step
                    state, ub = _uniform(state)
                    if ub < math.exp(-2.0 * gap / var):
                        pen += rate * step
                        out = RUIN
                if out < 0:
                    if w_new >= w_s:
                        pen += rate * step * (w_s - w) / (w_new - w)
                        out = SAFE_HIT
                    else:
                        pen += rate * step
                        if last:
                            out = ends[lane]
            if out >= 0:
                ruined[k] = 1 if out == RUIN else 0
                penalty[k] = pen
                reason[k] = out
                kk[lane] = -1
                # park the idle lane where it raises no events
                ws[lane] = 0.5 * (b + w_s)
                js[lane] = -1
                active -= 1
                refill = True
            else:
                st[lane] = state
                ws[lane] = w_new
                pens[lane] = pen
                js[lane] += 1


def _tables(params: ModelParams, pi_policy: PolicyTable, theta_policy: PolicyTable | None):
    grid = pi_policy.grid
    pi = np.ascontiguousarray(pi_policy.pi, dtype=float)
    if theta_policy is None:
        th = np.zeros_like(pi)
    else:
        th = np.ascontiguousarray(theta_policy(grid.nodes), dtype=float)
    pi, th = pi.copy(), th.copy()
    pi[-1] = th[-1] = 0.0
    return pi, th, float(grid.nodes[0]), float(grid.h)


def simulate_paths(params: ModelParams, pi_policy: PolicyTable, theta_policy: PolicyTable | None, sim: SimConfig):
    """Per-path ``(ruined, penalty, reason)`` arrays for paths ``0 .. n_paths-1``."""
    validate(params)
    if params.lam <= 0:
        raise ParameterError("lam", "simulation needs lambda > 0")
    pi, th, lo, h = _tables(params, pi_policy, theta_policy)
    n = int(sim.n_paths)
    ruined = np.zeros(n, dtype=np.int8)
    penalty = np.zeros(n)
    reason = np.zeros(n, dtype=np.int8)
    args = (int(sim.seed), float(sim.w0)) + tuple(float(v) for v in (params.r, params.mu, params.sigma, params.c, params.b, params.lam))
    tail = (float(sim.dt), float(sim.t_max), pi, th, lo, h, _ZIG_X, _ZIG_R, ruined, penalty, reason)
    workers = sim.workers or os.cpu_count() or 1
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    if workers == 1:
        _simulate_range(0, n, *args, *tail)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_range, int(s), int(e), *args, *tail) for s, e in zip(bounds[:-1], bounds[1:])]
            for f in futures:
                f.result()
    return ruined, penalty, reason


def simulate_path(
    params: ModelParams,
    pi_policy: PolicyTable,
    theta_policy: PolicyTable | None,
    sim: SimConfig,
    index: int = 0,
) -> PathOutcome:
    """Outcome of path ``index`` of the stream keyed by ``sim.seed``."""
    single = SimConfig(w0=sim.w0, n_paths=index + 1, dt=sim.dt, seed=sim.seed, t_max=sim.t_max, workers=1)
    ruined, penalty, reason = simulate_paths(params, pi_policy, theta_policy, single)
    return PathOutcome(bool(ruined[index]), float(penalty[index]), EXIT_REASONS[int(reason[index])])


def estimate_objective(
    params: ModelParams,
    pi_policy: PolicyTable,
    theta_policy: PolicyTable | None,
    sim: SimConfig,
) -> Estimate:
    """Mean of ``1{ruin before death} - penalty / eps`` with its standard error.

    With ``theta_policy=None`` the adversary is switched off and the penalty
    is zero, so ``eps`` may be 0.
    """
    ruined, penalty, reason = simulate_paths(params, pi_policy, theta_policy, sim)
    n = ruined.size
    if theta_policy is None:
        x = ruined.astype(float)
    else:
        if params.eps <= 0:
            raise ParameterError("eps", "a drift distortion needs eps > 0")
        x = ruined - penalty / params.eps
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(
        mean=mean,
        std_error=se,
        n_paths=n,
        fraction_safe_hit=float(np.count_nonzero(reason == SAFE_HIT)) / n,
        ruin_frequency=float(np.mean(ruined)),
        mean_penalty=float(np.mean(penalty)),
    )


def safe_level_frequency(
    params: ModelParams,
    pi_policy: PolicyTable,
    sim: SimConfig,
    theta_policy: PolicyTable | None = None,
) -> float:
    """Fraction of paths that reach the safe level before ruin and death.

    Without ``theta_policy`` wealth moves under the reference drift.
    """
    _, _, reason = simulate_paths(params, pi_policy, theta_policy, sim)
    return float(np.count_nonzero(reason == SAFE_HIT)) / reason.size
