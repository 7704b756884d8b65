import pytest

from robust_ruin import ModelParams, make_grid, solve

# reference market: c = 1, b = 1, mu = 0.1, sigma = 0.15, lam = 0.04
BASE = dict(mu=0.1, sigma=0.15, c=1.0, b=1.0, lam=0.04)


def market(r=0.02, eps=1.0, **kw):
    return ModelParams(**{**BASE, "r": r, "eps": eps, **kw})


_CACHE = {}


def solved(r, eps, n=4001):
    key = (r, eps, n)
    if key not in _CACHE:
        p = market(r, eps)
        _CACHE[key] = solve(p, make_grid(p, n))
    return _CACHE[key]


@pytest.fixture
def p02():
    return market(0.02)


@pytest.fixture
def p06():
    return market(0.06)
