import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_ruin import ModelParams, ParameterError, derive, make_grid, validate
from robust_ruin.model import MIN_GRID_NODES

from conftest import market

# high-precision values of the exponent quadratic, computed with mpmath
D_02 = 9.909280102262821
D_06 = 1.910268107716963


def test_validate_accepts_reference_market():
    p = market(0.02, eps=5.0)
    assert validate(p) is p


@pytest.mark.parametrize(
    "changes, field, text",
    [
        (dict(mu=0.01), "mu", "mu must exceed r"),
        (dict(b=60.0), "b", "b must be below safe level"),
        (dict(r=0.0), "r", ""),
        (dict(sigma=-1.0), "sigma", ""),
        (dict(c=0.0), "c", ""),
        (dict(lam=-0.1), "lam", ""),
        (dict(eps=-1.0), "eps", ""),
        (dict(eps=math.nan), "eps", ""),
    ],
)
def test_validate_rejects(changes, field, text):
    with pytest.raises(ParameterError) as info:
        validate(market(0.02).replace(**changes))
    assert info.value.field == field
    assert text in str(info.value)


def test_derived_constants_r002():
    k = derive(market(0.02))
    assert k.R == pytest.approx(0.1422222222222222, rel=1e-14)
    assert k.d == pytest.approx(D_02, rel=1e-13)
    assert k.w_s == 50.0
    assert k.eps_convex == pytest.approx(0.8990844955758546, rel=1e-12)
    assert math.isinf(k.eps_concave)


def test_derived_thresholds_r006():
    k = derive(market(0.06))
    assert k.d == pytest.approx(D_06, rel=1e-13)
    assert round(k.eps_convex, 4) == 0.4765
    assert round(k.eps_concave, 4) == 1.7778


@given(
    r=st.floats(0.005, 0.2),
    excess=st.floats(0.005, 0.5),
    sigma=st.floats(0.05, 1.0),
    lam=st.floats(0.0, 1.0),
)
def test_exponent_solves_quadratic(r, excess, sigma, lam):
    p = ModelParams(r=r, mu=r + excess, sigma=sigma, c=1.0, b=0.0, lam=lam, eps=1.0)
    k = derive(p)
    scale = (r + lam + k.R) ** 2
    assert abs(r * k.d**2 - (r + lam + k.R) * k.d + lam) <= 1e-12 * scale
    if lam > 0:
        assert k.d > 1.0


def test_grid_arithmetic(p02):
    g = make_grid(p02, 50)
    assert g.n == 50 and g.h == pytest.approx(1.0)
    assert g.nodes[0] == 1.0 and g.nodes[-1] == 50.0
    assert make_grid(p02, 4901).h == pytest.approx(0.01, rel=1e-12)
    assert np.allclose(np.diff(make_grid(p02, 4001).nodes), 49 / 4000, rtol=1e-12, atol=0)


def test_grid_too_small(p02):
    with pytest.raises(ParameterError):
        make_grid(p02, 5)
    make_grid(p02, MIN_GRID_NODES)
    with pytest.raises(ParameterError):
        make_grid(p02, MIN_GRID_NODES - 1)
