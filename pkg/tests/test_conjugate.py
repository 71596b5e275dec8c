import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

import conjugacy_suite as suite
from crp_ldp import conjugate as cj
from crp_ldp import corpus
from crp_ldp.conjugate import BoxExhausted, ExtFunction, SearchPolicy


def _brute_sup(f, lo, hi, step):
    x = np.arange(lo, hi + step / 2, step)
    return float(np.max(f(x)))


# -- legendre ------------------------------------------------------------------

def test_legendre_quadratic_self_conjugate():
    assert float(cj.legendre(corpus.quadratic(), [1.0])) == pytest.approx(0.5, abs=1e-12)


def test_legendre_abs_is_unit_ball_indicator():
    F = corpus.absolute()
    assert float(cj.legendre(F, [0.5])) == 0.0
    assert cj.legendre(F, [2.0]).is_pos_inf
    assert cj.legendre(F, [-1.0001]).is_pos_inf


def test_legendre_exp_quadratic_oracles():
    # stationarity mu * exp(mu^2 / 2) = 1, and a brute-force grid sup
    mu = optimize.brentq(lambda m: m * math.exp(m * m / 2) - 1, 0, 2, xtol=1e-15)
    stationary = mu - math.expm1(mu * mu / 2)
    brute = _brute_sup(lambda m: m - np.expm1(m * m / 2), -10, 10, 1e-5)
    got = float(cj.legendre(corpus.exp_quadratic(), [1.0]))
    assert got == pytest.approx(stationary, abs=1e-10)
    assert got == pytest.approx(brute, abs=1e-9)
    assert got == pytest.approx(0.425225, abs=1e-6)  # frozen


def test_legendre_2d_quadratic_closed_form():
    Q = corpus.QUAD2_MATRIX
    a = np.array([1.0, 1.0])
    assert float(cj.legendre(corpus.quadratic_2d(), a)) == pytest.approx(0.5 * a @ np.linalg.solve(Q, a), abs=1e-10)


def test_legendre_point_domain():
    # F = 0 at 1, +inf elsewhere: F*(a) = a, found only because the lattice hits 1 exactly
    F = ExtFunction(1, lambda u: np.where(u[:, 0] == 1.0, 0.0, np.inf))
    assert float(cj.legendre(F, [0.7])) == pytest.approx(0.7, abs=1e-15)


def test_legendre_of_improper_function_is_minus_inf():
    F = ExtFunction(1, lambda u: np.full(len(u), np.inf))
    assert cj.legendre(F, [0.0]).is_neg_inf


def test_box_exhaustion_raises_or_flags():
    # <mu, 1> - F(mu) = 2 sqrt|mu| grows too slowly to certify within a small box
    F = ExtFunction(1, lambda u: u[:, 0] - 2 * np.sqrt(np.abs(u[:, 0])))
    pol = SearchPolicy(max_half_width=64.0)
    with pytest.raises(BoxExhausted):
        cj.legendre_many(F, [[1.0]], pol)
    res = cj.legendre_many(F, [[1.0]], SearchPolicy(max_half_width=64.0, raise_on_exhaust=False))
    assert res.status[0] == cj.BOX_LIMITED
    assert cj.legendre(F, [1.0]).is_pos_inf  # the default box certifies it


def test_growth_certification_not_fooled_by_superlinear_conjugate():
    # F** of exp(u^2/2) - 1 is itself; its conjugate grows slower than linearly
    for u in (2.5, 3.0):
        got = float(cj.biconjugate(corpus.exp_quadratic(), [u]))
        assert got == pytest.approx(math.expm1(u * u / 2), rel=1e-10)


# -- biconjugate -----------------------------------------------------------------

def test_biconjugate_examples():
    assert float(cj.biconjugate(corpus.quadratic(), [0.3])) == pytest.approx(0.045, abs=1e-12)
    assert float(cj.biconjugate(corpus.double_well(), [0.0])) == pytest.approx(0.0, abs=1e-9)


def test_biconjugate_removable_jump_takes_lower_limit():
    F = corpus.removable_jump()
    # directional limit from the right by one-sided refinement
    limit = min(float(F([10.0 ** -j])) for j in range(1, 8))
    got = float(cj.biconjugate(F, [0.0]))
    assert got == pytest.approx(limit, abs=1e-9)
    assert got < float(F([0.0]))


def test_biconjugate_brute_force_double_conjugate():
    F = corpus.double_well()
    mu = np.linspace(-6, 6, 12001)
    al = np.linspace(-8, 8, 1601)
    fstar = np.max(al[:, None] * mu[None, :] - F.values(mu[:, None])[None, :], axis=1)
    for u in (-1.5, -0.4, 0.9, 2.0):
        brute = float(np.max(al * u - fstar))
        assert float(cj.biconjugate(F, [u])) == pytest.approx(brute, abs=1e-4)


# -- inf-convolution -------------------------------------------------------------

def test_inf_convolution_quadratics():
    q = corpus.quadratic()
    got = float(cj.inf_convolution(q, q, [1.0]))
    x = np.linspace(-3, 3, 600001)
    brute = float(np.min(0.5 * x ** 2 + 0.5 * (1 - x) ** 2))
    assert got == pytest.approx(0.25, abs=1e-12)
    assert got == pytest.approx(brute, abs=1e-10)


def test_inf_convolution_identity_element():
    delta0 = ExtFunction(1, lambda u: np.where(u[:, 0] == 0.0, 0.0, np.inf))
    F = corpus.exp_quadratic()
    for u in (-1.0, 0.3, 1.7):
        assert float(cj.inf_convolution(F, delta0, [u])) == pytest.approx(float(F([u])), rel=1e-12)


# -- homogeneous closure -----------------------------------------------------------

def test_homogeneous_closure_of_norm():
    ang = np.linspace(0, 2 * math.pi, 73)[:-1]
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    vals = np.ones(len(dirs))  # the Euclidean norm on the unit circle
    # the closure is the gauge of the inscribed 72-gon
    x = np.array([0.6, -0.8]) * 2
    th = math.atan2(x[1], x[0])
    mid = (math.floor(th / (math.pi / 36)) + 0.5) * math.pi / 36
    gauge = 2.0 * math.cos(th - mid) / math.cos(math.pi / 72)
    assert float(cj.homogeneous_closure(dirs, vals, x)) == pytest.approx(gauge, abs=1e-9)
    assert float(cj.homogeneous_closure(dirs, vals, 3 * dirs[5])) == pytest.approx(3.0, abs=1e-9)


# -- properties ------------------------------------------------------------------

quad_params = st.tuples(st.floats(0.2, 5.0), st.floats(-2.0, 2.0))


@settings(max_examples=30, deadline=None)
@given(p=quad_params, mu=st.floats(-3, 3), alpha=st.floats(-3, 3))
def test_fenchel_young_random_quadratics(p, mu, alpha):
    a, b = p
    F = ExtFunction(1, lambda u: 0.5 * a * u[:, 0] ** 2 + b * u[:, 0])
    fa = float(cj.legendre(F, [alpha]))
    assert fa == pytest.approx((alpha - b) ** 2 / (2 * a), abs=1e-9 * (1 + fa))
    assert float(F([mu])) + fa >= mu * alpha - 1e-9


@settings(max_examples=20, deadline=None)
@given(p=quad_params, u=st.floats(-2, 2))
def test_biconjugate_fixed_point_random_quadratics(p, u):
    a, b = p
    F = ExtFunction(1, lambda x: 0.5 * a * x[:, 0] ** 2 + b * x[:, 0])
    assert float(cj.biconjugate(F, [u])) == pytest.approx(float(F([u])), abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.1, 3.0), s=st.floats(-1.5, 1.5), alpha=st.floats(-4, 4))
def test_legendre_of_shifted_scaled_abs(c, s, alpha):
    # F(u) = c|u - s|: F*(a) = a s on |a| <= c, +inf beyond
    F = ExtFunction(1, lambda u: c * np.abs(u[:, 0] - s))
    got = float(cj.legendre(F, [alpha]))
    if abs(alpha) < c - 1e-6:
        assert got == pytest.approx(alpha * s, abs=1e-9)
    elif abs(alpha) > c + 1e-6:
        assert math.isinf(got) and got > 0


@pytest.mark.parametrize("name", sorted(corpus.CORPUS))
def test_conjugate_convexity_and_fenchel_young_on_corpus(name):
    F = corpus.get(name)
    assert suite.conjugate_convex_lsc(F)[0]
    assert suite.fenchel_young(F)[0]


@pytest.mark.parametrize("name", corpus.CLOSED_CONVEX)
def test_biconjugate_fixed_point_on_corpus(name):
    ok, gap = suite.biconjugate_fixed_point(corpus.get(name))
    assert ok, gap


def test_convolution_hull_and_lower_limit():
    assert suite.convolution_rule()[0]
    assert suite.closed_convex_hull()[0]
    assert suite.lower_limit()[0]


def test_conjugate_function_is_memoized():
    calls = []
    base = corpus.quadratic()
    F = ExtFunction(1, lambda u: (calls.append(len(u)), base.values(u))[1])
    G = cj.conjugate(F)
    G.values(np.array([[0.5], [0.5]]))
    n = len(calls)
    G.values(np.array([[0.5]]))
    assert len(calls) == n


def test_legendre_many_matches_scalar():
    F = corpus.exp_quadratic()
    al = np.array([[-1.0], [0.2], [2.0]])
    many = cj.legendre_many(F, al).values
    assert [float(cj.legendre(F, a)) for a in al] == pytest.approx(list(many), abs=1e-13)
