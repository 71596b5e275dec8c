import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from crp_ldp import rate
from crp_ldp.laws import exponential_clock_law, exponential_gaussian_law, pinning_law, unit_step_law
from crp_ldp.model import JumpLaw, TauLaw, cumulant, lambda_plus
from crp_ldp.regions import CLOSED, OPEN, Box

LN2 = math.log(2.0)


def brentq_A(law, mu):
    """Oracle for A(mu): minus the root in lam of the cumulant, by bracketing."""
    f = lambda lam: float(cumulant(law, np.array([lam]), np.array([[mu]]))[0])
    hi = 0.0
    while math.isfinite(f(hi)) and f(hi) < 0:
        hi = 2 * hi + 1
    lo = -1.0
    while f(lo) > 0:
        lo *= 2
    if not math.isfinite(f(hi)):  # shrink onto the domain edge
        a, b = lo, hi
        for _ in range(200):
            m = 0.5 * (a + b)
            a, b = (m, b) if math.isfinite(f(m)) else (a, m)
        hi = a
        if f(hi) < 0:
            return -hi
    return -optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)


def brute_D(law, alpha, gamma=None, mu_lo=-8.0, mu_hi=8.0, n=160001):
    mu = np.linspace(mu_lo, mu_hi, n)
    A = rate.A_values(law, mu[:, None], gamma)
    return float(np.max(mu * alpha - A))


# -- A(mu) --------------------------------------------------------------------

def test_A_examples(m1, m3):
    assert float(rate.A_of_mu(m1, [0.0])) == pytest.approx(-LN2, abs=1e-15)
    assert float(rate.A_of_mu(m3, [0.0])) == 0.0
    assert float(rate.A_of_mu(m3, [1.0])) == pytest.approx(math.exp(0.5) - 1, abs=1e-15)


@pytest.mark.parametrize("make", [unit_step_law, exponential_gaussian_law, pinning_law,
                                  lambda: exponential_clock_law(-2.0)])
@pytest.mark.parametrize("mu", [-1.3, -0.2, 0.0, 0.4, 1.1])
def test_A_matches_brentq(make, mu):
    law = make()
    assert float(rate.A_of_mu(law, [mu])) == pytest.approx(brentq_A(law, mu), abs=1e-10)


def test_A_gamma_examples(m1, m3):
    assert float(rate.A_gamma(m1, [0.0], 0.0)) == 0.0
    assert float(rate.A_gamma(m1, [0.3], math.inf)) == float(rate.A_of_mu(m1, [0.3]))
    assert float(rate.A_gamma(m3, [0.0], 0.0)) == float(rate.A_of_mu(m3, [0.0]))


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(-3, 3), th=st.floats(0.01, 0.99))
def test_A_convex(x, y, th):
    for law in (unit_step_law(), exponential_gaussian_law(), pinning_law()):
        ax, ay = float(rate.A_of_mu(law, [x])), float(rate.A_of_mu(law, [y]))
        mid = float(rate.A_of_mu(law, [th * x + (1 - th) * y]))
        assert mid <= th * ax + (1 - th) * ay + 1e-9


def test_A_lower_semicontinuous_on_grid(m4):
    mu = np.linspace(-2, 2, 401)
    a = rate.A_values(m4, mu[:, None])
    for h in (1e-6, 1e-8):
        assert np.all(rate.A_values(m4, (mu + h)[:, None]) >= a - 1e-5)
        assert np.all(rate.A_values(m4, (mu - h)[:, None]) >= a - 1e-5)


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(-4, 4), mu=st.floats(-3, 3), s=st.floats(0, 1))
def test_feasible_set_convex(lam, mu, s):
    fs = rate.FeasibleSet(pinning_law())
    r = rate.lambda_root(fs.law, [mu])[0]
    a, b = (r - 1.0, mu), (min(lam, rate.lambda_root(fs.law, [0.0])[0]), 0.0)
    assert a in fs and b in fs
    mid = (s * a[0] + (1 - s) * b[0], s * a[1] + (1 - s) * b[1])
    assert mid in fs


def test_feasible_set_cap(m3):
    fs = rate.FeasibleSet(m3, gamma=-1.0)
    assert (-1.5, 0.0) in fs and (-1.0, 0.0) not in fs


# -- D and D_gamma ---------------------------------------------------------------

def test_D_examples(m1, m3):
    ev = rate.D(m3, [0.0])
    assert float(ev.value) == pytest.approx(0.0, abs=1e-12)
    assert ev.argmax_mu[0] == pytest.approx(0.0, abs=1e-6)
    assert float(rate.D_gamma(m1, [0.5], 0.0).value) == pytest.approx(0.5 * LN2, abs=1e-10)
    assert rate.D_gamma(m1, [1.5], 0.0).value.is_pos_inf
    assert float(rate.D(m1, [1.0]).value) == pytest.approx(LN2, abs=1e-10)


@pytest.mark.parametrize("p", [0.25, 0.5, 0.75])
def test_terminating_closed_form(p):
    law = unit_step_law(p)
    al = np.linspace(0, 1, 21)[:, None]
    got = rate.D_values(law, al, 0.0)
    assert np.max(np.abs(got - al[:, 0] * -math.log1p(-p))) <= 1e-6
    assert np.all(np.isinf(rate.D_values(law, np.array([[-0.01], [1.01]]), 0.0)))


@pytest.mark.parametrize("make,gamma,alphas", [
    (exponential_gaussian_law, None, [-1.0, 0.3, 1.0, 2.0]),
    (lambda: exponential_clock_law(-2.0), None, [-1.0, 0.0, 0.5]),
])
def test_D_matches_brute_force(make, gamma, alphas):
    law = make()
    for a in alphas:
        got = float(rate.D_gamma(law, [a], gamma).value)
        assert got == pytest.approx(brute_D(law, a, gamma), abs=2e-8)


def test_pinning_capped_closed_form(m4):
    # A(mu) = mu - root, so D_0(alpha) = alpha * root on [0, 1] with root = -A(0)
    root = -brentq_A(m4, 0.0)
    al = np.linspace(0, 1, 11)
    assert rate.D_values(m4, al[:, None], 0.0) == pytest.approx(al * root, abs=1e-10)


def test_pinning_uncapped_D_lives_on_one_point(m4):
    # A(mu) is affine with slope 1 for this law
    assert math.isfinite(float(rate.D(m4, [1.0]).value))
    assert rate.D(m4, [0.9]).value.is_pos_inf and rate.D(m4, [1.1]).value.is_pos_inf


def test_D_frozen_values(m3):
    # stationarity mu exp(mu^2 / 2) = 1 gives D(1) for this law
    mu = optimize.brentq(lambda m: m * math.exp(m * m / 2) - 1, 0, 2, xtol=1e-15)
    assert float(rate.D(m3, [1.0]).value) == pytest.approx(mu - math.expm1(mu * mu / 2), abs=1e-10)
    assert float(rate.D(m3, [1.0]).value) == pytest.approx(0.425225, abs=1e-6)
    assert float(rate.D(exponential_clock_law(-2.0), [0.0]).value) == pytest.approx(0.5 - LN2 / 2, abs=1e-12)


def test_cramer_reduction():
    law = JumpLaw(dim=1, p_terminate=0.0, tau=TauLaw("det", 1.0), b=(1.0,), sigma=(1.0,))
    al = np.linspace(-2, 4, 21)
    assert np.max(np.abs(rate.D_values(law, al[:, None]) - (al - 1) ** 2 / 2)) <= 1e-6


def test_maximizer_is_feasible_and_attains(m4):
    for a in (0.3, 0.8):
        ev = rate.D_gamma(m4, [a], 0.0)
        assert (ev.argmax_lambda - 1e-12, ev.argmax_mu) in rate.FeasibleSet(m4, gamma=1e-15)
        assert ev.objective([a]) == pytest.approx(float(ev.value), abs=1e-8)


def test_cap_equivalence(m3):
    al = np.linspace(-2, 2, 21)[:, None]
    d0 = float(rate.D(m3, [0.0]).value)
    assert np.max(np.abs(rate.D_values(m3, al, d0 + 1e-6) - rate.D_values(m3, al))) <= 1e-6


def test_cap_binds_below_D0():
    law = exponential_clock_law(-2.0)
    d0 = float(rate.D(law, [0.0]).value)
    g = d0 - 1e-3
    assert float(rate.D_gamma(law, [0.0], g).value) == pytest.approx(g, abs=1e-8)
    assert float(rate.D_gamma(law, [0.0], g).value) < d0


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-2, 3), y=st.floats(-2, 3), s=st.floats(0.05, 0.95))
def test_D_convex(x, y, s):
    law = exponential_gaussian_law()
    v = rate.D_values(law, np.array([[x], [y], [s * x + (1 - s) * y]]))
    assert v[2] <= s * v[0] + (1 - s) * v[1] + 1e-9


@pytest.mark.parametrize("make", [exponential_gaussian_law, pinning_law, unit_step_law])
def test_growth_bound(make):
    law = make()
    from crp_ldp.model import check_cstar
    eps = check_cstar(law).eps_c
    C = rate.growth_bound_constant(law, eps)
    al = np.concatenate([-np.logspace(-2, 3, 30), np.logspace(-2, 3, 30)])[:, None]
    D = rate.D_values(law, al)
    assert np.all(D >= eps / 2 * np.abs(al[:, 0]) - C - 1e-9)


def test_duality(m3, m4):
    mu = np.linspace(-2, 2, 41)[:, None]
    for law in (m3, m4):
        from crp_ldp import conjugate as cj
        Dfun = cj.ExtFunction(1, lambda a: rate.D_values(law, a))
        back = cj.legendre_many(Dfun, mu).values
        assert np.max(np.abs(back - rate.A_values(law, mu))) <= 1e-6


# -- theta routes ------------------------------------------------------------------

def test_D_theta_examples(m1, m3):
    assert float(rate.D_theta(m1, 0.5, [0.25], gamma=0.0)) == pytest.approx(0.25 * LN2, abs=1e-10)
    assert float(rate.D_theta(m3, 1.0, [0.7])) == float(rate.D(m3, [0.7]).value)
    assert float(rate.D_theta(m3, 0.0, [0.0])) == 0.0
    assert rate.D_theta(m3, -0.5, [0.0]).is_pos_inf


@pytest.mark.parametrize("theta", [0.25, 0.5, 1.0, 2.0])
def test_homogeneity(m3, theta):
    al = np.linspace(-2, 2, 9)[:, None]
    got = rate.D_theta_values(m3, theta, al)
    assert np.max(np.abs(got - theta * rate.D_values(m3, al / theta))) <= 1e-12


def test_via_theta_examples(m1, m3):
    assert float(rate.D_gamma_via_theta(m1, [0.5], 0.0)) == pytest.approx(0.5 * LN2, abs=1e-8)
    assert float(rate.D_gamma_via_theta(m3, [0.0], 0.0)) == pytest.approx(0.0, abs=1e-8)
    # gamma >= D(0): the route returns D itself
    assert float(rate.D_gamma_via_theta(m3, [1.0], 0.5)) == pytest.approx(float(rate.D(m3, [1.0]).value), abs=1e-8)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_route_equivalence(m3, gamma):
    al = np.linspace(-2, 2, 9)[:, None]
    assert np.max(np.abs(rate.D_gamma_via_theta_values(m3, al, gamma) - rate.D_values(m3, al, gamma))) <= 1e-6


def test_D_hat_open_interval_limit(m3):
    # inf over shrinking balls of D_hat_gamma approaches D_gamma
    for a in (0.5, 1.5):
        ref = float(rate.D_gamma(m3, [a], 0.2).value)
        vals = []
        for eps in (1e-1, 1e-2, 1e-3):
            pts = a + eps * np.linspace(-1, 1, 23)[1:-1, None]
            vals.append(float(np.min(rate.D_hat_gamma_values(m3, pts, 0.2))))
        assert abs(vals[-1] - ref) <= 1e-3 * 2
        assert abs(vals[-1] - ref) <= abs(vals[0] - ref) + 1e-12


def test_via_theta_rejects_infinite_gamma(m3):
    with pytest.raises(ValueError):
        rate.D_gamma_via_theta(m3, [0.0], math.inf)


# -- D_plus / D_minus ---------------------------------------------------------------

def test_D_plus_example(m1):
    assert float(rate.D_plus(m1, [0.5])) == pytest.approx(0.5 * LN2, abs=1e-10)
    assert float(rate.D_minus(m1, [0.5])) == pytest.approx(0.5 * LN2, abs=1e-10)


def test_D_plus_minimum_zero(m3, m4):
    for law in (m3, m4):
        al = np.linspace(-1, 3, 81)[:, None]
        assert np.min(rate.D_plus_values(law, al)) == pytest.approx(0.0, abs=1e-3)
        assert np.min(rate.D_plus_values(law, al)) >= -1e-9


# -- Lambda and D_Lambda ---------------------------------------------------------------

def test_Lambda_examples(m1, m3):
    assert float(rate.Lambda(m3, 1.0, [0.0])) == pytest.approx(0.0, abs=1e-9)
    assert float(rate.Lambda(m1, 1.0, [1.0])) == pytest.approx(LN2, abs=1e-9)


@pytest.mark.parametrize("theta,alpha", [(0.5, 0.5), (2.0, -1.0), (1.0, 1.5)])
def test_Lambda_closed_form_m3(m3, theta, alpha):
    # separable: sup_lam {lam theta + ln(1 - lam)} + alpha^2 / 2
    ref = theta - 1 - math.log(theta) + alpha ** 2 / 2
    assert float(rate.Lambda(m3, theta, [alpha])) == pytest.approx(ref, abs=1e-8)


def test_D_Lambda_examples(m3):
    assert float(rate.D_Lambda(m3, 1.0, [0.0])) == pytest.approx(0.0, abs=1e-8)
    assert float(rate.D_Lambda(m3, 1.0, [1.0])) == pytest.approx(float(rate.D(m3, [1.0]).value), abs=1e-6)


@pytest.mark.parametrize("u", [0.5, 2.0])
def test_D_Lambda_homogeneous(m3, u):
    pts = np.array([[1.0, 0.5], [0.5, -0.3], [2.0, 1.0]])
    assert rate.D_Lambda_values(m3, u * pts) == pytest.approx(u * rate.D_Lambda_values(m3, pts), abs=1e-8)


def test_D_Lambda_origin_warns(m3):
    with pytest.warns(rate.OriginWarning):
        rate.D_Lambda(m3, 0.0, [0.0])


# -- regions ----------------------------------------------------------------------------

def test_region_inf(m1):
    box = Box((0.45,), (0.55,), CLOSED)
    assert float(rate.region_inf(m1, box, 0.0)) == pytest.approx(0.45 * LN2, abs=1e-9)
    assert float(rate.region_inf(m1, box.with_closure(OPEN), 0.0)) == pytest.approx(0.45 * LN2, abs=1e-9)
    assert rate.region_inf(m1, Box((2.0,), (3.0,)), 0.0).is_pos_inf


def test_level_box_contains_drift(m3):
    lo, hi = rate.level_box(m3, None, level=2.0)
    assert lo[0] < 0 < hi[0]
    assert float(rate.D(m3, hi).value) == pytest.approx(2.0, abs=1e-6)
