"""Rate functions of the compound renewal process and their identities.

The constrained supremum defining D_gamma is reduced to a Legendre transform
in mu alone: for fixed mu the constraint A(lam, mu) <= 0 binds at the
largest feasible lam, so D_gamma = legendre(A_gamma).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import conjugate as cj
from .conjugate import BOX_LIMITED, CONVERGED, UNBOUNDED, ExtFunction, SearchPolicy
from .extended import ExtendedValue
from .model import JumpLaw, cumulant, lambda_minus, lambda_plus

FEASIBILITY_SLACK = 1e-10
R_GRID = (1e-4, 1e4)
DEFAULT_POLICY = SearchPolicy()


class OriginWarning(UserWarning):
    """D_Lambda was requested at (theta, alpha) = (0, 0)."""


def _mu(law: JumpLaw, mu) -> np.ndarray:
    return np.asarray(mu, dtype=float).reshape(-1, law.dim)


def _gamma(gamma) -> float:
    return math.inf if gamma is None else float(gamma)


# -- A(mu) -------------------------------------------------------------

def _g(law: JumpLaw, mu: np.ndarray) -> np.ndarray:
    # the part of A(lam, mu) that does not involve tau
    b = np.asarray(law.b)
    s2 = np.asarray(law.sigma) ** 2
    g = law.c0 + mu @ b + 0.5 * (mu * mu) @ s2
    if law.p_terminate > 0:
        g = g + math.log1p(-law.p_terminate)
    return g


def lambda_root(law: JumpLaw, mu) -> np.ndarray:
    """sup{lam : A(lam, mu) <= 0} for each row of ``mu``.

    A(lam, mu) = g(mu) + K(lam + c1 + <mu, a>) with K the log-mgf of tau,
    which increases from -inf to +inf, so the root is explicit.
    """
    mu = _mu(law, mu)
    s = law.tau.inverse_log_mgf(-_g(law, mu))
    return s - law.c1 - mu @ np.asarray(law.a)


def A_values(law: JumpLaw, mu, gamma=None) -> np.ndarray:
    """Vectorized A_gamma(mu) = max(-gamma, A(mu)); gamma=None means uncapped."""
    a = -lambda_root(law, mu)
    g = _gamma(gamma)
    return a if math.isinf(g) else np.maximum(-g, a) + 0.0


def A_of_mu(law: JumpLaw, mu) -> ExtendedValue:
    return ExtendedValue(float(A_values(law, np.atleast_1d(mu))[0]))


def A_gamma(law: JumpLaw, mu, gamma) -> ExtendedValue:
    return ExtendedValue(float(A_values(law, np.atleast_1d(mu), gamma)[0]))


def A_function(law: JumpLaw, gamma=None) -> ExtFunction:
    g = _gamma(gamma)
    name = "A" if math.isinf(g) else f"A_{g:g}"
    return ExtFunction(law.dim, lambda mu: A_values(law, mu, g), None, name)


@dataclass(frozen=True)
class FeasibleSet:
    """{(lam, mu) : lam < gamma, A(lam, mu) <= 0}."""

    law: JumpLaw
    gamma: float = math.inf

    def contains(self, lam, mu) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        mu = _mu(self.law, mu)
        with np.errstate(invalid="ignore"):
            return (lam < self.gamma) & (cumulant(self.law, lam, mu) <= 0)

    def __contains__(self, point) -> bool:
        lam, mu = point
        return bool(self.contains([lam], np.atleast_1d(mu))[0])


# -- D and D_gamma -------------------------------------------------------

@dataclass
class RateEvaluation:
    value: ExtendedValue
    argmax_lambda: float | None
    argmax_mu: np.ndarray | None
    status: str

    def objective(self, alpha) -> float:
        return self.argmax_lambda + float(np.dot(self.argmax_mu, alpha))


def D_many(law: JumpLaw, alphas, gamma=None, policy: SearchPolicy = DEFAULT_POLICY):
    """D_gamma at each row of ``alphas`` as a :class:`conjugate.SupResult`."""
    al = _mu(law, alphas)
    return cj.legendre_many(A_function(law, gamma), al, policy)


def D_values(law: JumpLaw, alphas, gamma=None, policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    return D_many(law, alphas, gamma, policy).values


def D_evaluations(law: JumpLaw, alphas, gamma=None,
                  policy: SearchPolicy = DEFAULT_POLICY) -> list[RateEvaluation]:
    res = D_many(law, alphas, gamma, policy)
    g = _gamma(gamma)
    out = []
    for i in range(len(res.values)):
        if res.status[i] == UNBOUNDED or not np.isfinite(res.values[i]):
            out.append(RateEvaluation(ExtendedValue(res.values[i]), None, None, res.status[i]))
            continue
        mu = res.argmax[i].copy()
        lam = min(g, float(lambda_root(law, mu)[0]))
        out.append(RateEvaluation(ExtendedValue(res.values[i]), lam, mu, res.status[i]))
    return out


def D(law: JumpLaw, alpha, policy: SearchPolicy = DEFAULT_POLICY) -> RateEvaluation:
    return D_evaluations(law, np.atleast_1d(alpha)[None, :], None, policy)[0]


def D_gamma(law: JumpLaw, alpha, gamma, policy: SearchPolicy = DEFAULT_POLICY) -> RateEvaluation:
    return D_evaluations(law, np.atleast_1d(alpha)[None, :], gamma, policy)[0]


def D_theta_values(law: JumpLaw, theta, alphas, gamma=None,
                   policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    """sup over the (capped) feasible set of lam*theta + <mu, alpha>.

    For theta > 0 this is theta * D_gamma(alpha / theta). At theta = 0 it is
    the support function of the mu-projection of the feasible set, which is
    the effective domain of A. For theta < 0 it is +inf because lam can be
    sent to -inf while staying feasible.
    """
    al = _mu(law, alphas)
    th = np.broadcast_to(np.asarray(theta, dtype=float), (len(al),))
    out = np.empty(len(al))
    pos, zero, neg = th > 0, th == 0, th < 0
    out[neg] = np.inf
    if pos.any():
        out[pos] = th[pos] * D_values(law, al[pos] / th[pos, None], gamma, policy)
    if zero.any():
        dom = ExtFunction(law.dim, lambda mu: np.where(np.isfinite(A_values(law, mu)), 0.0, np.inf),
                          None, "dom A")
        out[zero] = cj.legendre_many(dom, al[zero], policy).values
    return out


def D_theta(law: JumpLaw, theta: float, alpha, gamma=None,
            policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    return ExtendedValue(float(D_theta_values(law, theta, np.atleast_1d(alpha)[None, :], gamma, policy)[0]))


# -- D_plus / D_minus ----------------------------------------------------

def normalizer(law: JumpLaw, gamma) -> float:
    """sup{lam < gamma : E(exp(lam*tau + v); tau < inf) <= 1}."""
    return min(_gamma(gamma), float(lambda_root(law, np.zeros((1, law.dim)))[0]))


def D_plus_values(law: JumpLaw, alphas, policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    return D_values(law, alphas, float(lambda_plus(law)), policy) - normalizer(law, float(lambda_minus(law)))


def D_minus_values(law: JumpLaw, alphas, policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    return D_values(law, alphas, float(lambda_minus(law)), policy) - normalizer(law, float(lambda_plus(law)))


def D_plus(law: JumpLaw, alpha, policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    return ExtendedValue(float(D_plus_values(law, np.atleast_1d(alpha)[None, :], policy)[0]))


def D_minus(law: JumpLaw, alpha, policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    return ExtendedValue(float(D_minus_values(law, np.atleast_1d(alpha)[None, :], policy)[0]))


def growth_bound_constant(law: JumpLaw, eps: float) -> float:
    """An upper bound for A on the ball of radius eps/2, so D >= (eps/2)|alpha| - C.

    A is convex, so its max over the enclosing cube sits at a vertex.
    """
    d = law.dim
    corners = np.array(np.meshgrid(*[[-0.5 * eps, 0.5 * eps]] * d, indexing="ij")).reshape(d, -1).T
    return float(np.max(A_values(law, corners)))


# -- infimum over theta (closed and open intervals) ---------------------

def _truncated_sup(law: JumpLaw, thetas: np.ndarray, alphas: np.ndarray, R: float) -> np.ndarray:
    """sup of lam*theta + <mu, alpha> over the feasible set cut to |lam|, |mu_i| <= R."""
    d = law.dim

    def lam_of(mu):
        lam = np.minimum(R, lambda_root(law, mu))
        return np.where(lam >= -R, lam, -np.inf)

    cache = {}

    def shared(L, idx):
        key = L.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = lam_of(L)
        lamL = cache[key]
        with np.errstate(invalid="ignore"):
            lt = np.where(np.isneginf(lamL)[None, :], -np.inf, thetas[idx, None] * lamL[None, :])
        return lt + alphas[idx] @ L.T

    def each(P, idx):
        m, n, _ = P.shape
        lam = lam_of(P.reshape(-1, d)).reshape(m, n)
        with np.errstate(invalid="ignore"):
            lt = np.where(np.isneginf(lam), -np.inf, thetas[idx, None] * lam)
        return lt + np.einsum("mnk,mk->mn", P, alphas[idx])

    pol = SearchPolicy(fixed_half_width=R)
    return cj.sup_search(shared, each, len(alphas), d, pol).values


def _golden_min_theta(h, m: int, a: float, b: float, tol: float = 1e-12) -> np.ndarray:
    """min over theta in [a, b] of convex h(thetas, idx), for m problems at once."""
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    idx = np.arange(m)
    best = np.minimum(h(np.full(m, a), idx), h(np.full(m, b), idx))
    lo, hi = np.full(m, a), np.full(m, b)
    c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
    fc, fd = h(c, idx), h(d, idx)
    while hi[0] - lo[0] > tol:
        left = fc <= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        nc = np.where(left, hi - gr * (hi - lo), d)
        nd = np.where(left, c, lo + gr * (hi - lo))
        probe = np.where(left, nc, nd)
        fp = h(probe, idx)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = nc, nd
        best = np.minimum(best, np.minimum(fc, fd))
    return best


def _theta_inf_values(law: JumpLaw, alphas, gamma: float, a: float, b: float,
                      policy: SearchPolicy = DEFAULT_POLICY) -> tuple[np.ndarray, np.ndarray]:
    """inf over theta in [a, b] of D(theta, alpha) + gamma*(1 - theta).

    D(theta, .) is replaced by its truncation to a box of half-width R, which
    is finite and convex in theta; the min over theta and the sup over the
    box then commute, and R is doubled until the value settles or grows
    without bound (the same certification rule as the conjugacy engine).
    """
    al = _mu(law, alphas)
    m = len(al)
    value = np.full(m, np.nan)
    status = np.full(m, CONVERGED, dtype=object)
    prev = np.full(m, np.nan)
    prev_inc = np.full(m, np.nan)
    cnt = np.zeros(m, dtype=int)
    cnt_lin = np.zeros(m, dtype=int)
    active = np.arange(m)
    R = 8.0
    while active.size:
        sub = al[active]

        def h(th, idx):
            return _truncated_sup(law, th, sub[idx], R) + gamma * (1.0 - th)

        v = _golden_min_theta(h, active.size, a, b)
        inc = v - prev[active]
        first = np.isnan(prev[active])
        grow = ~first & (inc > policy.value_tol * (1.0 + np.abs(v)))
        pinc = prev_inc[active]
        nondecr = np.isnan(pinc) | (inc >= pinc * (1.0 - 1e-9))
        linear = np.isnan(pinc) | (inc >= pinc * policy.linear_ratio)
        c1 = np.where(grow & nondecr, cnt[active] + 1, np.where(grow, 1, 0))
        c2 = np.where(grow & linear, cnt_lin[active] + 1, np.where(grow, 1, 0))
        cnt[active], cnt_lin[active] = c1, c2
        value[active] = v
        unbounded = (c2 >= policy.growth_doublings) | (c1 >= policy.slow_growth_doublings)
        done = (~first & ~grow) | unbounded
        value[active[unbounded]] = np.inf
        status[active[unbounded]] = UNBOUNDED
        prev[active] = v
        prev_inc[active] = np.where(first, np.nan, inc)
        active = active[~done]
        R *= 2.0
        if active.size and R > policy.max_half_width:
            if policy.raise_on_exhaust:
                raise cj.BoxExhausted(f"truncation radius exceeded {policy.max_half_width:g}")
            status[active] = BOX_LIMITED
            break
    return value, status


def D_gamma_via_theta_values(law: JumpLaw, alphas, gamma: float,
                             policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    """inf over theta in [0, 1] of D(theta, alpha) + gamma*(1 - theta)."""
    if not math.isfinite(gamma):
        raise ValueError("gamma must be finite")
    return _theta_inf_values(law, alphas, float(gamma), 0.0, 1.0, policy)[0]


def D_gamma_via_theta(law: JumpLaw, alpha, gamma: float,
                      policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    return ExtendedValue(float(D_gamma_via_theta_values(law, np.atleast_1d(alpha)[None, :], gamma, policy)[0]))


def D_hat_gamma_values(law: JumpLaw, alphas, gamma: float, eta: float = 1e-6,
                       policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    """The open-interval variant: theta ranges over [eta, 1 - eta]."""
    if not math.isfinite(gamma):
        raise ValueError("gamma must be finite")
    return _theta_inf_values(law, alphas, float(gamma), eta, 1.0 - eta, policy)[0]


# -- Lambda and D_Lambda -------------------------------------------------

def cumulant_function(law: JumpLaw) -> ExtFunction:
    """A(lam, mu) as a function on R^(d+1), lam first."""
    return ExtFunction(law.dim + 1, lambda x: cumulant(law, x[:, 0], x[:, 1:]), None, "A(lam,mu)")


def Lambda_values(law: JumpLaw, points, policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Legendre transform of A(lam, mu) at rows (theta, alpha...)."""
    pts = np.asarray(points, dtype=float).reshape(-1, law.dim + 1)
    return cj.legendre_many(cumulant_function(law), pts, policy).values


def Lambda(law: JumpLaw, theta: float, alpha, policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    pt = np.concatenate([[theta], np.atleast_1d(alpha)])
    return ExtendedValue(float(Lambda_values(law, pt, policy)[0]))


def D_Lambda_values(law: JumpLaw, points, policy: SearchPolicy = DEFAULT_POLICY,
                    r_points: int = 81) -> np.ndarray:
    """inf over r > 0 of r * Lambda(theta/r, alpha/r) at rows (theta, alpha...).

    Rows with theta > 0 are rescaled to theta = 1 first. r is scanned on a
    log grid over [1e-4, 1e4] and refined by golden section in log r. The origin gets the literal infimum, with a warning.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, law.dim + 1)
    out = np.empty(len(pts))
    origin = np.all(pts == 0, axis=1)
    if origin.any():
        warnings.warn("D_Lambda at the origin is a convention: inf over r of r*Lambda(0, 0)",
                      OriginWarning, stacklevel=2)
        lam0 = Lambda_values(law, np.zeros(law.dim + 1), policy)[0]
        out[origin] = np.inf if lam0 == np.inf else (0.0 if lam0 >= 0 else -np.inf)
    q = pts[~origin]
    if len(q) == 0:
        return out
    # positive homogeneity: move rows with theta > 0 onto theta = 1, where the
    # r grid (which contains r = 1) resolves laws whose Lambda is finite at a
    # single point
    scale = np.where(q[:, 0] > 0, q[:, 0], 1.0)
    q = q / scale[:, None]
    logr = np.linspace(math.log10(R_GRID[0]), math.log10(R_GRID[1]), r_points)
    r = 10.0 ** logr
    n = len(q)

    def f(lr, rows):
        rr = 10.0 ** lr
        vals = Lambda_values(law, q[rows] / rr[:, None], policy)
        with np.errstate(invalid="ignore"):
            return np.where(np.isposinf(vals), np.inf, rr * vals)

    grid = f(np.tile(logr, n), np.repeat(np.arange(n), r_points)).reshape(n, r_points)
    j = np.argmin(grid, axis=1)
    best = grid[np.arange(n), j]
    fin = np.flatnonzero(np.isfinite(best))
    if fin.size:
        step = logr[1] - logr[0]
        a = np.maximum(logr[j[fin]] - step, logr[0])
        b = np.minimum(logr[j[fin]] + step, logr[-1])
        gr = (math.sqrt(5.0) - 1.0) / 2.0
        c, d = b - gr * (b - a), a + gr * (b - a)
        fc, fd = f(c, fin), f(d, fin)
        for _ in range(60):
            left = fc <= fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            nc = np.where(left, b - gr * (b - a), d)
            nd = np.where(left, c, a + gr * (b - a))
            fp = f(np.where(left, nc, nd), fin)
            fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
            c, d = nc, nd
            best[fin] = np.minimum(best[fin], np.minimum(fc, fd))
    out[~origin] = scale * best
    return out


def D_Lambda(law: JumpLaw, theta: float, alpha, policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    pt = np.concatenate([[theta], np.atleast_1d(alpha)])
    return ExtendedValue(float(D_Lambda_values(law, pt, policy)[0]))


# -- level sets and infima over regions ---------------------------------

def drift_point(law: JumpLaw, gamma=None, h: float = 1e-6) -> np.ndarray:
    """A minimizer of D_gamma: the (averaged) gradient of A_gamma at 0."""
    d = law.dim
    E = np.eye(d) * h
    fwd = A_values(law, E, gamma)
    bwd = A_values(law, -E, gamma)
    return (fwd - bwd) / (2 * h)


def level_box(law: JumpLaw, gamma=None, level: float = 50.0,
              policy: SearchPolicy = DEFAULT_POLICY) -> tuple[np.ndarray, np.ndarray]:
    """Axis extents of {D_gamma <= level} along coordinate lines through the drift point."""
    d = law.dim
    c = drift_point(law, gamma)
    dirs = np.concatenate([np.eye(d), -np.eye(d)])
    lo_t = np.zeros(2 * d)
    hi_t = np.full(2 * d, 0.125)
    for _ in range(40):
        vals = D_values(law, c + hi_t[:, None] * dirs, gamma, policy)
        small = vals <= level
        if not small.any():
            break
        lo_t = np.where(small, hi_t, lo_t)
        hi_t = np.where(small, 2 * hi_t, hi_t)
    for _ in range(50):
        mid = 0.5 * (lo_t + hi_t)
        small = D_values(law, c + mid[:, None] * dirs, gamma, policy) <= level
        lo_t = np.where(small, mid, lo_t)
        hi_t = np.where(small, hi_t, mid)
    return c - lo_t[d:], c + lo_t[:d]


def region_inf(law: JumpLaw, region, gamma=None, level: float = 50.0,
               policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    """inf of D_gamma over ``region`` (closure as carried by the region).

    The search is confined to the region's bounding box intersected with
    the box where D_gamma <= level, so infima above ``level`` read as +inf.
    """
    d = law.dim
    blo, bhi = region.bounding_box()
    llo, lhi = level_box(law, gamma, level, policy)
    lo, hi = np.maximum(blo, llo), np.minimum(bhi, lhi)
    if np.any(lo > hi):
        return ExtendedValue(math.inf)

    def obj(P):
        flat = P.reshape(-1, d)
        inside = region.contains(flat)
        out = np.full(len(flat), -np.inf)
        if inside.any():
            out[inside] = -D_values(law, flat[inside], gamma, policy)
        return out

    res = cj.sup_search(lambda L, idx: obj(L)[None, :],
                        lambda P, idx: obj(P).reshape(P.shape[:2]),
                        1, d, SearchPolicy(fixed_half_width=policy.max_half_width), lo, hi)
    return ExtendedValue(-float(res.values[0]))
