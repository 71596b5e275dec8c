"""The battery of rate-function identities, run against one jump law.

Each check compares two independently computed quantities and records
expected value, observed value, tolerance and verdict.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import conjugate as cj
from . import rate
from .model import JumpLaw, check_cstar, cumulant, lambda_plus


@dataclass
class Check:
    name: str
    expected: float | str
    observed: float | str
    tolerance: float
    passed: bool
    seconds: float = 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        for k in ("expected", "observed"):
            v = out[k]
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = str(v)
        return out


def max_gap(a, b) -> float:
    """Max |a - b| where infinities must coincide exactly."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    inf_a, inf_b = np.isinf(a), np.isinf(b)
    if np.any(inf_a != inf_b) or np.any(a[inf_a] != b[inf_b]):
        return math.inf
    fin = ~inf_a
    return float(np.max(np.abs(a[fin] - b[fin]))) if fin.any() else 0.0


def alpha_grid(law: JumpLaw, gamma=None, n: int = 41, widen: float = 0.1,
               level: float = 50.0) -> np.ndarray:
    """n points per axis over the box where D_gamma <= level, widened a little."""
    lo, hi = rate.level_box(law, gamma, level)
    # the box ends carry ~1e-9 noise from flat objectives; round it away
    lo, hi = np.round(lo, 6) + 0.0, np.round(hi, 6) + 0.0
    pad = widen * np.maximum(hi - lo, 1.0)
    axes = [np.linspace(l - p, h + p, n) for l, h, p in zip(lo, hi, pad)]
    mesh = np.meshgrid(*axes, indexing="ij")
    # snapped so that round values (domain endpoints, say) are hit exactly
    return np.round(np.stack([m.ravel() for m in mesh], axis=1), 12)


def ball_points(center, eps: float, n: int = 21) -> np.ndarray:
    """Points of the open ball (center)_eps: a line in d = 1, a disc grid otherwise."""
    c = np.atleast_1d(np.asarray(center, float))
    s = np.linspace(-1.0, 1.0, n)[1:-1] * eps
    if len(c) == 1:
        return c + s[:, None]
    mesh = np.meshgrid(*[s] * len(c), indexing="ij")
    off = np.stack([m.ravel() for m in mesh], axis=1)
    off = off[np.linalg.norm(off, axis=1) < eps]
    return c + off


def ball_inf(f_many, center, eps: float, n: int = 21) -> float:
    return float(np.min(f_many(ball_points(center, eps, n))))


def theta_direct(law: JumpLaw, theta: float, alphas) -> np.ndarray:
    """D(theta, alpha) as a truncated constrained sup, independent of legendre(A)."""
    return rate._theta_inf_values(law, alphas, 0.0, theta, theta)[0]


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# -- individual checks ----------------------------------------------------

def check_duality(law, gamma=None, n: int = 41, tol: float = 1e-6, mu_range: float = 2.0) -> Check:
    mus = np.linspace(-mu_range, mu_range, n)[:, None] if law.dim == 1 else \
        np.random.default_rng(0).uniform(-mu_range, mu_range, (n, law.dim))

    def run():
        Dfun = cj.ExtFunction(law.dim, lambda a: rate.D_values(law, a, gamma), None, "D")
        return cj.legendre_many(Dfun, mus).values

    got, sec = _timed(run)
    gap = max_gap(got, rate.A_values(law, mus, gamma))
    label = "duality A = D*" if gamma is None else f"duality A_gamma = D_gamma* (gamma={gamma:g})"
    return Check(label, 0.0, gap, tol, gap <= tol, sec)


def check_cap_threshold(law, alphas, tol: float = 1e-6) -> list[Check]:
    d0 = float(rate.D(law, np.zeros(law.dim)).value)
    out = []
    if math.isfinite(d0):
        g = d0 + 1e-3
        (a, b), sec = _timed(lambda: (rate.D_values(law, alphas, g), rate.D_values(law, alphas)))
        gap = max_gap(a, b)
        out.append(Check("cap inactive for gamma = D(0) + 1e-3", 0.0, gap, tol, gap <= tol, sec))
    if d0 > 0:
        g = d0 - 1e-3 if math.isfinite(d0) else 1.0
        v, sec = _timed(lambda: float(rate.D_gamma(law, np.zeros(law.dim), g).value))
        out.append(Check("cap binds: D_gamma(0) = gamma below D(0)", g, v, 1e-8, abs(v - g) <= 1e-8, sec))
    return out


def check_route(law, alphas, gamma: float, tol: float = 1e-6) -> Check:
    (a, b), sec = _timed(lambda: (rate.D_gamma_via_theta_values(law, alphas, gamma),
                                  rate.D_values(law, alphas, gamma)))
    gap = max_gap(a, b)
    return Check(f"inf over theta route = D_gamma (gamma={gamma:g})", 0.0, gap, tol, gap <= tol, sec)


def check_reduction(law, alphas, gamma=None, tol: float = 1e-8) -> Check:
    """Reported maximizers reproduce the value and are feasible."""
    def run():
        worst = 0.0
        for a, ev in zip(alphas, rate.D_evaluations(law, alphas, gamma)):
            if ev.status != cj.CONVERGED or not math.isfinite(ev.value):
                continue
            worst = max(worst, abs(ev.objective(a) - float(ev.value)))
            slack = float(cumulant(law, np.array([ev.argmax_lambda]), ev.argmax_mu[None, :])[0])
            if slack > rate.FEASIBILITY_SLACK:
                return math.inf
        return worst

    gap, sec = _timed(run)
    return Check("maximizers reproduce D and are feasible", 0.0, gap, tol, gap <= tol, sec)


def check_homogeneity(law, alphas, tol: float = 1e-6) -> Check:
    def run():
        worst = 0.0
        for th in (0.25, 0.5, 1.0, 2.0):
            worst = max(worst, max_gap(theta_direct(law, th, alphas),
                                       rate.D_theta_values(law, th, alphas)))
        return worst

    gap, sec = _timed(run)
    return Check("D(theta, alpha) = theta D(alpha/theta)", 0.0, gap, tol, gap <= tol, sec)


def check_growth(law, tol: float = 1e-9) -> Check:
    w = check_cstar(law)
    C = rate.growth_bound_constant(law, w.eps_c)
    r = np.concatenate([-np.logspace(-2, 3, 26), [0.0], np.logspace(-2, 3, 26)])
    al = r[:, None] * np.ones((1, law.dim)) / math.sqrt(law.dim)

    def run():
        dv = rate.D_values(law, al)
        bound = 0.5 * w.eps_c * np.abs(r) - C
        return float(np.min(dv - bound))

    margin, sec = _timed(run)
    return Check("growth bound D >= (eps/2)|alpha| - C", ">= 0", margin, tol, margin >= -tol, sec)


def check_convexity(law, alphas, tol: float = 1e-9) -> Check:
    def run():
        rng = np.random.default_rng(1)
        i, j = rng.integers(0, len(alphas), (2, 60))
        x, y = alphas[i], alphas[j]
        f = lambda pts: rate.D_values(law, pts)  # noqa: E731
        fx, fy, fm = f(x), f(y), f(0.5 * (x + y))
        ok = np.isfinite(fx) & np.isfinite(fy)
        viol = fm[ok] - 0.5 * (fx[ok] + fy[ok])
        ax, ay = rate.A_values(law, x), rate.A_values(law, y)
        am = rate.A_values(law, 0.5 * (x + y))
        return max(float(np.max(viol, initial=-np.inf)), float(np.max(am - 0.5 * (ax + ay))))

    worst, sec = _timed(run)
    return Check("midpoint convexity of A and D", "<= 0", worst, tol, worst <= tol, sec)


def check_lambda_ball(law, alphas, eps: float = 1e-3, lip_h: float = 1e-4) -> Check:
    """inf of D_Lambda(1, .) over (alpha)_eps against D(alpha)."""
    def run():
        worst = 0.0
        ok = True
        for a in alphas:
            got = ball_inf(lambda p: rate.D_Lambda_values(law, np.hstack([np.ones((len(p), 1)), p])), a, eps)
            ref = float(rate.D(law, a).value)
            if math.isinf(ref) or math.isinf(got):
                ok &= got == ref
                continue
            # local Lipschitz bound from one-sided differences of D
            nb = rate.D_values(law, np.stack([a - lip_h, a + lip_h]))
            lip = float(np.max(np.abs(nb - ref))) / lip_h if np.all(np.isfinite(nb)) else 0.0
            tol = eps * (1.0 + lip)
            worst = max(worst, abs(got - ref) / tol)
        return worst if ok else math.inf

    ratio, sec = _timed(run)
    return Check("inf over (alpha)_eps of D_Lambda(1, .) = D(alpha)", "ratio <= 1", ratio, 1.0,
                 ratio <= 1.0, sec)


def check_lambda_biconjugate(law, points, n_dirs: int = 181, tol: float = 1e-4) -> Check:
    """Closed convex hull of D_Lambda, from its values on rays, against D(theta, alpha)."""
    if law.dim != 1:
        return Check("biconjugate of D_Lambda = D(theta, alpha)", "n/a (d > 1)", "skipped", tol, True)

    def run():
        ang = np.linspace(-math.pi / 2, math.pi / 2, n_dirs)[1:-1]
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        pts = np.asarray(points, float)
        dirs = np.vstack([dirs, pts / np.linalg.norm(pts, axis=1, keepdims=True)])
        vals = rate.D_Lambda_values(law, dirs)
        worst = 0.0
        for p in pts:
            got = float(cj.homogeneous_closure(dirs, vals, p))
            ref = float(rate.D_theta_values(law, p[0], p[1:][None, :])[0])
            worst = max(worst, max_gap([got], [ref]))
        return worst

    gap, sec = _timed(run)
    return Check("biconjugate of D_Lambda = D(theta, alpha)", 0.0, gap, tol, gap <= tol, sec)


def check_open_interval(law, alphas, gamma: float, eps: float = 1e-3) -> Check:
    """inf of D_hat_gamma over (alpha)_eps against D_gamma(alpha)."""
    def run():
        worst = 0.0
        for a in alphas:
            got = ball_inf(lambda p: rate.D_hat_gamma_values(law, p, gamma), a, eps)
            ref = float(rate.D_gamma(law, a, gamma).value)
            if math.isinf(ref) or math.isinf(got):
                if got != ref:
                    return math.inf
                continue
            nb = rate.D_values(law, np.stack([a - eps, a + eps]), gamma)
            lip = float(np.max(np.abs(nb - ref))) / eps if np.all(np.isfinite(nb)) else 0.0
            worst = max(worst, abs(got - ref) / (eps * (1.0 + lip)))
        return worst

    ratio, sec = _timed(run)
    return Check(f"inf over (alpha)_eps of D_hat_gamma = D_gamma (gamma={gamma:g})", "ratio <= 1",
                 ratio, 1.0, ratio <= 1.0, sec)


# -- the battery ----------------------------------------------------------

def run_identities(law: JumpLaw, tol: float = 1e-6, quick: bool = False) -> list[Check]:
    lp = float(lambda_plus(law))
    cap = lp if math.isfinite(lp) else None
    grid = alpha_grid(law, cap, n=11 if quick else 41)
    sub = grid[:: max(1, len(grid) // 11)][:11]
    checks = [check_duality(law, None, tol=tol)]
    if cap is not None:
        checks.append(check_duality(law, cap, tol=tol))
    checks += check_cap_threshold(law, grid, tol)
    for g in sorted({0.0, 0.5} | ({lp} if math.isfinite(lp) else set())):
        checks.append(check_route(law, grid, g, tol))
    checks.append(check_reduction(law, grid, cap))
    checks.append(check_homogeneity(law, sub, tol))
    checks.append(check_growth(law))
    checks.append(check_convexity(law, grid))
    checks.append(check_lambda_ball(law, sub[:5] if quick else sub))
    theta_pts = np.column_stack([np.ones(5), np.linspace(sub[0, 0], sub[-1, 0], 5)]) if law.dim == 1 else None
    if theta_pts is not None:
        checks.append(check_lambda_biconjugate(law, theta_pts, n_dirs=31 if quick else 181))
    g = 0.0 if cap is None else cap
    checks.append(check_open_interval(law, sub[:5] if quick else sub, g))
    return checks
