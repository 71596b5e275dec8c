"""Numerical convex conjugacy over R^k for extended-real functions.

Everything here works on batches: an :class:`ExtFunction` evaluates an
``(n, k)`` array of points at once, and the transforms accept ``(m, k)``
arrays of query points. Suprema are found in two stages:

1. a scan over a dyadic lattice on a box that doubles while the best value
   sits on the box edge. Three doublings whose gains roughly double each
   time (linear growth) certify ``+inf``; slower growth needs eight
   doublings with non-shrinking gains;
2. local refinement around the best lattice point, golden section for
   ``k == 1`` and a compass pattern search for ``k >= 2``.

Dyadic lattices contain 0, +-1, +-1/2, ... exactly, which matters for
functions whose effective domain is a single point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .extended import ExtendedValue

CONVERGED = "converged"
UNBOUNDED = "unbounded"
BOX_LIMITED = "box_limited"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BoxExhausted(RuntimeError):
    """The search box hit its maximum size without a verdict."""


@dataclass(frozen=True)
class SearchPolicy:
    initial_half_width: float = 4.0
    max_half_width: float = 1e6
    growth_doublings: int = 3
    slow_growth_doublings: int = 8
    linear_ratio: float = 1.9
    scan_points: int | None = None
    zoom_points: int | None = None
    xtol: float = 1e-10
    value_tol: float = 1e-10
    fixed_half_width: float | None = None
    raise_on_exhaust: bool = True

    def n_scan(self, k: int) -> int:
        if self.scan_points:
            return self.scan_points
        return {1: 129, 2: 33, 3: 17}.get(k, 9)

    def n_zoom(self, k: int) -> int:
        return self.zoom_points or 9

    def truncated(self, half_width: float) -> "SearchPolicy":
        return SearchPolicy(**{**self.__dict__, "fixed_half_width": half_width})


DEFAULT_POLICY = SearchPolicy()


@dataclass
class ExtFunction:
    """A map R^k -> (-inf, inf], evaluated in batches of shape (n, k)."""

    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    finiteness_box: tuple | None = None
    name: str = ""

    def values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if len(pts) == 0:
            return np.empty(0)
        return np.asarray(self.evaluator(pts), dtype=float).reshape(len(pts))

    def __call__(self, u) -> ExtendedValue:
        return ExtendedValue(float(self.values(np.atleast_1d(u))[0]))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.finiteness_box is None:
            return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)
        lo, hi = self.finiteness_box
        return (np.broadcast_to(np.asarray(lo, float), (self.dim,)).copy(),
                np.broadcast_to(np.asarray(hi, float), (self.dim,)).copy())


@dataclass
class SupResult:
    values: np.ndarray
    argmax: np.ndarray
    status: np.ndarray

    def __getitem__(self, i):
        return ExtendedValue(self.values[i])


# -- core search -----------------------------------------------------------

def _axis_points(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n)


def _lattice(lo, hi, n):
    axes = [_axis_points(l, h, n) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sup_search(shared, each, m: int, k: int, policy: SearchPolicy = DEFAULT_POLICY,
               lo=None, hi=None, anchors=None) -> SupResult:
    """Maximize m objectives over a common box in R^k.

    ``shared(L, idx)`` evaluates queries ``idx`` on a common point set ``L``
    of shape (n, k) and returns (len(idx), n). ``each(P, idx)`` evaluates
    per-query points ``P`` of shape (len(idx), n, k). ``anchors`` is an
    optional (m, a, k) array of extra candidate points.
    """
    lo = np.full(k, -np.inf) if lo is None else np.asarray(lo, float).copy()
    hi = np.full(k, np.inf) if hi is None else np.asarray(hi, float).copy()
    if policy.fixed_half_width is not None:
        R = policy.fixed_half_width
        lo, hi = np.maximum(lo, -R), np.minimum(hi, R)
    open_lo, open_hi = np.isinf(lo), np.isinf(hi)
    has_open = bool(open_lo.any() or open_hi.any())

    best_val = np.full(m, -np.inf)
    best_pt = np.zeros((m, k))
    spacing = np.zeros((m, k))
    status = np.full(m, CONVERGED, dtype=object)
    prev = np.full(m, np.nan)
    prev_inc = np.full(m, np.nan)
    count = np.zeros(m, dtype=int)
    count_lin = np.zeros(m, dtype=int)
    active = np.arange(m)
    n = policy.n_scan(k)
    tol = policy.value_tol
    h = policy.initial_half_width

    while active.size:
        alo = np.where(open_lo, -h, lo)
        ahi = np.where(open_hi, h, hi)
        L = _lattice(alo, ahi, n)
        edge = np.zeros(len(L), dtype=bool)
        for j in range(k):
            if open_lo[j]:
                edge |= L[:, j] <= alo[j]
            if open_hi[j]:
                edge |= L[:, j] >= ahi[j]
        with np.errstate(invalid="ignore"):
            V = np.asarray(shared(L, active), dtype=float)
        V = np.where(np.isnan(V), -np.inf, V)
        pts = np.broadcast_to(L, (active.size,) + L.shape)
        if anchors is not None:
            A = anchors[active]
            A = np.clip(A, alo, ahi)
            with np.errstate(invalid="ignore"):
                VA = np.asarray(each(A, active), dtype=float)
            V = np.concatenate([V, np.where(np.isnan(VA), -np.inf, VA)], axis=1)
            pts = np.concatenate([pts, A], axis=1)
            edge_all = np.concatenate([edge, np.zeros(A.shape[1], dtype=bool)])
        else:
            edge_all = edge
        ib = np.argmax(V, axis=1)
        bval = V[np.arange(active.size), ib]
        best_val[active] = bval
        best_pt[active] = pts[np.arange(active.size), ib]
        spacing[active] = (ahi - alo) / (n - 1)
        if not has_open or not edge.any():
            break
        interior = np.where(edge_all[None, :], -np.inf, V).max(axis=1)
        edge_max = np.where(edge_all[None, :], V, -np.inf).max(axis=1)
        scale = 1.0 + np.abs(np.where(np.isfinite(interior), interior, 0.0))
        with np.errstate(invalid="ignore"):
            edge_better = (edge_max > interior + tol * scale) & np.isfinite(edge_max)
        edge_better |= np.isposinf(bval)
        with np.errstate(invalid="ignore"):
            inc = bval - prev[active]
        first = np.isnan(prev[active])
        with np.errstate(invalid="ignore"):
            grow = ~first & (inc > tol * (1.0 + np.abs(np.where(np.isfinite(bval), bval, 0.0))))
            grow |= np.isposinf(bval)
            pinc = prev_inc[active]
            nondecr = np.isnan(pinc) | (inc >= pinc * (1.0 - 1e-9))
            linear = np.isnan(pinc) | (inc >= pinc * policy.linear_ratio) | np.isposinf(bval)
        cnt = np.where(grow & nondecr, count[active] + 1, np.where(grow, 1, 0))
        cnt_lin = np.where(grow & linear, count_lin[active] + 1, np.where(grow, 1, 0))
        count[active] = cnt
        count_lin[active] = cnt_lin
        flat = ~first & ~grow
        unbounded = edge_better & ((cnt_lin >= policy.growth_doublings)
                                   | (cnt >= policy.slow_growth_doublings))
        done = ~edge_better | flat | unbounded
        status[active[unbounded]] = UNBOUNDED
        best_val[active[unbounded]] = np.inf
        prev[active] = bval
        prev_inc[active] = np.where(first, np.nan, inc)
        active = active[~done]
        h *= 2.0
        if active.size and h > policy.max_half_width:
            if policy.raise_on_exhaust:
                raise BoxExhausted(f"search box exceeded half-width {policy.max_half_width:g}")
            status[active] = BOX_LIMITED
            break

    refine = np.flatnonzero((status != UNBOUNDED) & np.isfinite(best_val))
    if refine.size:
        if k == 1:
            _golden_refine(each, refine, best_val, best_pt, spacing, lo, hi, policy)
        else:
            _pattern_refine(each, refine, best_val, best_pt, spacing, lo, hi, policy)
    return SupResult(best_val, best_pt, status)


def _eval_each(each, P, idx):
    with np.errstate(invalid="ignore"):
        V = np.asarray(each(P, idx), dtype=float)
    return np.where(np.isnan(V), -np.inf, V)


def _golden_refine(each, idx, best_val, best_pt, spacing, lo, hi, policy):
    x = best_pt[idx, 0].copy()
    a = np.maximum(x - spacing[idx, 0], lo[0])
    b = np.minimum(x + spacing[idx, 0], hi[0])
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    F = _eval_each(each, np.stack([c, d], axis=1)[:, :, None], idx)
    fc, fd = F[:, 0], F[:, 1]
    bv = best_val[idx].copy()
    bx = x.copy()
    for f, p in ((fc, c), (fd, d)):
        upd = f > bv
        bv = np.where(upd, f, bv)
        bx = np.where(upd, p, bx)
    live = np.ones(idx.size, dtype=bool)
    for _ in range(400):
        live &= (b - a) > policy.xtol * np.maximum(1.0, np.abs(bx))
        if not live.any():
            break
        both_dead = np.isneginf(fc) & np.isneginf(fd)
        left = np.where(both_dead, bx < c, fc >= fd)
        # shrink [a, b]; only one new probe per query
        new_b = np.where(left, d, b)
        new_a = np.where(left, a, c)
        new_c = np.where(left, new_b - _GOLDEN * (new_b - new_a), d)
        new_d = np.where(left, c, new_a + _GOLDEN * (new_b - new_a))
        probe = np.where(left, new_c, new_d)
        li = np.flatnonzero(live)
        fp = np.full(idx.size, -np.inf)
        fp[li] = _eval_each(each, probe[li, None, None], idx[li])[:, 0]
        new_fc = np.where(left, fp, fd)
        new_fd = np.where(left, fc, fp)
        a = np.where(live, new_a, a)
        b = np.where(live, new_b, b)
        c = np.where(live, new_c, c)
        d = np.where(live, new_d, d)
        fc = np.where(live, new_fc, fc)
        fd = np.where(live, new_fd, fd)
        upd = live & (fp > bv)
        bv = np.where(upd, fp, bv)
        bx = np.where(upd, probe, bx)
    best_val[idx] = bv
    best_pt[idx, 0] = bx


def _newton_steps(offs, V, bv, w):
    """Quadratic model from a full 3^k stencil; returns proposed steps or nan."""
    m, k = w.shape
    pos = {tuple(o): i for i, o in enumerate(offs.astype(int))}

    def f(o):
        return V[:, pos[o]] if any(o) else bv

    g = np.empty((m, k))
    H = np.empty((m, k, k))
    for a in range(k):
        ea = tuple(int(t == a) for t in range(k))
        na = tuple(-x for x in ea)
        g[:, a] = (f(ea) - f(na)) / (2 * w[:, a])
        H[:, a, a] = (f(ea) - 2 * bv + f(na)) / w[:, a] ** 2
        for b in range(a):
            def o(sa, sb):
                return tuple(sa * (t == a) + sb * (t == b) for t in range(k))
            hab = (f(o(1, 1)) - f(o(1, -1)) - f(o(-1, 1)) + f(o(-1, -1))) / (4 * w[:, a] * w[:, b])
            H[:, a, b] = H[:, b, a] = hab
    steps = np.full((m, k), np.nan)
    ok = np.isfinite(g).all(axis=1) & np.isfinite(H).all(axis=(1, 2))
    if ok.any():
        eig = np.linalg.eigvalsh(H[ok])
        conc = eig.max(axis=1) < 0
        sel = np.flatnonzero(ok)[conc]
        if sel.size:
            st = -np.linalg.solve(H[sel], g[sel][:, :, None])[:, :, 0]
            small = np.all(np.abs(st) <= 4 * w[sel], axis=1)
            steps[sel[small]] = st[small]
    return steps


def _pattern_refine(each, idx, best_val, best_pt, spacing, lo, hi, policy):
    # compass search on the 3^k stencil (move to a better neighbour, else
    # halve), accelerated by a Newton step fitted to the same stencil
    k = best_pt.shape[1]
    offs = _lattice(-np.ones(k), np.ones(k), 3)
    offs = offs[np.any(offs != 0, axis=1)]
    w = spacing[idx].copy()
    centre = best_pt[idx].copy()
    bv = best_val[idx].copy()
    live = np.ones(idx.size, dtype=bool)
    for _ in range(2000):
        live &= np.max(w / np.maximum(1.0, np.abs(centre)), axis=1) > policy.xtol
        if not live.any():
            break
        li = np.flatnonzero(live)
        P = np.clip(centre[li, None, :] + offs[None, :, :] * w[li, None, :], lo, hi)
        V = _eval_each(each, P, idx[li])
        j = np.argmax(V, axis=1)
        v = V[np.arange(li.size), j]
        upd = v > bv[li]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            deficit = np.max(bv[li, None] - V, axis=1)
            steps = _newton_steps(offs, V, bv[li], w[li])
        # for a concave objective the gain left inside the stencil is bounded
        # by the neighbours' deficits, so stop once those are negligible
        flat = ~upd & (deficit <= policy.value_tol * 1e-3 * (1.0 + np.abs(bv[li])))
        has_step = np.isfinite(steps).all(axis=1) & ~flat
        newton_ok = np.zeros(li.size, dtype=bool)
        if has_step.any():
            ns = np.flatnonzero(has_step)
            Q = np.clip(centre[li[ns]] + steps[ns], lo, hi)
            vq = _eval_each(each, Q[:, None, :], idx[li[ns]])[:, 0]
            better = vq > np.maximum(v[ns], bv[li[ns]])
            tgt = ns[better]
            newton_ok[tgt] = True
            rows = li[tgt]
            move = np.abs(Q[better] - centre[rows])
            bv[rows] = vq[better]
            centre[rows] = Q[better]
            w[rows] = np.clip(2.0 * move.max(axis=1, keepdims=True) / np.maximum(
                w[rows].max(axis=1, keepdims=True), 1e-300) * w[rows], 1e-3 * w[rows], w[rows])
        rest = ~newton_ok
        r = li[rest]
        up = upd[rest]
        bv[r] = np.where(up, v[rest], bv[r])
        centre[r] = np.where(up[:, None], P[np.flatnonzero(rest), j[rest]], centre[r])
        # a centre that beats its stencil brackets the max; shrink faster when
        # the quadratic model also says the max is close by
        shrink = np.full(r.size, 0.5)
        st = steps[rest]
        fin = np.isfinite(st).all(axis=1)
        if fin.any():
            ratio = np.max(np.abs(st[fin]) / w[r[fin]], axis=1)
            shrink[fin] = np.clip(2.0 * ratio, 1.0 / 16, 0.5)
        w[r] = np.where(up[:, None], w[r], shrink[:, None] * w[r])
        live[li[flat]] = False
    best_val[idx] = bv
    best_pt[idx] = centre


# -- transforms --------------------------------------------------------

def _bounds_for(F: ExtFunction):
    return F.bounds()


def legendre_many(F: ExtFunction, alphas, policy: SearchPolicy = DEFAULT_POLICY) -> SupResult:
    """sup_mu <mu, alpha> - F(mu) for each row of ``alphas``."""
    k = F.dim
    al = np.asarray(alphas, dtype=float).reshape(-1, k)
    cache = {}

    def shared(L, idx):
        key = (L.shape, L.tobytes())
        if key not in cache:
            cache.clear()
            cache[key] = F.values(L)
        FL = cache[key]
        with np.errstate(invalid="ignore"):
            return al[idx] @ L.T - FL[None, :]

    def each(P, idx):
        ma, n, _ = P.shape
        FP = F.values(P.reshape(-1, k)).reshape(ma, n)
        with np.errstate(invalid="ignore"):
            return np.einsum("mnk,mk->mn", P, al[idx]) - FP

    lo, hi = _bounds_for(F)
    return sup_search(shared, each, len(al), k, policy, lo, hi)


def legendre(F: ExtFunction, alpha, policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    return legendre_many(F, np.atleast_1d(alpha)[None, :], policy)[0]


def conjugate(F: ExtFunction, policy: SearchPolicy = DEFAULT_POLICY) -> ExtFunction:
    """The Legendre transform of F as a lazily evaluated, memoized ExtFunction."""
    memo: dict[bytes, float] = {}

    def evaluator(pts):
        keys = [row.tobytes() for row in pts]
        missing = [i for i, key in enumerate(keys) if key not in memo]
        if missing:
            uniq = {}
            for i in missing:
                uniq.setdefault(keys[i], i)
            rows = np.array([pts[i] for i in uniq.values()])
            vals = legendre_many(F, rows, policy).values
            memo.update(zip(uniq.keys(), vals))
        return np.array([memo[key] for key in keys])

    return ExtFunction(F.dim, evaluator, None, f"({F.name})*")


def biconjugate_many(F: ExtFunction, us, policy: SearchPolicy = DEFAULT_POLICY) -> SupResult:
    return legendre_many(conjugate(F, policy), us, policy)


def biconjugate(F: ExtFunction, u, policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    return biconjugate_many(F, np.atleast_1d(u)[None, :], policy)[0]


def inf_convolution_many(F1: ExtFunction, F2: ExtFunction, us,
                         policy: SearchPolicy = DEFAULT_POLICY) -> np.ndarray:
    """inf_v F1(v) + F2(u - v) for each row of ``us``."""
    if F1.dim != F2.dim:
        raise ValueError("dimension mismatch in infimal convolution")
    k = F1.dim
    U = np.asarray(us, dtype=float).reshape(-1, k)

    def pair(P, idx):
        ma, n, _ = P.shape
        f1 = F1.values(P.reshape(-1, k)).reshape(ma, n)
        f2 = F2.values((U[idx][:, None, :] - P).reshape(-1, k)).reshape(ma, n)
        with np.errstate(invalid="ignore"):
            return -(f1 + f2)

    def shared(L, idx):
        return pair(np.broadcast_to(L, (idx.size,) + L.shape), idx)

    anchors = np.stack([U, 0.5 * U, np.zeros_like(U)], axis=1)
    res = sup_search(shared, pair, len(U), k, policy, *F1.bounds(), anchors=anchors)
    return -res.values


def inf_convolution(F1: ExtFunction, F2: ExtFunction, u,
                    policy: SearchPolicy = DEFAULT_POLICY) -> ExtendedValue:
    return ExtendedValue(inf_convolution_many(F1, F2, np.atleast_1d(u)[None, :], policy)[0])


def inf_convolution_function(F1: ExtFunction, F2: ExtFunction,
                             policy: SearchPolicy = DEFAULT_POLICY) -> ExtFunction:
    return ExtFunction(F1.dim, lambda pts: inf_convolution_many(F1, F2, pts, policy),
                       None, f"{F1.name}#{F2.name}")


def homogeneous_closure(directions, values, x) -> ExtendedValue:
    """Biconjugate at x of a positively homogeneous function known on rays.

    The conjugate of such a function is the indicator of
    S = {y : <y, e_j> <= F(e_j)}, so the biconjugate is the support function
    of S, computed here as a linear program. Rays with F = +inf impose no
    constraint.
    """
    E = np.asarray(directions, dtype=float)
    vals = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    keep = np.isfinite(vals)
    if not keep.any():
        return ExtendedValue(math.inf)
    res = linprog(-x, A_ub=E[keep], b_ub=vals[keep], bounds=[(None, None)] * len(x), method="highs")
    if res.status == 3:
        return ExtendedValue(math.inf)
    if res.status == 2:
        return ExtendedValue(-math.inf)
    if res.status != 0:
        raise RuntimeError(f"support-function LP failed: {res.message}")
    return ExtendedValue(-res.fun)
