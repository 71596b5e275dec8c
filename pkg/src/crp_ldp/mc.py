"""Monte Carlo for the compound renewal process and its large deviations.

Paths are simulated in lockstep blocks. Block ``j`` of a run with seed ``s``
draws from the counter-based stream keyed by ``(s, j)``, so results do not
depend on how blocks are scheduled across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .model import JumpLaw, TauLaw, cumulant, ladder_search, sample_finite_steps, sample_step, stream
from .rate import A_values
from .regions import Ball, Box, Exterior, HalfSpace  # noqa: F401  (re-exported)

BLOCK = 16384
NAIVE = "naive"
TILTED = "tilted"
Z95 = 1.959963984540054
DEFAULT_TILT_MARGIN = 1e-3


class InvalidTilt(ValueError):
    pass


class RateUndefined(RuntimeError):
    pass


class TightnessUnavailable(RuntimeError):
    pass


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CRP_LDP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PathEstimate:
    t: float
    log_value: float
    replicates: int
    half_width_log: float
    seed: int
    method: str
    hits: int
    lambda_star: float | None = None

    @property
    def all_misses(self) -> bool:
        return self.hits == 0


# -- single paths -------------------------------------------------------

def simulate_path(law: JumpLaw, t: float, rng: np.random.Generator):
    """One path up to time t: (Z(t), V(t), nu(t), T_nu(t))."""
    if not t > 0:
        raise ValueError("t must be positive")
    z = np.zeros(law.dim)
    v_sum = 0.0
    n = 0
    T = 0.0
    while True:
        tau, zeta, v = sample_step(law, rng)
        if T + tau > t:
            return z, v_sum, n, T
        T += tau
        z = z + zeta
        v_sum += v
        n += 1


# -- blocks -------------------------------------------------------------

@dataclass
class _Block:
    z: np.ndarray
    v: np.ndarray
    n: np.ndarray
    T: np.ndarray


def _simulate_block(law: JumpLaw, t: float, size: int, rng: np.random.Generator,
                    tau_law: TauLaw, kill: float) -> _Block:
    z = np.zeros((size, law.dim))
    v = np.zeros(size)
    n = np.zeros(size, dtype=np.int64)
    T = np.zeros(size)
    idx = np.arange(size)
    while idx.size:
        k = idx.size
        killed = rng.random(k) < kill if kill > 0 else np.zeros(k, dtype=bool)
        tau, zeta, vv = sample_finite_steps(law, rng, k, tau_law)
        ok = ~killed & (T[idx] + tau <= t)
        j = idx[ok]
        T[j] += tau[ok]
        z[j] += zeta[ok]
        v[j] += vv[ok]
        n[j] += 1
        idx = j
    return _Block(z, v, n, T)


def _run_blocks(fn, n_rep: int, seed: int, offset: int):
    sizes = [min(BLOCK, n_rep - s) for s in range(0, n_rep, BLOCK)]
    keys = [(offset << 32) | j for j in range(len(sizes))]
    args = list(zip(sizes, keys))
    workers = min(worker_count(), len(args))
    if workers <= 1:
        return [fn(sz, stream(seed, key)) for sz, key in args]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(lambda a: fn(a[0], stream(seed, a[1])), args))


def _summarize(lw: np.ndarray, hit: np.ndarray):
    """log of mean(exp(lw) * hit) and its delta-method 95% half-width."""
    n = len(lw)
    h = int(hit.sum())
    if h == 0:
        return -math.inf, math.inf, 0
    m = lw[hit].max()
    w = np.where(hit, np.exp(np.where(hit, lw - m, 0.0)), 0.0)
    mean = w.mean()
    sd = w.std(ddof=1) if n > 1 else 0.0
    return float(m + math.log(mean)), float(Z95 * sd / (math.sqrt(n) * mean)), h


def _check_reps(n_rep: int):
    if n_rep < 100:
        raise ValueError("n_rep must be at least 100")


# -- naive estimators ---------------------------------------------------

def _naive_paths(law, t, n_rep, seed, offset=0):
    blocks = _run_blocks(lambda sz, rng: _simulate_block(law, t, sz, rng, law.tau, law.p_terminate),
                         n_rep, seed, offset)
    z = np.concatenate([b.z for b in blocks])
    v = np.concatenate([b.v for b in blocks])
    return z, v


def estimate_unnormalized(law: JumpLaw, t: float, region, n_rep: int, seed: int,
                          offset: int = 0) -> PathEstimate:
    """ln E(exp(V(t)); Z(t)/t in B) by plain simulation."""
    _check_reps(n_rep)
    z, v = _naive_paths(law, t, n_rep, seed, offset)
    lv, hw, h = _summarize(v, region.contains(z / t))
    return PathEstimate(t, lv, n_rep, hw, seed, NAIVE, h)


def estimate_gibbs(law: JumpLaw, t: float, region, n_rep: int, seed: int,
                   offset: int = 0) -> PathEstimate:
    """ln P_t(Z(t)/t in B): numerator and denominator from the same paths."""
    _check_reps(n_rep)
    z, v = _naive_paths(law, t, n_rep, seed, offset)
    num, hw_num, h = _summarize(v, region.contains(z / t))
    den, hw_den, _ = _summarize(v, np.ones(len(v), dtype=bool))
    if h == 0:
        return PathEstimate(t, -math.inf, n_rep, math.inf, seed, NAIVE, 0)
    return PathEstimate(t, num - den, n_rep, hw_num + hw_den, seed, NAIVE, h)


# -- tilted estimator ---------------------------------------------------

@dataclass(frozen=True)
class TiltedSampler:
    """Proposal: with probability kill_prob the step is tau = inf, otherwise
    it follows the normalized law exp(-C) E(exp(-lambda_star*tau + v); .)."""

    law: JumpLaw
    lambda_star: float
    log_mass: float
    step_tau: TauLaw
    kill_prob: float

    def with_kill_prob(self, kill_prob: float) -> "TiltedSampler":
        if not 0.0 <= kill_prob < 1.0:
            raise InvalidTilt(f"kill probability must lie in [0, 1), got {kill_prob}")
        return TiltedSampler(self.law, self.lambda_star, self.log_mass, self.step_tau, kill_prob)

    def drift(self) -> np.ndarray:
        """E zeta / E tau under the proposal's finite steps."""
        m_tau = _tau_mean(self.step_tau)
        return (np.asarray(self.law.a) * m_tau + np.asarray(self.law.b)) / m_tau


def _tau_mean(tau: TauLaw) -> float:
    if tau.family == "det":
        return tau.param
    if tau.family == "exp":
        return 1.0 / tau.param
    return 1.0 / (1.0 - tau.param)


def default_lambda_star(law: JumpLaw) -> float:
    """Smallest admissible tilt (plus a margin): {lam : A(-lam, 0) <= 0} is an up-ray."""
    a0 = float(A_values(law, np.zeros((1, law.dim)))[0])
    return max(a0, 0.0) + DEFAULT_TILT_MARGIN


def make_tilted(law: JumpLaw, lambda_star: float | None = None,
                kill_prob: float | None = None) -> TiltedSampler:
    lam = default_lambda_star(law) if lambda_star is None else float(lambda_star)
    if not lam > 0:
        raise InvalidTilt("lambda_star must be positive")
    C = float(cumulant(law, np.array([-lam]), np.zeros((1, law.dim)))[0])
    if not C <= 0:
        raise InvalidTilt(f"A(-lambda_star, 0) = {C:g} > 0")
    step = law.tau.tilted(law.c1 - lam)
    kill = -math.expm1(C) if kill_prob is None else kill_prob
    return TiltedSampler(law, lam, C, step, 0.0).with_kill_prob(kill)


def targeted_kill_prob(sampler: TiltedSampler, t: float, region) -> float:
    """A kill probability whose expected step count lands the path in ``region``.

    Only used when the region's centre lies between 0 and the proposal drift,
    i.e. when the event asks for early termination.
    """
    lo, hi = region.bounding_box()
    centre = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi),
                      np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0)))
    drift = sampler.drift()
    dd = float(drift @ drift)
    if dd == 0:
        return sampler.kill_prob
    s = float(centre @ drift) / dd
    if not 0 < s < 1:
        return sampler.kill_prob
    n_target = s * t / _tau_mean(sampler.step_tau)
    return 1.0 / (1.0 + n_target)


def _tilted_block(sampler: TiltedSampler, t: float, size: int, rng):
    law = sampler.law
    b = _simulate_block(law, t, size, rng, sampler.step_tau, sampler.kill_prob)
    k = sampler.kill_prob
    s = t - b.T
    # ln P(tau > s) for the original step, kill mass included
    lt = law.tau.log_tail(s)
    if law.p_terminate > 0:
        lp = np.logaddexp(math.log(law.p_terminate), math.log1p(-law.p_terminate) + lt)
    else:
        lp = lt
    lq = sampler.step_tau.log_tail(s)
    if k > 0:
        lq = np.logaddexp(math.log(k), math.log1p(-k) + lq)
    lw = sampler.lambda_star * b.T + b.n * (sampler.log_mass - math.log1p(-k)) + lp - lq
    return b.z, lw


def estimate_unnormalized_tilted(sampler: TiltedSampler, t: float, region, n_rep: int,
                                 seed: int, offset: int = 0) -> PathEstimate:
    """Importance-sampling estimate of ln E(exp(V(t)); Z(t)/t in B)."""
    _check_reps(n_rep)
    blocks = _run_blocks(lambda sz, rng: _tilted_block(sampler, t, sz, rng), n_rep, seed, offset)
    z = np.concatenate([b[0] for b in blocks])
    lw = np.concatenate([b[1] for b in blocks])
    lv, hw, h = _summarize(lw, region.contains(z / t))
    return PathEstimate(t, lv, n_rep, hw, seed, TILTED, h, sampler.lambda_star)


# -- empirical rates ----------------------------------------------------

@dataclass(frozen=True)
class EmpiricalRate:
    slope: float
    stderr: float
    per_t: tuple


def empirical_rate(law: JumpLaw, region, t_grid, n_rep: int, seed: int, method: str = TILTED,
                   lambda_star: float | None = None, target: bool = True) -> EmpiricalRate:
    """OLS slope of the log estimates against t."""
    ts = [float(t) for t in t_grid]
    if len(ts) < 4 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_grid needs at least 4 increasing values")
    per_t = []
    for i, t in enumerate(ts):
        if method == NAIVE:
            est = estimate_unnormalized(law, t, region, n_rep, seed, offset=i)
        elif method == TILTED:
            sampler = make_tilted(law, lambda_star)
            if target:
                sampler = sampler.with_kill_prob(targeted_kill_prob(sampler, t, region))
            est = estimate_unnormalized_tilted(sampler, t, region, n_rep, seed, offset=i)
        else:
            raise ValueError(f"unknown method {method!r}")
        per_t.append(est)
    y = np.array([e.log_value for e in per_t])
    if not np.all(np.isfinite(y)):
        raise RateUndefined("some horizons produced no hits; the empirical rate is undefined")
    if np.all(y == y[0]):
        return EmpiricalRate(0.0, 0.0, tuple(per_t))
    fit = stats.linregress(ts, y)
    return EmpiricalRate(float(fit.slope), float(fit.stderr), tuple(per_t))


# -- tightness ----------------------------------------------------------

@dataclass(frozen=True)
class TightnessPair:
    gamma: float
    lambda_tilde: float
    u: float

    @property
    def log_bound_factor(self) -> float:
        """ln(1 + u / (1 - u))."""
        return -math.log1p(-self.u)


def find_tightness_pair(law: JumpLaw) -> TightnessPair:
    """(gamma, lambda_tilde) on the search ladder with E exp(v + gamma|zeta| - (lambda_tilde+1)tau) < 1.

    ``u`` is an upper bound for that moment (exact when d = 1 and zeta has
    constant sign), which keeps the resulting tail bound valid.
    """
    found = ladder_search(law, lam_offset=1.0, threshold=0.0)
    if found is None:
        raise TightnessUnavailable("no pair with u < 1 on the search ladder")
    lam, eps, bound = found
    return TightnessPair(gamma=eps, lambda_tilde=lam, u=math.exp(bound))


def truncation_radius(pair, N: float) -> float:
    """M = (N + lambda_tilde + 1) / gamma; accepts a TightnessPair or (gamma, lambda_tilde)."""
    gamma, lam = (pair.gamma, pair.lambda_tilde) if isinstance(pair, TightnessPair) else pair
    if not gamma > 0:
        raise TightnessUnavailable("gamma must be positive")
    return (N + lam + 1.0) / gamma
