"""Jump laws for one renewal step (tau, zeta, v) and their exact cumulants.

A step is killed (tau = inf) with probability ``p_terminate``. Given tau < inf,

    zeta = a * tau + b + sigma * xi,   xi ~ N(0, I_d) independent of tau,
    v    = c0 + c1 * tau,

with tau deterministic, exponential, or geometric on {1, 2, ...}. Every
combination has a closed-form killed cumulant

    A(lam, mu) = ln E(exp(lam*tau + <mu, zeta> + v); tau < inf).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import logsumexp

from .extended import ExtendedValue

TAU_FAMILIES = ("det", "exp", "geom")
CSTAR_LADDER_DEPTH = 20


class ModelConfigError(ValueError):
    """Invalid jump-law parameters or config document."""


class CStarViolated(RuntimeError):
    """No (lambda, eps) pair on the search ladder gives a finite moment."""


@dataclass(frozen=True)
class TauLaw:
    """Conditional law of tau given tau < inf."""

    family: str
    param: float

    def __post_init__(self):
        if self.family not in TAU_FAMILIES:
            raise ModelConfigError(f"unknown tau family {self.family!r}; expected one of {TAU_FAMILIES}")
        if not (math.isfinite(self.param) and self.param > 0):
            raise ModelConfigError(f"tau parameter must be positive, got {self.param}")
        if self.family == "geom" and not self.param < 1:
            raise ModelConfigError(f"geometric q must lie in (0, 1), got {self.param}")

    @property
    def tail_rate(self) -> float:
        """Exponential decay rate of P(tau > t); inf for bounded tau."""
        if self.family == "det":
            return math.inf
        if self.family == "exp":
            return self.param
        return -math.log(self.param)

    @property
    def support_min(self) -> float:
        if self.family == "det":
            return self.param
        return 1.0 if self.family == "geom" else 0.0

    def log_mgf(self, s):
        """ln E exp(s * tau), elementwise; +inf outside the domain."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.family == "det":
                out = s * self.param
            elif self.family == "exp":
                r = self.param
                out = np.where(s < r, np.log(r) - np.log(np.where(s < r, r - s, 1.0)), np.inf)
            else:
                q = self.param
                ok = s < -math.log(q)
                qs = np.where(ok, q * np.exp(np.where(ok, s, 0.0)), 0.5)
                out = np.where(ok, math.log1p(-q) + s - np.log1p(-qs), np.inf)
        return out

    def inverse_log_mgf(self, y):
        """The s with log_mgf(s) = y; log_mgf is a bijection onto R."""
        y = np.asarray(y, dtype=float)
        if self.family == "det":
            return y / self.param
        if self.family == "exp":
            return -self.param * np.expm1(-y)
        q = self.param
        return y - np.logaddexp(math.log1p(-q), math.log(q) + y)

    def tail(self, x):
        """P(tau > x | tau < inf), elementwise."""
        x = np.asarray(x, dtype=float)
        if self.family == "det":
            return np.where(x < self.param, 1.0, 0.0)
        if self.family == "exp":
            return np.exp(-self.param * np.maximum(x, 0.0))
        return np.power(self.param, np.floor(np.maximum(x, 0.0)))

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "det":
            return np.where(x < self.param, 0.0, -np.inf)
        if self.family == "exp":
            return -self.param * np.maximum(x, 0.0)
        return np.floor(np.maximum(x, 0.0)) * math.log(self.param)

    def tilted(self, s: float) -> "TauLaw":
        """The law proportional to exp(s * tau) P(tau in .)."""
        if self.family == "det":
            return self
        if self.family == "exp":
            r = self.param - s
            if r <= 0:
                raise ModelConfigError(f"tilt {s} leaves no mass on Exp({self.param})")
            return TauLaw("exp", r)
        q = self.param * math.exp(s)
        if q >= 1:
            raise ModelConfigError(f"tilt {s} leaves no mass on Geom({self.param})")
        return TauLaw("geom", q)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "det":
            return np.full(n, self.param)
        if self.family == "exp":
            return rng.exponential(1.0 / self.param, size=n)
        return rng.geometric(1.0 - self.param, size=n).astype(float)


def _vec(x, dim: int, name: str) -> tuple[float, ...]:
    arr = np.broadcast_to(np.asarray(x, dtype=float), (dim,))
    if not np.all(np.isfinite(arr)):
        raise ModelConfigError(f"{name} must be finite")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class JumpLaw:
    """Joint law of one renewal step (tau, zeta, v), possibly killed."""

    dim: int
    p_terminate: float
    tau: TauLaw
    a: tuple[float, ...] = field(default=())
    b: tuple[float, ...] = field(default=())
    sigma: tuple[float, ...] = field(default=())
    c0: float = 0.0
    c1: float = 0.0

    def __post_init__(self):
        if not (isinstance(self.dim, (int, np.integer)) and self.dim >= 1):
            raise ModelConfigError(f"dim must be a positive integer, got {self.dim!r}")
        if not (0.0 <= self.p_terminate < 1.0):
            raise ModelConfigError(f"p_terminate must lie in [0, 1), got {self.p_terminate}")
        object.__setattr__(self, "a", _vec(self.a or 0.0, self.dim, "a"))
        object.__setattr__(self, "b", _vec(self.b or 0.0, self.dim, "b"))
        object.__setattr__(self, "sigma", _vec(self.sigma or 0.0, self.dim, "sigma"))
        if any(s < 0 for s in self.sigma):
            raise ModelConfigError("sigma entries must be nonnegative")
        if not (math.isfinite(self.c0) and math.isfinite(self.c1)):
            raise ModelConfigError("v coefficients must be finite")

    # -- serialization -------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "JumpLaw":
        try:
            dim = doc["dim"]
            tau = doc["tau"]
            zeta = doc.get("zeta", {})
            v = doc.get("v", {})
            return cls(
                dim=int(dim),
                p_terminate=float(doc.get("p_terminate", 0.0)),
                tau=TauLaw(str(tau["family"]), float(tau["param"])),
                a=zeta.get("a", 0.0),
                b=zeta.get("b", 0.0),
                sigma=zeta.get("sigma", 0.0),
                c0=float(v.get("c0", 0.0)),
                c1=float(v.get("c1", 0.0)),
            )
        except KeyError as exc:
            raise ModelConfigError(f"missing model field {exc.args[0]!r}") from None
        except (TypeError, AttributeError) as exc:
            raise ModelConfigError(f"malformed model config: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "p_terminate": self.p_terminate,
            "tau": {"family": self.tau.family, "param": self.tau.param},
            "zeta": {"a": list(self.a), "b": list(self.b), "sigma": list(self.sigma)},
            "v": {"c0": self.c0, "c1": self.c1},
        }

    @property
    def v_is_zero(self) -> bool:
        return self.c0 == 0.0 and self.c1 == 0.0

    @property
    def is_terminating(self) -> bool:
        return self.p_terminate > 0.0

    def log_survival(self, x):
        """ln P(tau > x), counting the killed mass tau = inf."""
        p = self.p_terminate
        lt = self.tau.log_tail(x)
        if p == 0.0:
            return lt
        return np.logaddexp(math.log(p), math.log1p(-p) + lt)


def load_law(path: str | Path) -> JumpLaw:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ModelConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ModelConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ModelConfigError(f"{path}: top level must be a JSON object")
    if "model" in doc and "dim" not in doc:
        doc = doc["model"]
    return JumpLaw.from_dict(doc)


# -- cumulant -----------------------------------------------------------

def cumulant(law: JumpLaw, lam, mu) -> np.ndarray:
    """Vectorized A(lam, mu). ``lam`` has shape (n,), ``mu`` shape (n, d)."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(lam.shape + (law.dim,))
    a = np.asarray(law.a)
    b = np.asarray(law.b)
    s2 = np.asarray(law.sigma) ** 2
    s = lam + law.c1 + mu @ a
    g = law.c0 + mu @ b + 0.5 * (mu * mu) @ s2
    if law.p_terminate > 0:
        g = g + math.log1p(-law.p_terminate)
    return g + law.tau.log_mgf(s)


def eval_A(law: JumpLaw, lam: float, mu) -> ExtendedValue:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return ExtendedValue(float(cumulant(law, np.array([lam]), mu[None, :])[0]))


# -- tail rates ---------------------------------------------------------

def lambda_plus(law: JumpLaw) -> ExtendedValue:
    if law.is_terminating:
        return ExtendedValue(0.0)
    return ExtendedValue(law.tau.tail_rate)


def lambda_minus(law: JumpLaw) -> ExtendedValue:
    # built-in tails are exactly exponential, so limsup and liminf agree
    return lambda_plus(law)


def lambda_star_plus(law: JumpLaw) -> ExtendedValue:
    """sup{lam >= 0 : E exp(v + lam*tau) < inf}; requires E exp(v) < inf."""
    if law.is_terminating:
        return ExtendedValue(0.0)
    rate = law.tau.tail_rate
    if law.c1 >= rate:
        raise ValueError("E exp(v) is infinite for this law")
    return ExtendedValue(max(0.0, rate - law.c1))


lambda_star_minus = lambda_star_plus


# -- condition [C*] -----------------------------------------------------

@dataclass(frozen=True)
class CStarWitness:
    lambda_c: float
    eps_c: float
    bound: float


def _sign_definite(law: JumpLaw) -> list[int]:
    """+1 / -1 where zeta_i has constant sign on {tau < inf}, else 0."""
    signs = []
    t0 = law.tau.support_min
    for a, b, s in zip(law.a, law.b, law.sigma):
        if s > 0:
            signs.append(0)
            continue
        if law.tau.family == "det":
            val = a * t0 + b
            signs.append(1 if val >= 0 else -1)
        elif a >= 0 and a * t0 + b >= 0:
            signs.append(1)
        elif a <= 0 and a * t0 + b <= 0:
            signs.append(-1)
        else:
            signs.append(0)
    return signs


def log_abs_moment_bound(law: JumpLaw, lam: float, eps: float) -> float:
    """Upper bound on ln E(exp(lam*tau + eps*|zeta| + v); tau < inf).

    Exact in d = 1 when zeta has constant sign. Otherwise uses
    exp(eps|z|) <= sum_i (exp(eps*sqrt(d)*z_i) + exp(-eps*sqrt(d)*z_i)),
    keeping only the relevant term for sign-definite coordinates.
    """
    d = law.dim
    scale = eps * math.sqrt(d)
    mus = []
    for i, sign in enumerate(_sign_definite(law)):
        for s in ((sign,) if sign else (1, -1)):
            m = np.zeros(d)
            m[i] = s * scale
            mus.append(m)
    mus = np.array(mus)
    vals = cumulant(law, np.full(len(mus), lam), mus)
    if np.any(np.isinf(vals)):
        return math.inf
    return float(logsumexp(vals))


def ladder_search(law: JumpLaw, lam_offset: float = 0.0, threshold: float = math.inf,
                  depth: int = CSTAR_LADDER_DEPTH):
    """First (lam, eps) on the ladder with bound(-(lam + offset), eps) < threshold."""
    for i in range(depth):
        eps = 2.0 ** -i
        for j in range(depth):
            lam = 2.0 ** j
            bound = log_abs_moment_bound(law, -(lam + lam_offset), eps)
            if bound < threshold:
                return lam, eps, bound
    return None


def check_cstar(law: JumpLaw) -> CStarWitness:
    found = ladder_search(law)
    if found is None:
        raise CStarViolated("no (lambda, eps) on the ladder gives a finite moment")
    lam, eps, bound = found
    return CStarWitness(lambda_c=lam, eps_c=eps, bound=bound)


# -- sampling -----------------------------------------------------------

def sample_finite_steps(law: JumpLaw, rng: np.random.Generator, n: int,
                        tau_law: TauLaw | None = None):
    """n draws of (tau, zeta, v) from the law conditional on tau < inf.

    ``tau_law`` replaces the law of tau while keeping zeta and v given tau,
    which is how a tilt in (tau, v) acts on the step.
    """
    tau = (tau_law or law.tau).sample(rng, n)
    zeta = tau[:, None] * np.asarray(law.a) + np.asarray(law.b)
    if any(law.sigma):
        zeta = zeta + rng.standard_normal((n, law.dim)) * np.asarray(law.sigma)
    v = law.c0 + law.c1 * tau
    return tau, zeta, v


def sample_step(law: JumpLaw, rng: np.random.Generator):
    """One step (tau, zeta, v); tau = inf with probability p_terminate."""
    if law.p_terminate > 0 and rng.random() < law.p_terminate:
        return math.inf, np.zeros(law.dim), 0.0
    tau, zeta, v = sample_finite_steps(law, rng, 1)
    return float(tau[0]), zeta[0], float(v[0])


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, index)."""
    mask = (1 << 64) - 1
    return np.random.Generator(np.random.Philox(key=[seed & mask, index & mask]))
