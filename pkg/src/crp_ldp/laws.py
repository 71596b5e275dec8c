"""Reference jump laws used in tests, the CLI and the docs."""

from __future__ import annotations

from .model import JumpLaw, TauLaw


def unit_step_law(p: float = 0.5) -> JumpLaw:
    """tau = 1 killed with probability p, zeta = tau, v = 0 (d = 1)."""
    return JumpLaw(dim=1, p_terminate=p, tau=TauLaw("det", 1.0), a=(1.0,))


def exponential_clock_law(shift: float = 0.0) -> JumpLaw:
    """tau ~ Exp(1), zeta = tau + shift, v = 0."""
    return JumpLaw(dim=1, p_terminate=0.0, tau=TauLaw("exp", 1.0), a=(1.0,), b=(shift,))


def exponential_gaussian_law() -> JumpLaw:
    """tau ~ Exp(1), zeta ~ N(0, 1) independent of tau, v = 0."""
    return JumpLaw(dim=1, p_terminate=0.0, tau=TauLaw("exp", 1.0), sigma=(1.0,))


def pinning_law(p: float = 0.1, q: float = 0.5, energy: float = 0.2) -> JumpLaw:
    """Killed geometric excursions with reward v = energy * tau, zeta = tau."""
    return JumpLaw(dim=1, p_terminate=p, tau=TauLaw("geom", q), a=(1.0,), c1=energy)


def gaussian_walk_law(mean: float = 1.0, sd: float = 1.0) -> JumpLaw:
    """tau = 1, zeta ~ N(mean, sd^2), v = 0: a plain random walk."""
    return JumpLaw(dim=1, p_terminate=0.0, tau=TauLaw("det", 1.0), b=(mean,), sigma=(sd,))


NAMED_LAWS = {
    "M1": unit_step_law,
    "M2": exponential_clock_law,
    "M3": exponential_gaussian_law,
    "M4": pinning_law,
    "walk": gaussian_walk_law,
}
