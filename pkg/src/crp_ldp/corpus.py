"""Named extended-real test functions for the conjugacy engine."""

from __future__ import annotations

import numpy as np

from .conjugate import ExtFunction


def quadratic() -> ExtFunction:
    return ExtFunction(1, lambda u: 0.5 * u[:, 0] ** 2, None, "quad")


def absolute() -> ExtFunction:
    return ExtFunction(1, lambda u: np.abs(u[:, 0]), None, "abs")


def exp_quadratic() -> ExtFunction:
    def f(u):
        with np.errstate(over="ignore"):
            return np.expm1(0.5 * u[:, 0] ** 2)
    return ExtFunction(1, f, None, "expquad")


def double_well() -> ExtFunction:
    """Not convex; its closed convex hull vanishes on [-1, 1]."""
    return ExtFunction(1, lambda u: np.minimum((u[:, 0] + 1) ** 2, (u[:, 0] - 1) ** 2),
                       None, "double_well")


def removable_jump() -> ExtFunction:
    """u^2 on (0, 1], 1 at u = 0, +inf elsewhere; the closure takes 0 at 0."""
    def f(u):
        x = u[:, 0]
        out = np.where((x > 0) & (x <= 1), x ** 2, np.inf)
        return np.where(x == 0, 1.0, out)
    return ExtFunction(1, f, (np.array([0.0]), np.array([1.0])), "removable_jump")


QUAD2_MATRIX = np.array([[2.0, 0.5], [0.5, 1.0]])


def quadratic_2d() -> ExtFunction:
    Q = QUAD2_MATRIX
    return ExtFunction(2, lambda u: 0.5 * np.einsum("ni,ij,nj->n", u, Q, u), None, "quad2")


CORPUS = {
    "quad": quadratic,
    "abs": absolute,
    "expquad": exp_quadratic,
    "double_well": double_well,
    "removable_jump": removable_jump,
    "quad2": quadratic_2d,
}

# members that are closed and convex, so equal their own biconjugate
CLOSED_CONVEX = ("quad", "abs", "expquad", "quad2")


def get(name: str) -> ExtFunction:
    try:
        return CORPUS[name]()
    except KeyError:
        raise KeyError(f"unknown corpus function {name!r}; choose from {sorted(CORPUS)}") from None
