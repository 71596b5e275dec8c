"""Large-deviation rate functions and Monte Carlo for compound renewal processes with killing."""

from .extended import NEG_INF, POS_INF, ExtendedArithmeticError, ExtendedValue
from .model import CStarViolated, JumpLaw, ModelConfigError, TauLaw, load_law

__all__ = [
    "CStarViolated",
    "ExtendedArithmeticError",
    "ExtendedValue",
    "JumpLaw",
    "ModelConfigError",
    "NEG_INF",
    "POS_INF",
    "TauLaw",
    "load_law",
]
