"""Wiener-Hopf factorization of commutative (Moiseev class) algebraic
matrices by two ordinary differential equations in a deformation parameter.
"""

from .errors import FactorizationError
from .expr import parse, evaluate, ShoreSpec
from .problem import FactorizationProblem, CommutantB, build_B, eval_G, eval_H
from .ode2 import integrate, init_state, Ode2Trajectory
from .ode1 import EvalPoint, solve_U, FactorizationResult

__all__ = [
    "FactorizationError",
    "parse",
    "evaluate",
    "ShoreSpec",
    "FactorizationProblem",
    "CommutantB",
    "build_B",
    "eval_G",
    "eval_H",
    "integrate",
    "init_state",
    "Ode2Trajectory",
    "EvalPoint",
    "solve_U",
    "FactorizationResult",
]

__version__ = "0.1.0"
