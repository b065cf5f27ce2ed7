"""Optimal controls for LQ systems with a deterministic and a random controller."""

import json
import os

from . import _core
from ._core import Error

__all__ = ["Error", "load", "solve", "simulate", "verify", "are"]


def load(path):
    with open(path) as f:
        return json.load(f)


def _text(problem):
    if isinstance(problem, (str, os.PathLike)) and os.path.exists(problem):
        with open(problem) as f:
            return f.read()
    if isinstance(problem, str):
        return problem
    return json.dumps(problem)


def solve(problem, steps=512):
    """Riccati pair, classical solution and gain schedule on the grid."""
    return _core.solve(_text(problem), steps)


def simulate(problem, steps=512, paths=20000, seed=42, antithetic=False, workers=0):
    """Monte Carlo cost of the optimal policy against the predicted value."""
    return json.loads(_core.simulate(_text(problem), steps, paths, seed, antithetic, workers))


def verify(problem, steps=512, paths=20000, seed=42, antithetic=False, workers=0):
    """Optimality residuals and value identity for the optimal policy."""
    return json.loads(_core.verify(_text(problem), steps, paths, seed, antithetic, workers))


def are(problem, tol=1e-8, t_step=5.0, t_max=500.0):
    """Stationary Riccati pair of a time-invariant problem."""
    return json.loads(_core.are(_text(problem), tol, t_step, t_max))
