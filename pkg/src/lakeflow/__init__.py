"""Vorticity / stream-function simulator for the 2D lake equations.

Modules: :mod:`geometry` (lakes and depths), :mod:`grid` (masked
Cartesian discretisation), :mod:`elliptic` (weighted Dirichlet solves),
:mod:`biot_savart` (velocity from vorticity and circulations),
:mod:`transport` (time stepping), :mod:`diagnostics`, :mod:`harness`
(convergence experiments), :mod:`config` and :mod:`cli`.
"""

from .biot_savart import build_basis, reconstruct_velocity
from .elliptic import solve_weighted_poisson
from .geometry import Circle, DepthProfile, Ellipse, LakeGeometry, Polygon
from .grid import build_grid
from .harness import ExperimentPlan, Scenario, bump, invariant_suite, patch
from .transport import SchemeConfig, run

__version__ = "0.1.0"

__all__ = [
    "Circle",
    "Ellipse",
    "Polygon",
    "LakeGeometry",
    "DepthProfile",
    "build_grid",
    "solve_weighted_poisson",
    "build_basis",
    "reconstruct_velocity",
    "SchemeConfig",
    "run",
    "Scenario",
    "ExperimentPlan",
    "patch",
    "bump",
    "invariant_suite",
]
