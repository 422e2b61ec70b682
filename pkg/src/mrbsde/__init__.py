"""Particle solver for mean-reflected BSDEs.

The constraint ``E[h(Y_t)] >= 0`` is enforced by a deterministic, flat
reflection ``K``. ``solve`` runs the interacting particle scheme; the
``oracle`` module holds independent references (exact tree enumeration,
closed forms, the limit equation) and ``harness`` the chaos-rate tooling.
"""

from .errors import MRBSDEError
from .model import (
    Affine,
    ChaosSettings,
    Constant,
    ConstraintSpec,
    DriverSpec,
    Exponential,
    LinearDriver,
    ModelSpec,
    PerStep,
    PicardOuter,
    Polynomial,
    SinAffine,
    SinDriver,
    SolverConfig,
    TimeGrid,
    load_config,
    load_document,
    markovian_model,
    validate_model,
)
from .oracle import closed_form_linear, limit_solver, particle_proxy, tree_solve_exact
from .reflection import reflect, reflection_offset, reflection_offset_linear
from .solver import SolutionBundle, snell_envelope, solve, terminal_adjust

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "ChaosSettings",
    "Constant",
    "ConstraintSpec",
    "DriverSpec",
    "Exponential",
    "LinearDriver",
    "MRBSDEError",
    "ModelSpec",
    "PerStep",
    "PicardOuter",
    "Polynomial",
    "SinAffine",
    "SinDriver",
    "SolutionBundle",
    "SolverConfig",
    "TimeGrid",
    "closed_form_linear",
    "limit_solver",
    "load_config",
    "load_document",
    "markovian_model",
    "particle_proxy",
    "reflect",
    "reflection_offset",
    "reflection_offset_linear",
    "snell_envelope",
    "solve",
    "terminal_adjust",
    "tree_solve_exact",
    "validate_model",
]
