"""Symbolic-numeric toolkit for Ermakov systems: expression trees, Lagrangian
mechanics, Lie and Noether symmetry checks, integration with invariant
monitoring, and an audit harness for the potential catalog."""

from .expr import Expr, Jet, Symbol, equal_on_samples, parse, to_text
from .mechanics import LagrangianSystem, derive_system, euler_lagrange
from .symmetry import ConservationLaw, GeneratorField, lie_symmetry_residual, noether_residual, sl2_generators
from .integrate import IntegratorSettings, integrate, monitor
from .ermakov import (
    ep_system, ermakov_nd_system, lewis_invariant, named_invariants, nd_chart, pinney_superposition,
    ray_reid_invariant, ray_reid_system,
)
from .catalog import catalog

__all__ = [
    "Expr", "Jet", "Symbol", "equal_on_samples", "parse", "to_text",
    "LagrangianSystem", "derive_system", "euler_lagrange",
    "ConservationLaw", "GeneratorField", "lie_symmetry_residual", "noether_residual", "sl2_generators",
    "IntegratorSettings", "integrate", "monitor",
    "ep_system", "ermakov_nd_system", "lewis_invariant", "named_invariants", "nd_chart", "pinney_superposition",
    "ray_reid_invariant", "ray_reid_system", "catalog",
]

__version__ = "0.1.0"
