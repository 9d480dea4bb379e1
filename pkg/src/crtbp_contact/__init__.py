"""Contact-type toolkit for the spatial circular restricted three-body problem."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    EARTH,
    MOON,
    CollisionError,
    eval_H,
    eval_U,
    grad_H,
    hamiltonian_vector_field,
    swap_primaries,
)
from .lagrange import LagrangeSet, lagrange_set  # noqa: E402
from .transversality import TransversalityCertificate, certify_component  # noqa: E402

__all__ = [
    "__version__",
    "EARTH",
    "MOON",
    "CollisionError",
    "LagrangeSet",
    "TransversalityCertificate",
    "certify_component",
    "eval_H",
    "eval_U",
    "grad_H",
    "hamiltonian_vector_field",
    "lagrange_set",
    "swap_primaries",
]
