"""hp-FEM moduli of quadrilaterals and capacities of ring domains."""
from .analytic import (
    CircularQuadSpec,
    ConvexQuadSpec,
    circular_quad_type_a,
    circular_quad_type_b,
    hvv_quad_modulus,
    parallelogram_modulus,
    square_frame_modulus,
    square_in_square_capacity,
)
from .fem import ModulusResult, assemble, dirichlet_energy, quad_modulus, ring_capacity, sample_field, solve
from .mesh import (
    DomainSpec,
    GradingParams,
    Mesh,
    MeshError,
    QuadrilateralProblem,
    RingProblem,
    build_mesh,
    conjugate_problem,
    load_domain,
)

__all__ = [
    "CircularQuadSpec",
    "ConvexQuadSpec",
    "DomainSpec",
    "GradingParams",
    "Mesh",
    "MeshError",
    "ModulusResult",
    "QuadrilateralProblem",
    "RingProblem",
    "assemble",
    "build_mesh",
    "circular_quad_type_a",
    "circular_quad_type_b",
    "conjugate_problem",
    "dirichlet_energy",
    "hvv_quad_modulus",
    "load_domain",
    "parallelogram_modulus",
    "quad_modulus",
    "ring_capacity",
    "sample_field",
    "solve",
    "square_frame_modulus",
    "square_in_square_capacity",
]
__version__ = "0.1.0"
