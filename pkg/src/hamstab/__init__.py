"""Constructive stabilization and destabilization of periodic orbits of
three-dimensional Hamiltonian systems ``u' = nu (grad H x grad C)``."""
from .errors import (DomainError, ExprError, HamstabError, IntegrationError, NoCrossingError,
                     OrbitError, ProjectionError)
from .fields import (ScalarField, SystemDef, VectorField, cross, grad_fd_check,
                     hamiltonian_field, independence_det, triple_expand)
from .integrate import (IntegratorConfig, Monodromy, Plane, Trajectory, integrate,
                        locate_section_crossings, monodromy_matrix)
from .orbits import (FloquetReport, PeriodicOrbit, find_periodic_orbit, floquet_analysis,
                     orbit_distance, phase_align, project_to_fiber)
from .perturbation import (DecayRates, Mode, PerturbationSpec, build_perturbed_field,
                           c_preserving_term, decay_rates, h_preserving_term,
                           planar_perturbed_field)
from .systems import builtin, harmonic2d, rigid_body, rikitake

__version__ = "0.1.0"

__all__ = [
    "DomainError", "ExprError", "HamstabError", "IntegrationError", "NoCrossingError",
    "OrbitError", "ProjectionError",
    "ScalarField", "SystemDef", "VectorField", "cross", "grad_fd_check", "hamiltonian_field",
    "independence_det", "triple_expand",
    "IntegratorConfig", "Monodromy", "Plane", "Trajectory", "integrate",
    "locate_section_crossings", "monodromy_matrix",
    "FloquetReport", "PeriodicOrbit", "find_periodic_orbit", "floquet_analysis",
    "orbit_distance", "phase_align", "project_to_fiber",
    "DecayRates", "Mode", "PerturbationSpec", "build_perturbed_field", "c_preserving_term",
    "decay_rates", "h_preserving_term", "planar_perturbed_field",
    "builtin", "harmonic2d", "rigid_body", "rikitake",
]
