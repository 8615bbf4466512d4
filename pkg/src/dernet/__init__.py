"""Discrete elastic net dynamics.

Implicit simulation of slender rod networks (straight rods and woven
hexagonal nets) built from nodal stretching/bending energies with
analytic forces and Jacobians, unilateral contact against rigid
height-field surfaces, scripted capture scenarios, and the analytic
oracles used to validate them.
"""

from . import oracles
from .contact import (ContactSet, ContactSurface, HemisphereSurface, PlaneSurface,
                      detect, make_surface, modified_mass_matrix,
                      prescribed_correction, step_with_contact, surface_normal)
from .elastic import (EdgeGeometry, ElasticAssembler, assemble, bend_curvature_exact,
                      bend_curvature_modified, bend_energy, bend_gradient,
                      bend_hessian, edge_geometry, stretch_energy, stretch_gradient,
                      stretch_hessian)
from .errors import (ConfigError, ContactLoopError, DernetError, InvalidMeshError,
                     MeshParseError, NonconvergenceError, NumericalError,
                     SingularSystemError)
from .integrator import (DofConstraints, ImplicitIntegrator, IntegratorConfig,
                         StepReport)
from .materials import MaterialParams
from .mesh import (NetMesh, State, central_node, generate_hexagonal_web,
                   generate_rod, load_mesh, save_mesh)
from .scenarios import (DEFAULT_MATERIAL, PrescribedMotion, RunResult, ScenarioConfig,
                        StressField, default_config, hang_cable, run_close,
                        run_contact_drop, run_fold, run_shoot, run_vibration,
                        spread_area, stress_field)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
