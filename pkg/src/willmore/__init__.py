"""Willmore surfaces in S^{n+2} from Bjorling data via loop groups."""

from .dpw import DomainGrid, SurfaceField, integrate_frame, extract_frames, \
    extract_surfaces, normalized_potential
from .geometry import closed_form, residual_report, umbilic_density, \
    equivariance_check, find_constant_combination, circle_frame, \
    equivariant_so4_frame, so4_generator, so13_generator
from .meshout import MeshOutput, build_mesh, mesh_from_field, export_mesh
from .potentials import BjorlingData, HoloPotential, \
    build_boundary_potential, build_circle_family, build_equivariant_so4, \
    build_so13_family, classify_minimality, extract_bjorling_from_curves, \
    potential_from_b1, validate
from .cli import RunConfig, load_config, parse_config, serialize_config, run

__version__ = "0.1.0"
