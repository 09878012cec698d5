"""Numerical toolkit for a square-wave-forced integrate-and-fire system.

The package covers the full analysis pipeline: hybrid trajectory simulation
(adaptive Runge-Kutta with event location and resets), the piecewise-smooth
stroboscopic map with exact saltation differentials, switching-manifold
computation, predictor-corrector continuation of grazing border-collision
curves, an attracting-periodic-orbit census with symbolic itineraries and
maximin classification, and a semi-rigorous quasi-contraction certifier.
"""

__version__ = "0.1.0"

from .census import (CensusReport, Itinerary, OrbitInfo, RotationNumber, census,
                     default_grid, is_maximin, rotation_number, scan_1d, scan_2d)
from .certify import CertReport, Quadrilateral, certify
from .continuation import (BifSystemId, CurvePoint, FixedPoint, ResidualSystem,
                           Z0_NS1, Z0_S1, Z1_NS1, Z1_NS2, Z1_S1, Z1_S2,
                           codim2_points, codim2_transition, find_fixed_point, least_norm_newton,
                           seed_curve, seed_tangent_from_transversal, trace_curve)
from .flow import (DivergenceError, FlowError, SpikeEvent, TangencyError,
                   extended_variational, flow, flow_to_event, flow_with_events,
                   variational)
from .manifold import (ManifoldPolyline, rasterize_regions, tangency_points,
                       tangent_boundaries, transversal_boundaries)
from .model import (ForcingParams, HybridSystem, ModelParams, State, drive_at,
                    make_lif, published_params, read_param_file, reset, theta_inf,
                    vector_field, write_param_file)
from .strobo import StroboMap, StroboResult

__all__ = [
    "__version__",
    # model
    "State", "ModelParams", "ForcingParams", "HybridSystem", "make_lif",
    "published_params", "theta_inf", "vector_field", "reset", "drive_at",
    "read_param_file", "write_param_file",
    # flow
    "flow", "variational", "extended_variational", "flow_to_event",
    "flow_with_events", "SpikeEvent", "FlowError", "DivergenceError",
    "TangencyError",
    # strobo
    "StroboMap", "StroboResult",
    # manifold
    "ManifoldPolyline", "transversal_boundaries", "tangent_boundaries",
    "tangency_points", "rasterize_regions",
    # continuation
    "BifSystemId", "Z0_NS1", "Z1_NS1", "Z1_NS2", "Z0_S1", "Z1_S1", "Z1_S2",
    "ResidualSystem", "CurvePoint", "FixedPoint", "least_norm_newton",
    "trace_curve", "find_fixed_point", "seed_curve", "seed_tangent_from_transversal",
    "codim2_points", "codim2_transition",
    # census
    "Itinerary", "RotationNumber", "OrbitInfo", "CensusReport", "census",
    "default_grid", "rotation_number", "is_maximin", "scan_1d", "scan_2d",
    # certify
    "Quadrilateral", "CertReport", "certify",
]
