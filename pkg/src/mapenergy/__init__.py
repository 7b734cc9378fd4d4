"""Dirichlet energy, bienergy and curvature diagnostics for maps between Riemannian manifolds."""

from .catalog import euclid, manifold, poincare, product, sphere, torus
from .energy import EnergyReport, Verdict, energy_report, verify_main_inequality
from .errors import MapEnergyError
from .flow import DiscreteMap, FlowConfig, FlowGrid, run_flow
from .geometry import ChartManifold
from .maps import AnalyticMap, MapBetweenManifolds, build_map
from .projective import projective_check, recover_theta
from .quadrature import build_grid, integrate

__version__ = "0.1.0"

__all__ = [
    "AnalyticMap",
    "ChartManifold",
    "DiscreteMap",
    "EnergyReport",
    "FlowConfig",
    "FlowGrid",
    "MapBetweenManifolds",
    "MapEnergyError",
    "Verdict",
    "build_grid",
    "build_map",
    "energy_report",
    "euclid",
    "integrate",
    "manifold",
    "poincare",
    "product",
    "projective_check",
    "recover_theta",
    "run_flow",
    "sphere",
    "torus",
    "verify_main_inequality",
]
