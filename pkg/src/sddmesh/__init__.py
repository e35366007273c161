"""Moving-mesh generation with stochastic domain decomposition."""

from sddmesh.density import DensityConfig, DensityField, build_arclength_density
from sddmesh.driver import SimulationConfig, StepRecord, run_reference, run_sdd
from sddmesh.grid import ComputationalGrid, PhysicalDomain, PhysicalMesh, decompose, make_grid
from sddmesh.quality import linf_error, mesh_quality, quality_ratio
from sddmesh.stochastic import McConfig

__version__ = "0.1.0"
