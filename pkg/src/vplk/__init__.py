"""Two-species Vlasov-Poisson-Landau simulator and property-test lab.

Modules: :mod:`~vplk.grid` (lattices, weights, norms), :mod:`~vplk.landau`
(kernel, linearized and bilinear collision operators), :mod:`~vplk.field`
(moments and Poisson solve), :mod:`~vplk.dynamics` (time stepping),
:mod:`~vplk.functionals` (energies, ledgers, decay fits) and :mod:`~vplk.cli`.
"""
from .dynamics import SchemeConfig, Simulator, cfl_dt, initial_data, run
from .grid import PhaseField, SpatialGrid, VelocityGrid, build_velocity_grid
from .landau import KernelSpec, LandauOperator

__version__ = "0.1.0"

__all__ = [
    "KernelSpec", "LandauOperator", "PhaseField", "SchemeConfig", "Simulator", "SpatialGrid",
    "VelocityGrid", "build_velocity_grid", "cfl_dt", "initial_data", "run",
]
