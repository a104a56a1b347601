"""2D weakly compressible SPH engine with fluid-structure interaction and
pseudo-spring fracture."""

__version__ = "0.1.0"

from .fluid import FluidMaterial
from .integrator import Simulation, SimulationError, StepControl, advance, cfl_dt
from .kernel import KernelSpec
from .particles import Bonds, NeighborGrid, Particles, Phase, Rect
from .scenarios import SCENARIOS, ScenarioConfig, build_scenario, build_simulation
from .solid import SolidMaterial

__all__ = [
    "__version__",
    "FluidMaterial",
    "SolidMaterial",
    "KernelSpec",
    "Particles",
    "Phase",
    "Rect",
    "Bonds",
    "NeighborGrid",
    "Simulation",
    "SimulationError",
    "StepControl",
    "advance",
    "cfl_dt",
    "SCENARIOS",
    "ScenarioConfig",
    "build_scenario",
    "build_simulation",
]
