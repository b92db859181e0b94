"""Electro-thermally actuated SU-8 microgripper simulation.

Staged finite-element chain (electric, thermal, thermoelastic) on structured
hexahedral meshes, penalty contact for grip estimates, closed-form reference
models, and the sweep, comparison and optimization studies built on them.
"""

from .config import ConfigError, StudyConfig, parse_config
from .design import GripperDesign, build_design, build_model1, build_model2, build_stack_design, validate_design
from .grip import GripResult, estimate_grip
from .io import export_csv, export_vtk
from .materials import Environment, MaterialProps, builtin_library, builtin_material, validate_material
from .mesh import Mesh, generate_mesh
from .physics import CoupledModel, MeshSettings, Solution, material_library, run_coupled
from .studies import (SweepRecord, compare_models, environment_sweep, optimize_design, required_voltage,
                      voltage_sweep)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CoupledModel", "Environment", "GripResult", "GripperDesign", "MaterialProps", "Mesh",
    "MeshSettings", "Solution", "StudyConfig", "SweepRecord", "build_design", "build_model1", "build_model2",
    "build_stack_design", "builtin_library", "builtin_material", "compare_models", "environment_sweep",
    "estimate_grip", "export_csv", "export_vtk", "generate_mesh", "material_library", "optimize_design",
    "parse_config", "required_voltage", "run_coupled", "validate_design", "validate_material", "voltage_sweep",
]
