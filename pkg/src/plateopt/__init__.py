"""Sandwich-plate bending FE, influence-matrix load placement, and
strain-direction trajectory analysis.

The package covers the full pipeline: build a structured laminated-plate
model from a TOML config, assemble/solve the plate-bending problem, sweep a
unit-load compliance (influence) matrix over candidate node sets, search for
the three-load placement that best reproduces a target deflection field,
and analyze the resulting strain-direction fields and trajectories.
"""

from .compliance import (ComplianceMatrix, default_evaluation_nodes,
                         load_matrix, save_matrix, sweep)
from .directions import (MODE_NAMES, POLICIES, DirectionField,
                         PrincipalDirections, StrainTensor2D, Trajectory,
                         direction_field, principal, save_direction_field,
                         save_trajectory, trace, zero_strain)
from .errors import (ConfigError, FieldError, FieldFormatError, MaterialError,
                     MeshError, OptimizationError, PlateOptError,
                     SingularSystemError, TraceError)
from .fe import (DisplacementField, LoadCase, StrainField, SystemMatrix,
                 assemble, extract_w, layer_stress_extrema, solve,
                 surface_strain)
from .fields import (ComparisonReport, ScalarField, Transform, compare,
                     field_from_mesh, load_field, min_strain_audit,
                     normalize_at, resample_to_mesh, save_field)
from .materials import (LaminateSpec, Layer, MaterialSpec, ShellStiffness,
                        laminate_stiffness)
from .mesh import (BoundaryConditions, Mesh, NodeSets, Rect, build_grid_mesh,
                   define_node_sets)
from .model import (AnalysisSettings, PlateModel, builtin_config_path,
                    builtin_configs, load_model, model_from_dict)
from .optimize import (Bounds, InnerSolution, OptimizationResult, ScaledLoads,
                       inner_solve, inner_solve_simplex, outer_search,
                       scale_to_allowable)
from .targets import TargetRecipe, TargetResult, generate

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "PlateOptError", "ConfigError", "MaterialError", "MeshError",
    "SingularSystemError", "FieldFormatError", "FieldError",
    "OptimizationError", "TraceError",
    # materials & mesh
    "MaterialSpec", "Layer", "LaminateSpec", "ShellStiffness",
    "laminate_stiffness", "Mesh", "Rect", "NodeSets", "BoundaryConditions",
    "build_grid_mesh", "define_node_sets",
    # FE
    "SystemMatrix", "LoadCase", "DisplacementField", "StrainField",
    "assemble", "solve", "extract_w", "surface_strain",
    "layer_stress_extrema",
    # compliance
    "ComplianceMatrix", "sweep", "default_evaluation_nodes",
    "save_matrix", "load_matrix",
    # optimizer
    "Bounds", "InnerSolution", "OptimizationResult", "ScaledLoads",
    "inner_solve", "inner_solve_simplex", "outer_search",
    "scale_to_allowable",
    # strain directions
    "StrainTensor2D", "PrincipalDirections", "DirectionField", "Trajectory",
    "POLICIES", "MODE_NAMES", "principal", "zero_strain", "direction_field",
    "trace", "save_direction_field", "save_trajectory",
    # fields & comparison
    "ScalarField", "Transform", "ComparisonReport", "field_from_mesh",
    "save_field", "load_field", "resample_to_mesh", "normalize_at",
    "compare", "min_strain_audit",
    # model & targets
    "PlateModel", "AnalysisSettings", "load_model", "model_from_dict",
    "builtin_configs", "builtin_config_path", "TargetRecipe", "TargetResult",
    "generate",
]
