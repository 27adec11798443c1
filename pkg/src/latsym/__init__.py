"""Lie point symmetries of difference schemes on transforming lattices."""

__version__ = "0.1.0"

from .catalog import CatalogEntry, STANDARD_RUNS, catalog_ids, instantiate
from .continuum import LimitProbe, leading_order_coefficients, verify_change_of_variables
from .dsl import Expression, evaluate, eval_with_gradient, parse_expression
from .errors import LatsymError
from .finder import FinderOptions, SymmetryBasis, find_for_entry, find_symmetries, structure_constants
from .flow import FlowOptions, integrate_flow, transform_and_verify, transform_family
from .lattice import (
    GridSolution,
    Scheme,
    StencilConfiguration,
    Window,
    grid_residuals,
    jacobian_nondegeneracy,
    load_scheme_file,
    propagate_grid,
    residuals,
    solve_on_shell,
)
from .symmetry import AnsatzBasis, ExprField, VectorField, lie_bracket, parse_field, prolonged_action

__all__ = [
    "AnsatzBasis", "CatalogEntry", "Expression", "ExprField", "FinderOptions", "FlowOptions",
    "GridSolution", "LatsymError", "LimitProbe", "STANDARD_RUNS", "Scheme", "StencilConfiguration",
    "SymmetryBasis", "VectorField", "Window", "catalog_ids", "eval_with_gradient", "evaluate",
    "find_for_entry", "find_symmetries", "grid_residuals", "instantiate", "integrate_flow",
    "jacobian_nondegeneracy", "leading_order_coefficients", "lie_bracket", "load_scheme_file",
    "parse_expression", "parse_field", "prolonged_action", "propagate_grid", "residuals",
    "solve_on_shell", "structure_constants", "transform_and_verify", "transform_family",
    "verify_change_of_variables",
]
