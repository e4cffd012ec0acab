"""Numerical workbench for spacelike graphs of zero mean curvature.

Finite element solves of the Dirichlet problem for the maximal surface
equation (and its Euclidean sibling), the conserved-flux 1-form calculus
on triangulations, the conjugate correspondence between the two
equations, and the quantitative comparison machinery behind uniqueness
on unbounded domains.
"""

from .mesh import (ARTIFICIAL, DIRICHLET, INTERIOR, Mesh, build_annulus,
                   build_rectangle, build_strip, inner_region,
                   intrinsic_distance, load_mesh, save_mesh)
from .lorentz import (CoercivityConstants, CoercivityReport, SpacelikeError,
                      SpacelikePoint, area_density, coercivity_constants,
                      flux_coeffs, flux_gap_sq, flux_monotonicity,
                      minkowski_inner, normal_gap_sq, normalized_gradient,
                      sample_coercivity, unit_normal)
from .solver import (NonConvergenceError, SolveReport, SolverConfig,
                     cg_solve, energy, gradient_margin, load_field,
                     p1_gradient, residual, residual_norm, save_field,
                     solve, tangent_matrix)
from .forms import (ClosednessError, TopologyError, circle_polyline,
                    circulations, flux_form, integrate_potential,
                    line_integral, load_form, max_interior_circulation,
                    norm_line_integral, norm_sq_area_integral,
                    polyline_pieces, save_form, subset_boundary_integral,
                    vertex_circulation, wedge_integral,
                    weighted_line_integral)
from .duality import (conjugate_pair_coeffs, maximal_conjugate,
                      minimal_conjugate, round_trip_error)
from .uniqueness import (ComparisonVerdict, DecayTable, FluxScan,
                         LevelRegion, OdeComparison, blowup_radius,
                         comparison_verdict, flux_scan, level_region,
                         perturbation_decay, radial_grid,
                         region_gradient_margin, riccati_comparison,
                         riccati_rk4, save_scan)
from .expressions import Expression, ExpressionError, evaluate

__version__ = "0.1.0"
