"""Numerical verification of affine revolution for smooth origin-symmetric star bodies."""

from .body_core import (BoundaryPoint, Hyperplane, Jet3, SectionBody, SmoothBody, boundary_project,
                        canonical_jet, make_ellipsoid, make_perturbed_body, make_revolution_body,
                        second_fundamental_form, section)
from .form_algebra import (CubicForm, LinearFactorization, QuadraticForm, divide_by_linear, linear_factors,
                           orthogonal_invariants, quadratic_factor_split, restrict, rotational_fit)
from .symmetry import (classify_symmetry, detect_revolution, embedded_so_generators, isotropic_normalize,
                       lemma7_check, lie_bracket_closure, reflect_across, reflection_composition_check,
                       rotate_in_plane)
from .blaschke import blaschke_at, cubic_C_profile, fit_quadric, mpb_classify
from .verifier import BodySpec, find_max_radius_point, run_verify

__version__ = "0.1.0"
