"""Numerical connections, holonomy and curvature on trivialized principal bundles."""
from .bundle import (
    BaseChart,
    ConnectionData,
    DomainError,
    LiftedPath,
    horizontal_lift,
    parallel_transport,
    right_invariance_residual,
    theta_eval,
)
from .curvature import (
    ambrose_singer_verify,
    curvature_at,
    plaques_identity_residual,
    reduced_algebra,
    reduction_check,
    sample_curvature_along_horizontal,
    small_loop_oracle,
)
from .holonomy import axiom_suite, flatness_check, holonomy_element, loops_equivalent
from .liealg import (
    AlgebraBasis,
    AlgebraElement,
    GroupElement,
    SubalgebraSpan,
    ad_stability_check,
    adjoint,
    bracket,
    bracket_closure,
    exp_matrix,
    product_integral,
)
from .paths import Loop, SmoothPath, concat, reverse
from .scenarios import BUILTINS, load_scenario

__version__ = "0.1.0"
