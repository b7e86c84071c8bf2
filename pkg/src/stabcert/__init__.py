"""Stabilization certificates for parabolic equations on discretized domains.

The package answers, for a discretized generator H (fractional Laplacian,
shifted harmonic oscillator, or Schrodinger with a confining potential) and
an observation set E, three related questions: does E satisfy a weak
observability inequality with explicit constants (certify), is E thick or
weakly thick (geometry), and which explicit feedback stabilizes the
equation (feedback).  Necessity is handled by falsification probes that
refute over-optimistic observability claims (probes).
"""

__version__ = "0.1.0"

from .domain import (
    DomainMismatchError,
    GridDomain,
    GridFunction,
    from_callable,
    grid_function,
    inner_product,
    make_grid,
    norm,
    restrict_norm,
)
from .geometry import (
    BallComplement,
    Custom,
    Empty,
    Full,
    HalfSpace,
    PeriodicSlabs,
    SetIndicator,
    check_thick,
    check_weakly_thick,
    make_set,
)
from .operators import (
    FractionalLaplacian,
    Schrodinger,
    ShiftedHermite,
    SpectralDecomposition,
    diagonalize,
    semigroup_apply,
    semigroup_norm,
)
from .specineq import best_constant, fit_growth, spectral_constant_curve
from .certify import (
    Certificate,
    CriterionConstants,
    build_certificate,
    certify_end_to_end,
    recurrence_check,
    weak_observability_check,
)
from .feedback import (
    build_damping_feedback,
    build_finite_rank_feedback,
    damping_decay_bound,
    simulate_decay,
)
from .probes import (
    ObservationClaim,
    build_kernel,
    choose_l0,
    falsify_hermite_ground_state,
    falsify_weak_observability,
    kernel_probe_solution,
    make_probe,
)
