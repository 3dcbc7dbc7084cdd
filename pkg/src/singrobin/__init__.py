"""Constructive solver for singular Robin problems with convection terms.

Builds a positive subsolution, minimizes the truncated frozen-gradient energy,
iterates the resulting solution map to a discrete fixed point, and certifies
every structural hypothesis and small-data condition along the way.
"""

from .errors import (
    ConfigError,
    ConstructionFailure,
    DegenerateSubsolution,
    DomainViolation,
    HypothesisViolation,
    InnerSolveFailure,
    InternalConsistencyError,
    InvalidArgument,
    NumericFailure,
    PreconditionViolation,
    RefusedInstance,
    SolverError,
    StagnationError,
    TruncationConsistencyError,
    UnsupportedProblem,
)
from .fem import (
    DiscreteField,
    Mesh1D,
    NormReport,
    build_mesh,
    estimate_c1,
    norms,
    read_field_csv,
    weak_residual,
    write_field_csv,
)
from .operators import (
    HypothesisReport,
    OperatorConstants,
    OperatorSpec,
    envelope_constants,
    estimate_c2,
    flux,
    jacobian,
    potential,
    uniqueness_modulus,
    validate_operator,
)
from .reactions import (
    ConditionCheck,
    ConditionVerdicts,
    ConvectionSpec,
    GrowthConstants,
    ReactionSpec,
    SingularSpec,
    check_small_data_conditions,
    eval_reactions,
    hypothesis_constants,
    truncated_reactions,
)
from .energy import (
    EnergyContext,
    MinimizeOutcome,
    build_subsolution,
    coercivity_bounds,
    energy_and_gradient,
    frozen_reaction_solve,
    minimize_energy,
    solve_frozen,
)
from .iteration import (
    IterationRecord,
    Prepared,
    ProblemInstance,
    SolveReport,
    Tolerances,
    c1_delta,
    compute_k_star,
    iterate_gamma,
    minimal_selection,
    prepare,
)
from .verification import (
    InequalityCheck,
    RecursionReport,
    UniquenessReport,
    check_sub_super,
    estimate_chain_replay,
    extremal_recursion_batch,
    lattice_test,
    lattice_tolerance,
    recursion_bound_formula,
    recursive_bound_test,
    singular_split_terms,
    uniqueness_multistart,
    verification_suite,
)

__version__ = "0.1.0"
