"""Kaczmarz-type row-action solvers measured against a dense SVD oracle."""

from .errors import (
    DegenerateMatrix,
    DegenerateRow,
    InvalidInput,
    KaczlabError,
    NumericalFailure,
    ParseError,
    ZeroRow,
)
from .linalg import (
    SvdOracle,
    generalized_condition,
    generalized_solution,
    project_null,
    project_range,
    row_norms,
    spectral_condition,
    svd,
)
from .problems import (
    LinearProblem,
    add_noise,
    gen_gravity,
    gen_phillips,
    gen_shaw,
    gen_synthetic,
    load_problem,
    save_problem,
)
from .solvers import (
    IterationTrace,
    Partition,
    RowSelector,
    SolverConfig,
    kaczmarz_step,
    normalize_system,
    partition_rows,
    run,
    run_replicates,
    select_row,
)

__version__ = "0.1.0"
