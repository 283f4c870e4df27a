"""Theoretical error estimates for Kaczmarz-type methods and exact identities
used to check them.

All curves bound ``E[e_k^2]`` where ``e_k = ||x_k - P_N(A) x0 - x_dagger||``,
indexed so that ``values[k]`` refers to iterate ``k``; ``values[0]`` carries
the additive term as well, following the closed form of each estimate.

Two readings of the per-row pseudoinverse norm ``||(a_i^T P_i)^+||`` are
available:

``literal``
    pseudoinverse of ``x -> a_i^T x`` restricted to N(A)^perp. Rows of A lie
    in N(A)^perp, so this equals ``1 / ||a_i||`` and every per-row rate
    factor collapses to 0.
``restricted-sup``
    ``sup ||x|| / |a_i^T x|`` over nonzero ``x`` in N(A)^perp, which is
    infinite once the row space has dimension above one; the rate factor is
    then 1 and the estimate is vacuous.

Neither reading yields a meaningful contraction, so curves built from these
factors carry ``status="degenerate"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRow, InvalidInput, ZeroRow
from .linalg import (
    SvdOracle,
    as_vector,
    frobenius_norm,
    generalized_condition,
    generalized_solution,
    project_null,
    project_range,
    row_norms,
)
from .problems import LinearProblem
from .solvers import BLOCK, WEIGHTED, Partition, RowSelector

LITERAL = "literal"
RESTRICTED_SUP = "restricted-sup"
OK = "ok"
DEGENERATE = "degenerate"


@dataclass(frozen=True, eq=False)
class BoundInputs:
    """Problem-dependent quantities shared by every estimate.

    ``sigma_min`` is the smallest singular value above the rank tolerance,
    i.e. ``1 / pinv_norm``. ``delta`` is ``||b_noisy - b||`` for noisy runs and
    ``None`` otherwise.
    """

    e0_sq: float
    kappa: float
    frob_sq: float
    offrange_sq: float
    offrange_normalized_sq: float
    pinv_norm: float
    sigma_min: float
    max_rownorm_sq: float
    m: int
    rownorm_sq: np.ndarray
    restricted_pinv_sq: np.ndarray
    rank: int
    delta: float | None = None


@dataclass(frozen=True, eq=False)
class BoundCurve:
    """A bound on ``E[e_k^2]`` for ``k = 0..len(values)-1``."""

    source: str
    values: np.ndarray
    rate: float
    additive: float
    status: str = OK

    def at(self, iterations) -> np.ndarray:
        """Values on a (possibly thinned) iteration grid."""
        return self.values[np.asarray(iterations, dtype=np.intp)]


def bound_inputs(problem: LinearProblem, oracle: SvdOracle, x0, use_noisy: bool = False) -> BoundInputs:
    """Collect every quantity the estimates need for a run started at `x0`."""
    A = problem.A
    m, n = A.shape
    x0 = as_vector(x0, n, "x0")
    b_used = problem.rhs(use_noisy)
    e0 = x0 - project_null(oracle, x0) - generalized_solution(oracle, problem.b)
    off = b_used - project_range(oracle, b_used)
    norms = row_norms(A)
    if np.any(norms == 0):
        raise ZeroRow("estimates need nonzero rows")
    db = b_used / norms
    off_norm = db - project_range(oracle, db)
    basis = oracle.row_basis
    restricted = np.array([row_restricted_pinv_norm(a, basis) for a in A]) ** 2
    delta = float(np.linalg.norm(problem.b_noisy - problem.b)) if use_noisy else None
    return BoundInputs(
        e0_sq=float(e0 @ e0),
        kappa=generalized_condition(A, oracle),
        frob_sq=frobenius_norm(A) ** 2,
        offrange_sq=float(off @ off),
        offrange_normalized_sq=float(off_norm @ off_norm),
        pinv_norm=oracle.pinv_norm,
        sigma_min=oracle.sigma_rank,
        max_rownorm_sq=float(np.max(norms) ** 2),
        m=m,
        rownorm_sq=norms**2,
        restricted_pinv_sq=restricted,
        rank=oracle.rank,
        delta=delta,
    )


def _geometric(rate: float, e0_sq: float, k_max: int, additive: float) -> np.ndarray:
    k = np.arange(k_max + 1)
    return rate**k * e0_sq + additive


def rk_rate(inputs: BoundInputs) -> float:
    return 1.0 - 1.0 / inputs.kappa**2


def rk_bound(inputs: BoundInputs, k_max: int) -> BoundCurve:
    """``(1 - 1/kappa^2)^k e0^2 + ||(I - Q) b||^2 / ||A||_F^2`` for randomized Kaczmarz."""
    rate = rk_rate(inputs)
    add = inputs.offrange_sq / inputs.frob_sq
    return BoundCurve("rk", _geometric(rate, inputs.e0_sq, k_max, add), rate, add)


def rk_stationary_level(inputs: BoundInputs) -> float:
    """Long-run level ``||A^+||^2 ||(I - Q) b||^2`` obtained by summing the
    per-step additive term over all steps. For comparison with
    :func:`rk_bound`'s additive term on inconsistent systems."""
    return inputs.pinv_norm**2 * inputs.offrange_sq


def rk_prior_bound(inputs: BoundInputs, k_max: int, noisy: bool = False) -> BoundCurve:
    """Classical randomized Kaczmarz estimate, plus ``delta^2 / sigma_min^2`` for noisy data."""
    rate = rk_rate(inputs)
    add = 0.0
    if noisy:
        if inputs.delta is None:
            raise InvalidInput("noisy prior bound needs a noise level delta")
        add = inputs.delta**2 / inputs.sigma_min**2
    return BoundCurve("rk_prior", _geometric(rate, inputs.e0_sq, k_max, add), rate, add)


def normalized_rate(inputs: BoundInputs) -> float:
    return 1.0 - 1.0 / (inputs.m * inputs.max_rownorm_sq * inputs.pinv_norm**2)


def normalized_bound(inputs: BoundInputs, k_max: int, consistent: bool = True) -> BoundCurve:
    """Estimate for uniform sampling on the row-normalized system, stated in terms of A."""
    rate = normalized_rate(inputs)
    add = 0.0 if consistent else inputs.offrange_normalized_sq / inputs.frob_sq
    return BoundCurve("normalized", _geometric(rate, inputs.e0_sq, k_max, add), rate, add)


def row_restricted_pinv_norm(a, rowspace_basis) -> float:
    """Spectral norm of the pseudoinverse of ``x -> a . x`` restricted to span(basis).

    Equals ``1 / ||B^T a||`` for an orthonormal basis ``B``.
    """
    a = np.asarray(a, dtype=np.float64)
    proj = np.linalg.norm(np.asarray(rowspace_basis).T @ a)
    if proj == 0.0:
        raise DegenerateRow("row is orthogonal to the row space")
    return 1.0 / float(proj)


def restricted_sup_ratio(a, rowspace_basis) -> float:
    """``sup ||x|| / |a . x|`` over nonzero ``x`` in span(basis).

    Finite only when the span is one-dimensional.
    """
    B = np.asarray(rowspace_basis)
    if B.shape[1] > 1:
        return float("inf")
    return row_restricted_pinv_norm(a, B)


def _row_factors(A: np.ndarray, oracle: SvdOracle, reading: str) -> np.ndarray:
    basis = oracle.row_basis
    if reading == LITERAL:
        rho = np.array([row_restricted_pinv_norm(a, basis) for a in A])
    elif reading == RESTRICTED_SUP:
        rho = np.array([restricted_sup_ratio(a, basis) for a in A])
    else:
        raise InvalidInput(f"unknown reading {reading!r}")
    with np.errstate(divide="ignore"):
        return 1.0 - 1.0 / (row_norms(A) ** 2 * rho**2)


def row_rate_factors(problem: LinearProblem, oracle: SvdOracle, reading: str = LITERAL) -> np.ndarray:
    """Per-row factors ``1 - 1 / (||a_i||^2 ||(a_i^T P_i)^+||^2)``."""
    return np.clip(_row_factors(problem.A, oracle, reading), 0.0, 1.0)


def _is_consistent(problem: LinearProblem, oracle: SvdOracle, b) -> bool:
    off = b - project_range(oracle, b)
    return bool(np.linalg.norm(off) <= 1e-8 * max(np.linalg.norm(b), np.finfo(float).tiny))


def cyclic_bound(problem: LinearProblem, oracle: SvdOracle, k_max: int, x0=None,
                 reading: str = LITERAL) -> BoundCurve:
    """Deterministic per-step estimate for cyclic Kaczmarz using the worst row factor."""
    if not _is_consistent(problem, oracle, problem.b):
        raise InvalidInput("cyclic estimate requires a consistent system")
    n = problem.shape[1]
    x0 = np.zeros(n) if x0 is None else as_vector(x0, n, "x0")
    e0 = x0 - project_null(oracle, x0) - generalized_solution(oracle, problem.b)
    rate = float(np.max(row_rate_factors(problem, oracle, reading)))
    return BoundCurve("cyclic", _geometric(rate, float(e0 @ e0), k_max, 0.0), rate, 0.0, DEGENERATE)


def _block_factors(inputs: BoundInputs, reading: str) -> np.ndarray:
    if reading == LITERAL:
        rho_sq = inputs.restricted_pinv_sq
    elif reading == RESTRICTED_SUP:
        rho_sq = np.full(inputs.m, np.inf) if inputs.rank > 1 else inputs.restricted_pinv_sq
    else:
        raise InvalidInput(f"unknown reading {reading!r}")
    with np.errstate(divide="ignore"):
        # "min 1/(..)" over a set is the largest per-row factor
        return np.clip(1.0 - 1.0 / (inputs.rownorm_sq * rho_sq), 0.0, 1.0)


def block_bound(inputs: BoundInputs, partition: Partition, k_max: int, consistent: bool = True,
                form: str = "pooled", reading: str = LITERAL) -> BoundCurve:
    """Estimates for block-randomized Kaczmarz over `partition`.

    ``form="pooled"`` uses the rate ``1 - min_i 1/(||a_i||^2 ||(a_i^T P_i)^+||^2)``
    over all rows, with additive term
    ``max||a_i||^2 max rho_i^2 / (min||a_i||^2 min_c #S_c) * ||(I-Q)b||^2``.

    ``form="per-block"`` multiplies per-block rates along the cyclic block
    schedule for consistent systems; for inconsistent ones it uses the rate
    of the normalized estimate with additive term
    ``(m / #S_sel) * delta^2 / sigma_min^2``, where ``delta`` is
    ``||(I - Q) b||`` and ``#S_sel`` the smallest block size.
    """
    if partition.m != inputs.m:
        raise InvalidInput("partition does not match the system")
    factors = _block_factors(inputs, reading)
    rho_sq = inputs.restricted_pinv_sq
    if form == "pooled":
        rate = float(np.max(factors))
        add = 0.0
        if not consistent:
            add = (np.max(inputs.rownorm_sq) * np.max(rho_sq)
                   / (np.min(inputs.rownorm_sq) * np.min(partition.sizes)) * inputs.offrange_sq)
        values = _geometric(rate, inputs.e0_sq, k_max, add)
        return BoundCurve("block", values, rate, float(add), DEGENERATE)
    if form != "per-block":
        raise InvalidInput(f"unknown form {form!r}")
    if consistent:
        per_block = np.array([np.max(factors[blk]) for blk in partition.blocks])
        sched = per_block[np.arange(k_max) % partition.r]
        values = inputs.e0_sq * np.concatenate(([1.0], np.cumprod(sched)))
        return BoundCurve("block", values, float(np.max(per_block)), 0.0, DEGENERATE)
    rate = normalized_rate(inputs)
    add = inputs.m / np.min(partition.sizes) * inputs.offrange_sq / inputs.sigma_min**2
    return BoundCurve("block", _geometric(rate, inputs.e0_sq, k_max, add), rate, float(add), OK)


def step_identity(problem: LinearProblem, oracle: SvdOracle, x_k, i: int, b=None) -> tuple[float, float]:
    """Both sides of the exact one-step error identity for a projection onto row `i`.

    Returns ``(lhs, rhs)`` with ``lhs = e_{k+1}^2`` from an actual step and
    ``rhs = e_k^2 - (a_i . d_k / ||a_i||)^2 + ((I - Q) b)_i^2 / ||a_i||^2``,
    where ``d_k = x_k - P_N(A) x_k - x_dagger`` and ``x_dagger`` solves the
    system with right-hand side `b` (default: the exact one).
    """
    A = problem.A
    b = problem.b if b is None else np.asarray(b, dtype=np.float64)
    x_k = as_vector(x_k, A.shape[1], "x_k")
    target = project_null(oracle, x_k) + generalized_solution(oracle, b)
    a = A[i]
    nrm_sq = float(a @ a)
    x_next = x_k + ((b[i] - a @ x_k) / nrm_sq) * a
    d = x_k - target
    d_next = x_next - target
    off = b - project_range(oracle, b)
    lhs = float(d_next @ d_next)
    rhs = float(d @ d) - float(a @ d) ** 2 / nrm_sq + off[i] ** 2 / nrm_sq
    return lhs, rhs


def expected_step_identity(problem: LinearProblem, oracle: SvdOracle, x_k, selector: RowSelector,
                           k: int = 0) -> tuple[float, float]:
    """Conditional expectation of ``e_{k+1}^2`` by enumeration versus closed form.

    ``lhs`` averages the exact post-step error over every row with its
    selection probability. ``rhs`` is
    ``e_k^2 - ||A d_k||^2/||A||_F^2 + ||(I-Q)b||^2/||A||_F^2`` for weighted
    sampling, and the within-block averages of the per-row terms for the
    block policy at step `k`.
    """
    if selector.policy not in (WEIGHTED, BLOCK):
        raise InvalidInput(f"policy {selector.policy!r} has no enumerable closed form here")
    A, b = problem.A, problem.b
    x_k = as_vector(x_k, A.shape[1], "x_k")
    target = project_null(oracle, x_k) + generalized_solution(oracle, b)
    d = x_k - target
    e_sq = float(d @ d)
    off = b - project_range(oracle, b)
    nrm_sq = row_norms(A) ** 2
    p = selector.probabilities(k)

    lhs = 0.0
    for i in np.flatnonzero(p):
        a = A[i]
        x_next = x_k + ((b[i] - a @ x_k) / nrm_sq[i]) * a
        dn = x_next - target
        lhs += p[i] * float(dn @ dn)

    if selector.policy == WEIGHTED:
        if not np.allclose(p, nrm_sq / nrm_sq.sum(), rtol=1e-12, atol=0):
            raise InvalidInput("closed form assumes weights equal to squared row norms")
        frob_sq = nrm_sq.sum()
        Ad = A @ d
        rhs = e_sq - float(Ad @ Ad) / frob_sq + float(off @ off) / frob_sq
    else:
        blk = selector.partition.block_of(k)
        proj = (A[blk] @ d) ** 2 / nrm_sq[blk]
        rhs = e_sq - proj.mean() + (off[blk] ** 2 / nrm_sq[blk]).mean()
    return lhs, float(rhs)


def angle_gap_bound(a1, a2, e_k: float) -> float:
    """``sqrt(2 - 2 cos^2 theta) * e_k`` with ``theta`` the angle between rows `a1` and `a2`."""
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    n1, n2 = np.linalg.norm(a1), np.linalg.norm(a2)
    if n1 == 0 or n2 == 0:
        raise ZeroRow("angle undefined for a zero row")
    cos = float(np.clip((a1 @ a2) / (n1 * n2), -1.0, 1.0))
    return float(np.sqrt(max(2.0 - 2.0 * cos * cos, 0.0)) * e_k)


def semi_convergence_scan(trace) -> tuple[int, float, float]:
    """Locate the minimum of the error curve.

    Accepts an :class:`~kaczlab.solvers.IterationTrace` or a plain sequence
    of errors. Returns ``(k_star, e_min, rebound)`` with ties resolved to the
    earliest index and ``rebound = e_last / e_min``.
    """
    if hasattr(trace, "errors"):
        errors = np.asarray(trace.errors, dtype=np.float64)
        its = np.asarray(trace.iterations)
    else:
        errors = np.asarray(trace, dtype=np.float64)
        its = np.arange(errors.size)
    if errors.size == 0:
        raise InvalidInput("empty trace")
    j = int(np.argmin(errors))
    e_min = float(errors[j])
    rebound = float(errors[-1] / e_min) if e_min > 0 else (1.0 if errors[-1] == 0 else float("inf"))
    return int(its[j]), e_min, rebound
