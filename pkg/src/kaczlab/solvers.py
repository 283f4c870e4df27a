"""Kaczmarz iteration engine.

Row indices are 0-based throughout: row ``i`` here is equation ``i + 1`` in
the usual 1-based notation, so the cyclic rule ``i = (k mod m) + 1`` becomes
``k % m``.

Random streams
--------------
Every replicate owns a ``numpy.random.Generator`` backed by PCG64 and seeded
with an integer. Replicate ``j`` of a run with base seed ``s`` uses
:func:`derive_seed` ``(s, 0, j)`` (the CLI reserves keys 1, 2 and 3 for x0,
noise and partition draws), which goes through ``SeedSequence`` spawn keys so
the streams are statistically independent. All random policies
consume exactly one uniform double per step, which lets :func:`run_replicates`
pre-draw uniforms in chunks and still reproduce :func:`select_row` draw for
draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput, ZeroRow
from .linalg import SvdOracle, as_vector, generalized_solution, project_null, row_norms, svd
from .problems import LinearProblem

CYCLIC = "cyclic"
WEIGHTED = "weighted"
UNIFORM = "uniform"
BLOCK = "block"
POLICIES = (CYCLIC, WEIGHTED, UNIFORM, BLOCK)

_CHUNK = 4096


def derive_seed(base_seed: int, *keys: int) -> int:
    """Derive an independent 64-bit seed from `base_seed` and integer keys."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint cover of the row indices ``0..m-1`` by nonempty blocks."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(np.asarray(blk, dtype=np.intp) for blk in self.blocks)
        if not blocks:
            raise InvalidInput("a partition needs at least one block")
        if any(blk.ndim != 1 or blk.size == 0 for blk in blocks):
            raise InvalidInput("every block must be a nonempty 1-D index array")
        allidx = np.concatenate(blocks)
        m = allidx.size
        if not np.array_equal(np.sort(allidx), np.arange(m)):
            raise InvalidInput("blocks must be pairwise disjoint and cover 0..m-1")
        object.__setattr__(self, "blocks", blocks)

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return sum(blk.size for blk in self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([blk.size for blk in self.blocks])

    def block_of(self, k: int) -> np.ndarray:
        """Active block for the step producing iterate ``k + 1``.

        The schedule starts at the first block and then takes
        ``l = (k + 1) mod r``, using block ``l`` (1-based) when ``l != 0``
        and the last block otherwise. That is plain cyclic order over blocks.
        """
        step = k + 1
        ell = step % self.r
        return self.blocks[(ell if ell != 0 else self.r) - 1]


def partition_rows(m: int, r: int, strategy: str = "contiguous", seed: int = 0) -> Partition:
    """Split ``0..m-1`` into `r` blocks.

    ``contiguous`` keeps index order with block sizes differing by at most
    one; ``strided`` puts row ``i`` into block ``i % r``; ``random`` (alias
    ``seeded-random``) shuffles with `seed` then splits contiguously.
    """
    if not 1 <= r <= m:
        raise InvalidInput(f"need 1 <= r <= m, got r={r}, m={m}")
    idx = np.arange(m)
    if strategy == "contiguous":
        blocks = np.array_split(idx, r)
    elif strategy == "strided":
        blocks = [idx[j::r] for j in range(r)]
    elif strategy in ("random", "seeded-random"):
        perm = np.random.default_rng(seed).permutation(m)
        blocks = [np.sort(blk) for blk in np.array_split(perm, r)]
    else:
        raise InvalidInput(f"unknown partition strategy {strategy!r}")
    return Partition(tuple(blocks))


@dataclass(frozen=True, eq=False)
class RowSelector:
    """Row-selection policy.

    Use the constructors :meth:`cyclic`, :meth:`weighted`, :meth:`uniform`
    and :meth:`block` rather than building instances directly.
    """

    policy: str
    m: int
    seed: int = 0
    weights: np.ndarray | None = None
    partition: Partition | None = None
    cdf: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise InvalidInput(f"unknown policy {self.policy!r}")
        if self.policy == WEIGHTED:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.m,) or np.any(w < 0) or not np.any(w > 0) or not np.all(np.isfinite(w)):
                raise InvalidInput("weights must be m finite nonnegative values, not all zero")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "cdf", np.cumsum(w))
        if self.policy == BLOCK:
            if self.partition is None or self.partition.m != self.m:
                raise InvalidInput("block policy needs a partition of the m rows")

    @classmethod
    def cyclic(cls, m: int) -> RowSelector:
        return cls(CYCLIC, m)

    @classmethod
    def weighted(cls, A, seed: int = 0) -> RowSelector:
        """Sample row ``i`` with probability ``||a_i||^2 / ||A||_F^2``."""
        A = np.asarray(A, dtype=np.float64)
        return cls(WEIGHTED, A.shape[0], seed, weights=row_norms(A) ** 2)

    @classmethod
    def from_weights(cls, weights, seed: int = 0) -> RowSelector:
        weights = np.asarray(weights, dtype=np.float64)
        return cls(WEIGHTED, weights.size, seed, weights=weights)

    @classmethod
    def uniform(cls, m: int, seed: int = 0) -> RowSelector:
        return cls(UNIFORM, m, seed)

    @classmethod
    def block(cls, partition: Partition, seed: int = 0) -> RowSelector:
        return cls(BLOCK, partition.m, seed, partition=partition)

    def with_seed(self, seed: int) -> RowSelector:
        return RowSelector(self.policy, self.m, seed, self.weights, self.partition)

    @property
    def is_random(self) -> bool:
        return self.policy != CYCLIC

    def probabilities(self, k: int = 0) -> np.ndarray:
        """Exact selection distribution at step `k`."""
        p = np.zeros(self.m)
        if self.policy == CYCLIC:
            p[k % self.m] = 1.0
        elif self.policy == WEIGHTED:
            p[:] = self.weights / self.cdf[-1]
        elif self.policy == UNIFORM:
            p[:] = 1.0 / self.m
        else:
            blk = self.partition.block_of(k)
            p[blk] = 1.0 / blk.size
        return p

    def rows_from_uniforms(self, k: int, u) -> np.ndarray:
        """Map uniforms in [0, 1) drawn at step `k` to row indices."""
        u = np.asarray(u, dtype=np.float64)
        if self.policy == CYCLIC:
            return np.full(u.shape, k % self.m, dtype=np.intp)
        if self.policy == WEIGHTED:
            # first index with cdf > target; zero-weight rows are never hit
            idx = np.searchsorted(self.cdf, u * self.cdf[-1], side="right")
            return np.minimum(idx, self.m - 1)
        if self.policy == UNIFORM:
            return np.minimum((u * self.m).astype(np.intp), self.m - 1)
        blk = self.partition.block_of(k)
        return blk[np.minimum((u * blk.size).astype(np.intp), blk.size - 1)]


def select_row(selector: RowSelector, k: int, rng: np.random.Generator | None = None) -> int:
    """Row used at step `k` (the step producing iterate ``k + 1``)."""
    if selector.policy == CYCLIC:
        return k % selector.m
    if rng is None:
        raise InvalidInput(f"policy {selector.policy!r} needs a random generator")
    return int(selector.rows_from_uniforms(k, rng.random()))


def kaczmarz_step(x, a, b_i: float) -> np.ndarray:
    """Project `x` onto the hyperplane ``{z : a . z = b_i}``."""
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    nrm_sq = float(a @ a)
    if nrm_sq == 0.0:
        raise ZeroRow("cannot project onto the hyperplane of a zero row")
    return x + ((b_i - a @ x) / nrm_sq) * a


def normalize_system(problem: LinearProblem) -> LinearProblem:
    """Left-scale by ``D = diag(1 / ||a_i||)`` so every row has unit norm."""
    norms = row_norms(problem.A)
    if np.any(norms == 0):
        raise ZeroRow(f"row {int(np.argmin(norms))} is zero")
    d = 1.0 / norms
    return LinearProblem(
        A=problem.A * d[:, None],
        b=problem.b * d,
        b_noisy=None if problem.b_noisy is None else problem.b_noisy * d,
        delta=problem.delta,
        x_true=problem.x_true,
        label=f"{problem.label}-normalized" if problem.label else "normalized",
        consistent=problem.consistent,
    )


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    `residual_tolerance` is checked only at recorded steps; zero disables
    early stopping.
    """

    x0: np.ndarray
    max_iterations: int
    residual_tolerance: float = 0.0
    record_every: int = 1
    store_iterates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64))
        if self.max_iterations < 1:
            raise InvalidInput("max_iterations must be >= 1")
        if self.record_every < 1:
            raise InvalidInput("record_every must be >= 1")
        if not self.residual_tolerance >= 0:
            raise InvalidInput("residual_tolerance must be >= 0")


@dataclass(frozen=True, eq=False)
class IterationTrace:
    """Recorded steps of one run.

    ``iterations[j]`` is the iteration count ``k`` of record ``j`` (record 0
    is the initial iterate, with ``rows[0] == -1``); ``rows[j]`` is the row
    whose projection produced that iterate; ``errors[j]`` is
    ``||x_k - P_N(A) x0 - x_dagger||`` against the exact right-hand side.
    """

    iterations: np.ndarray
    rows: np.ndarray
    errors: np.ndarray
    residuals: np.ndarray
    final_x: np.ndarray
    target: np.ndarray
    reason: str
    seed: int | None = None
    iterates: np.ndarray | None = None

    def __len__(self):
        return self.iterations.size


def _check_rows(A: np.ndarray) -> np.ndarray:
    nrm_sq = np.einsum("ij,ij->i", A, A)
    zero = np.flatnonzero(nrm_sq == 0)
    if zero.size:
        raise ZeroRow(f"row {int(zero[0])} is zero")
    return nrm_sq


def solution_target(problem: LinearProblem, oracle: SvdOracle, x0) -> np.ndarray:
    """Limit point ``P_N(A) x0 + x_dagger`` of the exact system."""
    return project_null(oracle, x0) + generalized_solution(oracle, problem.b)


def run_replicates(
    problem: LinearProblem,
    selector: RowSelector,
    config: SolverConfig,
    seeds: Sequence[int],
    use_noisy: bool = False,
    oracle: SvdOracle | None = None,
) -> list[IterationTrace]:
    """Run one Kaczmarz trajectory per seed, vectorized across replicates.

    Each replicate iterates on the same system from ``config.x0``; only the
    random row choices differ. Cyclic selection ignores the seeds.
    """
    A = problem.A
    m, n = A.shape
    if selector.m != m:
        raise InvalidInput(f"selector built for {selector.m} rows, problem has {m}")
    if not len(seeds):
        raise InvalidInput("need at least one seed")
    b = problem.rhs(use_noisy)
    x0 = as_vector(config.x0, n, "x0")
    nrm_sq = _check_rows(A)
    if oracle is None:
        oracle = svd(A)
    target = solution_target(problem, oracle, x0)

    R = len(seeds)
    N = config.max_iterations
    every = config.record_every
    n_rec = N // every + 1 + (1 if N % every else 0)
    rec_k = np.zeros(n_rec, dtype=np.int64)
    rec_rows = np.full((n_rec, R), -1, dtype=np.int64)
    rec_err = np.zeros((n_rec, R))
    rec_res = np.zeros((n_rec, R))
    rec_x = np.zeros((n_rec, R, n)) if config.store_iterates else None
    stop_at = np.full(R, -1)
    reasons = ["max_iterations"] * R

    X = np.tile(x0, (R, 1))
    active = np.ones(R, dtype=bool)
    rngs = [make_rng(s) for s in seeds] if selector.is_random else None
    tol = config.residual_tolerance

    def record(j, k, rows):
        rec_k[j] = k
        rec_rows[j] = rows
        rec_err[j] = np.linalg.norm(X - target, axis=1)
        rec_res[j] = np.linalg.norm(X @ A.T - b, axis=1)
        if rec_x is not None:
            rec_x[j] = X
        if tol > 0:
            done = active & (rec_res[j] <= tol)
            stop_at[done] = j
            for r_ in np.flatnonzero(done):
                reasons[r_] = "residual_tolerance"
            active[done] = False

    record(0, 0, -1)
    j = 1
    uniforms = None
    for k in range(N):
        if not active.any():
            break
        if rngs is not None:
            c = k % _CHUNK
            if c == 0:
                size = min(_CHUNK, N - k)
                uniforms = np.stack([g.random(size) for g in rngs])
            rows = selector.rows_from_uniforms(k, uniforms[:, c])
        else:
            rows = np.full(R, k % m, dtype=np.intp)
        Ai = A[rows]
        coef = (b[rows] - np.einsum("ij,ij->i", Ai, X)) / nrm_sq[rows]
        if tol > 0:
            coef = coef * active
        X += coef[:, None] * Ai
        kk = k + 1
        if kk % every == 0 or kk == N:
            record(j, kk, rows)
            j += 1

    traces = []
    for r_ in range(R):
        last = stop_at[r_] if stop_at[r_] >= 0 else j - 1
        sl = slice(0, last + 1)
        traces.append(IterationTrace(
            iterations=rec_k[sl].copy(),
            rows=rec_rows[sl, r_].copy(),
            errors=rec_err[sl, r_].copy(),
            residuals=rec_res[sl, r_].copy(),
            final_x=X[r_].copy(),
            target=target,
            reason=reasons[r_],
            seed=int(seeds[r_]) if selector.is_random else None,
            iterates=None if rec_x is None else rec_x[sl, r_].copy(),
        ))
    return traces


def run(
    problem: LinearProblem,
    selector: RowSelector,
    config: SolverConfig,
    use_noisy: bool = False,
    oracle: SvdOracle | None = None,
) -> IterationTrace:
    """Run Kaczmarz for ``config.max_iterations`` steps using ``selector.seed``."""
    return run_replicates(problem, selector, config, [selector.seed], use_noisy, oracle)[0]


@dataclass(frozen=True)
class Aggregate:
    iterations: np.ndarray
    mean_sq: np.ndarray
    min_sq: np.ndarray
    max_sq: np.ndarray


def aggregate_traces(traces: Sequence[IterationTrace]) -> Aggregate:
    """Mean, min and max of ``e_k^2`` across replicates on a shared record grid.

    Traces that stopped early are truncated to the shortest common grid.
    """
    if not traces:
        raise InvalidInput("nothing to aggregate")
    length = min(len(t) for t in traces)
    its = traces[0].iterations[:length]
    for t in traces[1:]:
        if not np.array_equal(t.iterations[:length], its):
            raise InvalidInput("traces are recorded on different grids")
    sq = np.stack([t.errors[:length] ** 2 for t in traces])
    return Aggregate(its.copy(), sq.mean(axis=0), sq.min(axis=0), sq.max(axis=0))
