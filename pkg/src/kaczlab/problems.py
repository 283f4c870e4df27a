"""Test problems: discretized first-kind Fredholm equations, synthetic systems,
noise models and a plain-text problem file format.

All three integral-equation generators use the midpoint rule on a shared
grid for ``s`` and ``t`` and set ``b = A @ x_true``, so the discrete system
is consistent up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidInput, ParseError
from .linalg import as_matrix, as_vector

FILE_MAGIC = "kaczlab-problem v1"
NOISE_MODES = ("paper-offset", "signed-uniform")


@dataclass(frozen=True, eq=False)
class LinearProblem:
    """A dense system ``A x = b`` with optional noisy data and known solution.

    Attributes
    ----------
    A : ndarray, shape (m, n)
    b : ndarray, shape (m,)
        Exact right-hand side.
    b_noisy : ndarray or None
        Perturbed right-hand side; requires `delta`.
    delta : float or None
        Noise level used to produce `b_noisy`.
    x_true : ndarray or None
        Generating solution.
    label : str
    consistent : bool
        Whether ``b`` lies in the range of ``A`` by construction.
    """

    A: np.ndarray
    b: np.ndarray
    b_noisy: np.ndarray | None = None
    delta: float | None = None
    x_true: np.ndarray | None = None
    label: str = ""
    consistent: bool = True

    def __post_init__(self):
        A = as_matrix(self.A)
        m, n = A.shape
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", as_vector(self.b, m, "b"))
        if self.b_noisy is not None:
            if self.delta is None:
                raise InvalidInput("b_noisy given without delta")
            object.__setattr__(self, "b_noisy", as_vector(self.b_noisy, m, "b_noisy"))
        if self.delta is not None:
            if not self.delta >= 0:
                raise InvalidInput(f"delta must be >= 0, got {self.delta}")
            object.__setattr__(self, "delta", float(self.delta))
        if self.x_true is not None:
            object.__setattr__(self, "x_true", as_vector(self.x_true, n, "x_true"))

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def rhs(self, use_noisy: bool = False) -> np.ndarray:
        if not use_noisy:
            return self.b
        if self.b_noisy is None:
            raise InvalidInput(f"problem {self.label!r} has no noisy right-hand side")
        return self.b_noisy

    def with_noise(self, delta: float, mode: str = "paper-offset", seed: int = 0) -> LinearProblem:
        return replace(self, b_noisy=add_noise(self.b, delta, mode, seed), delta=delta)


def _midpoints(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    h = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * h, h


def gen_phillips(n: int) -> LinearProblem:
    """Convolution kernel ``phi(s - t)`` on [-6, 6] with ``phi(u) = 1 + cos(pi u / 3)``
    for ``|u| < 3`` and zero elsewhere. Mildly ill-posed."""
    if n < 2:
        raise InvalidInput(f"phillips needs n >= 2, got {n}")
    t, h = _midpoints(-6.0, 6.0, n)

    def phi(u):
        return np.where(np.abs(u) < 3.0, 1.0 + np.cos(np.pi * u / 3.0), 0.0)

    A = h * phi(t[:, None] - t[None, :])
    x = phi(t)
    return LinearProblem(A=A, b=A @ x, x_true=x, label=f"phillips-{n}")


def gen_gravity(n: int, d: float = 0.25) -> LinearProblem:
    """1-D gravity surveying on [0, 1]: ``K(s, t) = d (d^2 + (s - t)^2)^(-3/2)``."""
    if n < 2:
        raise InvalidInput(f"gravity needs n >= 2, got {n}")
    if not d > 0:
        raise InvalidInput(f"gravity depth must be > 0, got {d}")
    t, h = _midpoints(0.0, 1.0, n)
    diff = t[:, None] - t[None, :]
    A = h * d * (d * d + diff * diff) ** -1.5
    x = np.sin(np.pi * t) + 0.5 * np.sin(2.0 * np.pi * t)
    return LinearProblem(A=A, b=A @ x, x_true=x, label=f"gravity-{n}")


def gen_shaw(n: int) -> LinearProblem:
    """1-D image restoration on [-pi/2, pi/2]:
    ``K(s, t) = (cos s + cos t)^2 (sin u / u)^2`` with ``u = pi (sin s + sin t)``."""
    if n < 2 or n % 2:
        raise InvalidInput(f"shaw needs an even n >= 2, got {n}")
    t, h = _midpoints(-np.pi / 2, np.pi / 2, n)
    c, s = np.cos(t), np.sin(t)
    # np.sinc(x) = sin(pi x) / (pi x), with the removable singularity handled
    A = h * (c[:, None] + c[None, :]) ** 2 * np.sinc(s[:, None] + s[None, :]) ** 2
    x = 2.0 * np.exp(-6.0 * (t - 0.8) ** 2) + np.exp(-2.0 * (t + 0.5) ** 2)
    return LinearProblem(A=A, b=A @ x, x_true=x, label=f"shaw-{n}")


def gen_synthetic(m: int, n: int, rank: int, consistent: bool = True, seed: int = 0) -> LinearProblem:
    """Random rank-`rank` system with singular values log-spaced in [1e-2, 1].

    The inconsistent variant adds a component orthogonal to R(A) whose norm
    is a tenth of ``||A x_true||``.
    """
    if not 1 <= rank <= min(m, n):
        raise InvalidInput(f"rank must lie in [1, min(m, n)] = [1, {min(m, n)}], got {rank}")
    if not consistent and rank == m:
        raise InvalidInput("an inconsistent system needs rank < m (R(A)^perp is trivial)")
    rng = np.random.default_rng(seed)
    sigma = np.logspace(0.0, -2.0, rank)
    while True:
        U, _ = np.linalg.qr(rng.standard_normal((m, rank)))
        V, _ = np.linalg.qr(rng.standard_normal((n, rank)))
        A = (U * sigma) @ V.T
        if np.min(np.linalg.norm(A, axis=1)) >= 1e-8:
            break
    x = rng.standard_normal(n)
    b = A @ x
    if not consistent:
        w = rng.standard_normal(m)
        w -= U @ (U.T @ w)
        b = b + w * (0.1 * np.linalg.norm(b) / np.linalg.norm(w))
    kind = "consistent" if consistent else "inconsistent"
    return LinearProblem(A=A, b=b, x_true=x, consistent=consistent,
                         label=f"synthetic-{m}x{n}-r{rank}-{kind}-s{seed}")


def add_noise(b, delta: float, mode: str = "paper-offset", seed: int = 0) -> np.ndarray:
    """Perturb `b` at relative level `delta` of ``max |b_i|``.

    ``paper-offset`` adds the same offset ``delta * max|b_i|`` to every
    component. ``signed-uniform`` scales that offset by independent
    uniform draws in [-1, 1].
    """
    b = np.asarray(b, dtype=np.float64)
    if not delta >= 0:
        raise InvalidInput(f"delta must be >= 0, got {delta}")
    if mode not in NOISE_MODES:
        raise InvalidInput(f"unknown noise mode {mode!r}; expected one of {NOISE_MODES}")
    scale = delta * float(np.max(np.abs(b))) if b.size else 0.0
    if mode == "paper-offset":
        return b + scale
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, size=b.shape)
    return b + scale * u


GENERATORS = {
    "phillips": gen_phillips,
    "gravity": gen_gravity,
    "shaw": gen_shaw,
}


# ---------------------------------------------------------------- file format

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def save_problem(problem: LinearProblem, path) -> None:
    """Write `problem` in the ``kaczlab-problem v1`` text format."""
    m, n = problem.shape
    lines = [FILE_MAGIC, f"{m} {n}"]
    if problem.label:
        lines.append(f"label {problem.label}")
    lines.append(f"consistent {int(problem.consistent)}")
    lines.extend(" ".join(_fmt(v) for v in row) for row in problem.A)
    lines.append("b")
    lines.extend(_fmt(v) for v in problem.b)
    if problem.x_true is not None:
        lines.append("x_true")
        lines.extend(_fmt(v) for v in problem.x_true)
    if problem.b_noisy is not None:
        lines.append(f"b_noisy delta {_fmt(problem.delta)}")
        lines.extend(_fmt(v) for v in problem.b_noisy)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_float(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", lineno) from None


def load_problem(path) -> LinearProblem:
    """Read a problem written by :func:`save_problem` (or by hand)."""
    raw = Path(path).read_text().splitlines()
    # (lineno, tokens) with comments and blank lines dropped
    lines = []
    for lineno, text in enumerate(raw, start=1):
        text = text.split("#", 1)[0].strip()
        if text:
            lines.append((lineno, text))
    if not lines or lines[0][1] != FILE_MAGIC:
        raise ParseError(f"missing header {FILE_MAGIC!r}", lines[0][0] if lines else 1)
    if len(lines) < 2:
        raise ParseError("missing dimension line", lines[0][0])
    lineno, text = lines[1]
    dims = text.split()
    if len(dims) != 2 or not all(d.isdigit() for d in dims):
        raise ParseError(f"expected 'm n', got {text!r}", lineno)
    m, n = int(dims[0]), int(dims[1])
    if m < 1 or n < 1:
        raise ParseError(f"dimensions must be positive, got {m} x {n}", lineno)

    pos = 2
    label, consistent = "", True
    while pos < len(lines):
        lineno, text = lines[pos]
        key, _, rest = text.partition(" ")
        if key == "label":
            label = rest.strip()
        elif key == "consistent":
            if rest.strip() not in ("0", "1"):
                raise ParseError(f"consistent flag must be 0 or 1, got {rest!r}", lineno)
            consistent = rest.strip() == "1"
        else:
            break
        pos += 1

    A = np.empty((m, n))
    for i in range(m):
        if pos >= len(lines):
            raise ParseError(f"expected {m} matrix rows, found {i}", len(raw))
        lineno, text = lines[pos]
        toks = text.split()
        if toks[0] in ("b", "x_true", "b_noisy"):
            raise ParseError(f"expected {m} matrix rows, found {i}", lineno)
        if len(toks) != n:
            raise ParseError(f"matrix row {i + 1} has {len(toks)} entries, expected {n}", lineno)
        A[i] = [_parse_float(tok, lineno) for tok in toks]
        pos += 1

    sections: dict[str, tuple[list[float], int]] = {}
    noisy_delta = None
    current = None
    for lineno, text in lines[pos:]:
        toks = text.split()
        head = toks[0]
        if head in ("b", "x_true", "b_noisy"):
            if head in sections:
                raise ParseError(f"duplicate section {head!r}", lineno)
            if head == "b_noisy":
                if len(toks) != 3 or toks[1] != "delta":
                    raise ParseError("expected 'b_noisy delta <value>'", lineno)
                noisy_delta = _parse_float(toks[2], lineno)
            elif len(toks) != 1:
                raise ParseError(f"unexpected tokens after {head!r}", lineno)
            current = head
            sections[head] = ([], lineno)
            continue
        if current is None:
            raise ParseError(f"too many matrix rows (header says m = {m})", lineno)
        sections[current][0].extend(_parse_float(tok, lineno) for tok in toks)

    expected = {"b": m, "x_true": n, "b_noisy": m}
    for name, (values, lineno) in sections.items():
        if len(values) != expected[name]:
            raise ParseError(f"section {name!r} has {len(values)} values, expected {expected[name]}", lineno)
    if "b" not in sections:
        raise ParseError("missing 'b' section", lines[-1][0])

    def get(name):
        return np.array(sections[name][0]) if name in sections else None

    return LinearProblem(A=A, b=get("b"), b_noisy=get("b_noisy"), delta=noisy_delta,
                         x_true=get("x_true"), label=label, consistent=consistent)
