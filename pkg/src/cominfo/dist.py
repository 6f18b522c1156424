"""Finite-alphabet probability types and the entropy/divergence functionals built on them.

All logarithms are natural (values are in nats). Mass vectors are validated at
construction time and never silently renormalized; use the ``normalize*``
helpers when ingesting raw nonnegative data. Entries below ``SUPPORT_EPS`` are
treated as exact zeros for support computations but are retained in sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9
SUPPORT_EPS = 1e-12

# product_lift refuses to materialize more cells than this
PRODUCT_CELL_BUDGET = 2 ** 24


class ShapeMismatchError(ValueError):
    """Operands do not live on matching alphabets."""


class BudgetError(RuntimeError):
    """An exact enumeration would exceed the configured memory budget."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _check_mass(arr: np.ndarray, name: str) -> None:
    if arr.size == 0:
        raise ValueError(f"{name}: empty alphabet")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    if np.any(arr < 0.0):
        raise ValueError(f"{name}: entries must be nonnegative (min={arr.min()!r})")
    total = float(arr.sum())
    if abs(total - 1.0) > SUM_TOL:
        raise ValueError(f"{name}: mass must sum to 1 within {SUM_TOL}, got {total!r}")


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """A probability mass function over an indexed finite alphabet."""

    probs: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        arr = _freeze(np.atleast_1d(np.asarray(self.probs, dtype=float)))
        if arr.ndim != 1:
            raise ValueError("FiniteDist: probs must be one-dimensional")
        _check_mass(arr, "FiniteDist")
        if self.labels is not None and len(self.labels) != arr.size:
            raise ValueError("FiniteDist: labels length mismatch")
        object.__setattr__(self, "probs", arr)

    @property
    def n(self) -> int:
        return int(self.probs.size)

    @property
    def support(self) -> np.ndarray:
        """Indices carrying more than SUPPORT_EPS mass."""
        return np.flatnonzero(self.probs > SUPPORT_EPS)


@dataclass(frozen=True, eq=False)
class JointDist:
    """A nonnegative matrix summing to one over the product alphabet X x Y."""

    matrix: np.ndarray
    x_labels: tuple[str, ...] | None = None
    y_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        arr = _freeze(np.asarray(self.matrix, dtype=float))
        if arr.ndim != 2:
            raise ValueError("JointDist: matrix must be two-dimensional")
        _check_mass(arr, "JointDist")
        if self.x_labels is not None and len(self.x_labels) != arr.shape[0]:
            raise ValueError("JointDist: x_labels length mismatch")
        if self.y_labels is not None and len(self.y_labels) != arr.shape[1]:
            raise ValueError("JointDist: y_labels length mismatch")
        object.__setattr__(self, "matrix", arr)

    @property
    def nx(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def ny(self) -> int:
        return int(self.matrix.shape[1])

    def marginal_x(self) -> FiniteDist:
        return FiniteDist(self.matrix.sum(axis=1))

    def marginal_y(self) -> FiniteDist:
        return FiniteDist(self.matrix.sum(axis=0))


@dataclass(frozen=True, eq=False)
class Channel:
    """A row-stochastic conditional distribution: one FiniteDist per input symbol."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        arr = _freeze(np.asarray(self.rows, dtype=float))
        if arr.ndim != 2:
            raise ValueError("Channel: rows must form a 2-D array")
        for i in range(arr.shape[0]):
            _check_mass(arr[i], f"Channel row {i}")
        object.__setattr__(self, "rows", arr)

    @property
    def n_inputs(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.rows.shape[1])

    def row(self, i: int) -> FiniteDist:
        return FiniteDist(self.rows[i])


@dataclass(frozen=True, eq=False)
class Decomposition:
    """A Markov factorization X - W - Y: weights over W plus the two conditionals."""

    pw: FiniteDist
    px_given_w: Channel
    py_given_w: Channel

    def __post_init__(self) -> None:
        k = self.pw.n
        if self.px_given_w.n_inputs != k or self.py_given_w.n_inputs != k:
            raise ShapeMismatchError("Decomposition: channel input sizes must match |W|")

    @property
    def k(self) -> int:
        return self.pw.n


def normalize(values, labels=None) -> FiniteDist:
    """Build a FiniteDist from raw nonnegative weights, returning it normalized."""
    arr = np.asarray(values, dtype=float)
    total = arr.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("normalize: weights must have positive finite total")
    return FiniteDist(arr / total, labels)


def normalize_joint(matrix, x_labels=None, y_labels=None) -> JointDist:
    """Build a JointDist from a raw nonnegative matrix, returning it normalized."""
    arr = np.asarray(matrix, dtype=float)
    total = arr.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("normalize_joint: matrix must have positive finite total")
    return JointDist(arr / total, x_labels, y_labels)


def _entropy_arr(p: np.ndarray) -> float:
    mask = p > SUPPORT_EPS
    q = p[mask]
    return float(-(q * np.log(q)).sum())


def entropy(p: FiniteDist | JointDist) -> float:
    """Shannon entropy in nats, with 0 log 0 := 0."""
    arr = p.probs if isinstance(p, FiniteDist) else p.matrix.ravel()
    return _entropy_arr(arr)


def renyi_entropy(p: FiniteDist | JointDist, alpha: float) -> float:
    """Renyi entropy of the given order, with continuous extensions at 0, 1 and +-inf."""
    arr = p.probs if isinstance(p, FiniteDist) else p.matrix.ravel()
    supp = arr[arr > SUPPORT_EPS]
    if alpha == 1.0:
        return _entropy_arr(arr)
    if alpha == 0.0:
        return float(np.log(supp.size))
    if alpha == math.inf:
        return float(-np.log(supp.max()))
    if alpha == -math.inf:
        return float(-np.log(supp.min()))
    return float(np.log((supp ** alpha).sum()) / (1.0 - alpha))


def _pair_arrays(p, q):
    if isinstance(p, FiniteDist) and isinstance(q, FiniteDist):
        if p.n != q.n:
            raise ShapeMismatchError("distributions live on different alphabets")
        return p.probs, q.probs
    if isinstance(p, JointDist) and isinstance(q, JointDist):
        if p.matrix.shape != q.matrix.shape:
            raise ShapeMismatchError("joint distributions have different shapes")
        return p.matrix.ravel(), q.matrix.ravel()
    raise ShapeMismatchError("operands must both be FiniteDist or both JointDist")


def renyi_divergence(p, q, order: float) -> float:
    """Renyi divergence D_order(p || q) in nats, for order in [0, inf].

    Order 1 is the relative entropy. For order > 1 the value is +inf whenever
    supp(p) is not contained in supp(q); for order in [0, 1) it stays finite.
    """
    if order < 0:
        raise ValueError("renyi_divergence: order must be in [0, inf]")
    parr, qarr = _pair_arrays(p, q)
    mask = parr > SUPPORT_EPS
    ps = parr[mask]
    qs = qarr[mask]
    dominated = bool(np.all(qs > SUPPORT_EPS))
    if order == 0.0:
        cover = float(qs.sum())
        return math.inf if cover <= 0.0 else float(-np.log(cover))
    if order == 1.0:
        if not dominated:
            return math.inf
        return float((ps * (np.log(ps) - np.log(qs))).sum())
    if order == math.inf:
        if not dominated:
            return math.inf
        return float(np.log(np.max(ps / qs)))
    if order > 1.0 and not dominated:
        return math.inf
    s = order - 1.0
    if order < 1.0:
        keep = qs > SUPPORT_EPS
        ps, qs = ps[keep], qs[keep]
        if ps.size == 0:
            return math.inf
    total = float((ps ** order * qs ** (1.0 - order)).sum())
    return float(np.log(total) / s)


def tv_distance(p, q) -> float:
    """Total variation distance, one half the L1 difference."""
    parr, qarr = _pair_arrays(p, q)
    return float(0.5 * np.abs(parr - qarr).sum())


def mutual_information(j: JointDist) -> float:
    """Mutual information I(X;Y) of a joint distribution, floored at 0 for float dust."""
    val = entropy(j.marginal_x()) + entropy(j.marginal_y()) - entropy(j)
    if -1e-12 < val < 0.0:
        return 0.0
    return val


def synthesize(d: Decomposition) -> JointDist:
    """Mix the per-w product conditionals: sum_w P(w) P(x|w) P(y|w)."""
    mat = np.einsum("k,kx,ky->xy", d.pw.probs, d.px_given_w.rows, d.py_given_w.rows)
    return JointDist(mat)


def product_lift(j: JointDist, n: int) -> JointDist:
    """The i.i.d. n-fold product over (X^n, Y^n), indexed lexicographically."""
    if n < 1:
        raise ValueError("product_lift: n must be >= 1")
    cells = (j.nx ** n) * (j.ny ** n)
    if cells > PRODUCT_CELL_BUDGET:
        raise BudgetError(f"product_lift: {cells} cells exceed budget {PRODUCT_CELL_BUDGET}")
    if n == 1:
        return j
    mat = j.matrix
    for _ in range(n - 1):
        mat = np.kron(mat, j.matrix)
    return JointDist(mat)
