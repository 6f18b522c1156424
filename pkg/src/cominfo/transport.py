"""Transportation linear programs over coupling sets.

The workhorse is a primal network simplex on the dense transportation graph
with Bland's anti-cycling rule (pivot tolerance 1e-11). Cells with +inf cost
are "forbidden": a phase-1 pass minimizes the mass forced onto them, and if
that minimum is positive the problem value is +inf with the phase-1 plan as a
witness loading the forced cell. Desk-scale instances only (tens of symbols).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist import (
    SUPPORT_EPS,
    Channel,
    FiniteDist,
    JointDist,
    ShapeMismatchError,
)

PIVOT_TOL = 1e-11
MARGINAL_TOL = 1e-9


class UnbalancedError(ValueError):
    """Marginal masses disagree beyond tolerance."""


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A coupling matrix with prescribed marginals plus its objective value (nats)."""

    plan: np.ndarray
    value: float

    def __post_init__(self) -> None:
        arr = np.array(self.plan, dtype=float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "plan", arr)


def _northwest_corner(p: np.ndarray, q: np.ndarray):
    """Initial basic feasible solution; returns (alloc, basis) with |basis| = m+n-1."""
    m, n = p.size, q.size
    alloc = np.zeros((m, n))
    basis: list[tuple[int, int]] = []
    supply = p.copy()
    demand = q.copy()
    i = j = 0
    while i < m and j < n:
        move = min(supply[i], demand[j])
        alloc[i, j] = move
        basis.append((i, j))
        supply[i] -= move
        demand[j] -= move
        if i == m - 1 and j == n - 1:
            break
        # on ties advance the row only, leaving a degenerate zero cell in the basis
        if supply[i] <= demand[j] and i < m - 1:
            i += 1
        else:
            j += 1
    return alloc, basis


def _potentials(cost: np.ndarray, basis: list[tuple[int, int]], m: int, n: int):
    """Solve u_i + v_j = c_ij over the basis spanning tree (u_0 = 0)."""
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    rows_adj: list[list[tuple[int, int]]] = [[] for _ in range(m)]
    cols_adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i, j in basis:
        rows_adj[i].append((i, j))
        cols_adj[j].append((i, j))
    u[0] = 0.0
    stack = [("r", 0)]
    while stack:
        kind, idx = stack.pop()
        if kind == "r":
            for i, j in rows_adj[idx]:
                if math.isnan(v[j]):
                    v[j] = cost[i, j] - u[i]
                    stack.append(("c", j))
        else:
            for i, j in cols_adj[idx]:
                if math.isnan(u[i]):
                    u[i] = cost[i, j] - v[j]
                    stack.append(("r", i))
    return u, v


def _find_cycle(basis: list[tuple[int, int]], enter: tuple[int, int], m: int, n: int):
    """Alternating cycle closed by the entering cell inside the basis tree."""
    # path in the bipartite tree from the entering cell's column back to its row
    adj: dict[tuple[str, int], list[tuple[tuple[str, int], tuple[int, int]]]] = {}
    for i, j in basis:
        adj.setdefault(("r", i), []).append((("c", j), (i, j)))
        adj.setdefault(("c", j), []).append((("r", i), (i, j)))
    start, goal = ("r", enter[0]), ("c", enter[1])
    parent = {start: None}
    parent_cell = {}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nxt, cell in adj.get(node, []):
            if nxt not in parent:
                parent[nxt] = node
                parent_cell[nxt] = cell
                stack.append(nxt)
    path_cells = []
    node = goal
    while parent[node] is not None:
        path_cells.append(parent_cell[node])
        node = parent[node]
    path_cells.reverse()
    # cycle alternates starting with +enter
    cycle = [enter] + path_cells[::-1]
    plus = cycle[0::2]
    minus = cycle[1::2]
    return plus, minus


def _simplex_min(cost: np.ndarray, p: np.ndarray, q: np.ndarray,
                 warm: tuple[np.ndarray, list[tuple[int, int]]] | None = None):
    """Minimize sum(plan*cost) over the transportation polytope; Bland's rule."""
    m, n = p.size, q.size
    if warm is None:
        alloc, basis = _northwest_corner(p, q)
    else:
        alloc, basis = warm[0].copy(), list(warm[1])
    basis_set = set(basis)
    max_iter = 200 * (m + n) * max(m * n, 1)
    for _ in range(max_iter):
        u, v = _potentials(cost, basis, m, n)
        rc = cost - u[:, None] - v[None, :]
        enter = None
        # Bland: first improving cell in row-major order
        viol = np.argwhere(rc < -PIVOT_TOL)
        for i, j in viol:
            if (int(i), int(j)) not in basis_set:
                enter = (int(i), int(j))
                break
        if enter is None:
            break
        plus, minus = _find_cycle(basis, enter, m, n)
        theta = min(alloc[c] for c in minus)
        leave = next(c for c in minus if alloc[c] <= theta)
        for c in plus:
            alloc[c] += theta
        for c in minus:
            alloc[c] -= theta
        alloc[leave] = 0.0
        basis_set.remove(leave)
        basis_set.add(enter)
        basis[basis.index(leave)] = enter
    else:
        raise RuntimeError("transportation simplex failed to terminate")
    np.clip(alloc, 0.0, None, out=alloc)
    return alloc, basis


def solve_transport(cost, p: FiniteDist, q: FiniteDist, sense: str = "min") -> TransportPlan:
    """Optimal transportation plan between p and q for the given cell costs.

    +inf costs mark cells that any finite-value plan must avoid; when every
    feasible plan is forced to load one, the value is +inf and the returned
    plan is a witness carrying mass on a forced cell.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (p.n, q.n):
        raise ShapeMismatchError(f"cost shape {cost.shape} vs marginals ({p.n},{q.n})")
    if np.any(np.isnan(cost)) or np.any(cost == -math.inf):
        raise ValueError("cost entries must be finite or +inf")
    if abs(p.probs.sum() - q.probs.sum()) > MARGINAL_TOL:
        raise UnbalancedError("marginal sums disagree beyond 1e-9")

    rows = np.flatnonzero(p.probs > SUPPORT_EPS)
    cols = np.flatnonzero(q.probs > SUPPORT_EPS)
    ps = p.probs[rows].copy()
    qs = q.probs[cols].copy()
    qs *= ps.sum() / qs.sum()
    sub = cost[np.ix_(rows, cols)]
    m, n = ps.size, qs.size

    work = sub if sense == "min" else -sub
    forbidden = ~np.isfinite(sub)
    warm = None
    if forbidden.any():
        phase1 = forbidden.astype(float)
        alloc1, basis1 = _simplex_min(phase1, ps, qs)
        forced = float(alloc1[forbidden].sum())
        if forced > 1e-9:
            full = np.zeros_like(cost)
            full[np.ix_(rows, cols)] = alloc1
            return TransportPlan(full, math.inf)
        warm = (alloc1, basis1)
        finite_vals = np.abs(work[~forbidden])
        big = (m + n + 2) * (1.0 + (finite_vals.max() if finite_vals.size else 0.0))
        work = np.where(forbidden, big, work)

    alloc, _ = _simplex_min(work, ps, qs, warm=warm)
    if forbidden.any():
        if alloc[forbidden].sum() > 1e-9:
            full = np.zeros_like(cost)
            full[np.ix_(rows, cols)] = alloc
            return TransportPlan(full, math.inf)
        alloc[forbidden] = 0.0  # phase 1 proved avoidable; drop degenerate dust
    value = float((alloc[alloc > 0.0] * sub[alloc > 0.0]).sum())
    full = np.zeros_like(cost)
    full[np.ix_(rows, cols)] = alloc
    return TransportPlan(full, value)


def max_cross_entropy(px: FiniteDist, py: FiniteDist, pi: JointDist) -> float:
    """Largest expected value of -log pi(x,y) over couplings of (px, py).

    Returns +inf iff every coupling of the marginals is forced to load a cell
    outside supp(pi).
    """
    if px.n != pi.nx or py.n != pi.ny:
        raise ShapeMismatchError("marginals do not match the joint's alphabets")
    with np.errstate(divide="ignore"):
        cost = np.where(pi.matrix > SUPPORT_EPS, -np.log(pi.matrix), math.inf)
    return solve_transport(cost, px, py, sense="max").value


def min_expected_cross_entropy(pw: FiniteDist, cross: np.ndarray) -> TransportPlan:
    """Cheapest coupling of (pw, pw) against a precomputed cross-value matrix."""
    cross = np.asarray(cross, dtype=float)
    if cross.shape != (pw.n, pw.n):
        raise ShapeMismatchError("cross matrix must be |W| x |W|")
    return solve_transport(cross, pw, pw, sense="min")


def compose_conditional_couplings(parts) -> Channel:
    """Chain per-step conditional couplings into a coupling of the full sequences.

    Step i is an array of shape (|W|, |X|^(i-1), |Y|^(i-1), |X|, |Y|) giving
    Q(x_i, y_i | x-history, y-history, w); step 1 may be given as (|W|,|X|,|Y|).
    The composed Q(x^n, y^n | w) keeps the prescribed per-coordinate marginal
    channels: its X-marginal must not depend on the Y-history and vice versa,
    which is checked per step to 1e-12.

    Returns a Channel whose row w is the flattened (x^n, y^n) coupling in
    lexicographic order (x-index * |Y|^n + y-index).
    """
    parts = [np.asarray(s, dtype=float) for s in parts]
    if not parts:
        raise ValueError("need at least one step")
    if parts[0].ndim == 3:
        parts[0] = parts[0][:, None, None, :, :]
    k, hx0, hy0, nx, ny = parts[0].shape
    if (hx0, hy0) != (1, 1):
        raise ShapeMismatchError("first step must have trivial histories")

    comp = np.ones((k, 1, 1))
    px_chain = np.ones((k, 1))
    py_chain = np.ones((k, 1))
    for idx, step in enumerate(parts):
        if step.ndim != 5 or step.shape[0] != k:
            raise ShapeMismatchError(f"step {idx}: bad shape {step.shape}")
        _, hx, hy, sx, sy = step.shape
        if (sx, sy) != (nx, ny) or hx != comp.shape[1] or hy != comp.shape[2]:
            raise ShapeMismatchError(f"step {idx}: history sizes do not chain")
        if np.any(step < -1e-15):
            raise ValueError(f"step {idx}: negative entries")
        sums = step.sum(axis=(3, 4))
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise ValueError(f"step {idx}: rows must sum to 1")
        margx = step.sum(axis=4)           # (k, hx, hy, nx)
        margy = step.sum(axis=3)           # (k, hx, hy, ny)
        if np.max(np.abs(margx - margx[:, :, :1, :])) > 1e-12:
            raise ValueError(f"step {idx}: X-marginal depends on the Y-history")
        if np.max(np.abs(margy - margy[:, :1, :, :])) > 1e-12:
            raise ValueError(f"step {idx}: Y-marginal depends on the X-history")
        new = comp[:, :, None, :, None] * step.transpose(0, 1, 3, 2, 4)
        comp = new.reshape(k, comp.shape[1] * nx, comp.shape[2] * ny)
        px_chain = (px_chain[:, :, None] * margx[:, :, 0, :]).reshape(k, -1)
        py_chain = (py_chain[:, :, None] * margy[:, 0, :, :]).reshape(k, -1)

    if np.max(np.abs(comp.sum(axis=2) - px_chain)) > 1e-9:
        raise ValueError("composed X-marginals drifted from the prescribed chain")
    if np.max(np.abs(comp.sum(axis=1) - py_chain)) > 1e-9:
        raise ValueError("composed Y-marginals drifted from the prescribed chain")
    return Channel(comp.reshape(k, -1))
