"""Common-information quantities of a finite bivariate distribution.

The nonconvex minimizations (Wyner rate, the coupling-based upper and lower
rate bounds, common entropy and its Renyi generalizations) all run through one
multi-start engine: Dirichlet(1) random starts, alternating projected-gradient
updates of the mixture weights and the two conditional channels, a quadratic
feasibility penalty ramped over five continuation stages, and a final
feasibility polish to 1e-8 total variation. Reported values are evaluated on
the returned witness through the defining objective, so every report is an
honest bound of the labeled kind; only small exhaustively-searched quantities
are marked certified.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dist import (
    SUPPORT_EPS,
    BudgetError,
    Channel,
    Decomposition,
    FiniteDist,
    JointDist,
    entropy,
    product_lift,
    renyi_divergence,
    renyi_entropy,
    synthesize,
)
from .transport import max_cross_entropy, min_expected_cross_entropy, solve_transport

FEAS_TOL = 1e-8
_TREE_LIMIT = 5000


@dataclass(frozen=True)
class SearchOptions:
    """Knobs for the multi-start decomposition search.

    The engine vectorizes across starts, so `threads` is not used here; it is
    carried for callers that fan out independent experiment runs.
    """

    starts: int = 64
    wmax: int | None = None
    seed: int = 0
    stage_iters: int = 60
    polish_iters: int = 1200
    feas_tol: float = FEAS_TOL
    threads: int = 1


@dataclass(frozen=True)
class BoundReport:
    """Outcome of a bound computation: value plus provenance of its quality."""

    value: float
    kind: str
    witness: object | None
    starts_used: int
    converged: bool
    caveat: str | None = None
    meta: dict | None = None


# ---------------------------------------------------------------------------
# batched transportation evaluation on small shapes via vertex enumeration
# ---------------------------------------------------------------------------

_tree_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _tree_count(m: int, n: int) -> int:
    return m ** (n - 1) * n ** (m - 1)


def _spanning_tree_tensors(m: int, n: int):
    """All spanning trees of K_{m,n}: cell ids (T,E) and allocation maps (T,E,m+n).

    A vertex of the transportation polytope is supported on a spanning tree,
    and its allocations are a fixed +-1 combination of the marginal entries,
    so optima over the polytope reduce to a masked max/min of linear maps.
    """
    key = (m, n)
    if key in _tree_cache:
        return _tree_cache[key]
    cells = [(i, j) for i in range(m) for j in range(n)]
    n_edges = m + n - 1
    trees = []
    for combo in itertools.combinations(range(len(cells)), n_edges):
        parent = list(range(m + n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        acyclic = True
        for idx in combo:
            i, j = cells[idx]
            ra, rb = find(i), find(m + j)
            if ra == rb:
                acyclic = False
                break
            parent[ra] = rb
        if acyclic:
            trees.append(combo)

    T = len(trees)
    cell_ids = np.zeros((T, n_edges), dtype=np.int64)
    maps = np.zeros((T, n_edges, m + n))
    # filled below; deduplicated allocation functionals are appended afterwards
    for t, combo in enumerate(trees):
        cell_ids[t] = combo
        edges = [cells[idx] for idx in combo]
        incident: dict[tuple[str, int], set[int]] = {}
        for eid, (i, j) in enumerate(edges):
            incident.setdefault(("r", i), set()).add(eid)
            incident.setdefault(("c", j), set()).add(eid)
        acc = {}
        for i in range(m):
            vec = np.zeros(m + n)
            vec[i] = 1.0
            acc[("r", i)] = vec
        for j in range(n):
            vec = np.zeros(m + n)
            vec[m + j] = 1.0
            acc[("c", j)] = vec
        queue = [node for node, eids in incident.items() if len(eids) == 1]
        solved = np.full(n_edges, False)
        while queue:
            node = queue.pop()
            eids = incident[node]
            if len(eids) != 1:
                continue
            eid = next(iter(eids))
            if solved[eid]:
                continue
            maps[t, eid] = acc[node]
            solved[eid] = True
            i, j = edges[eid]
            for other in (("r", i), ("c", j)):
                incident[other].discard(eid)
                acc[other] = acc[other] - maps[t, eid]
                if len(incident[other]) == 1:
                    queue.append(other)
    # many trees share allocation functionals; dedupe them so feasibility can
    # be checked with one small matmul plus a boolean gather
    flat = maps.reshape(-1, m + n)
    distinct, fid = np.unique(flat, axis=0, return_inverse=True)
    fid = fid.reshape(T, n_edges)
    _tree_cache[key] = (cell_ids, maps, distinct, fid)
    return _tree_cache[key]


class _FixedCostTransport:
    """Batched max-coupling values and marginal gradients for one cost matrix."""

    def __init__(self, cost: np.ndarray):
        self.cost = np.asarray(cost, dtype=float)
        self.m, self.n = self.cost.shape
        self.fast = _tree_count(self.m, self.n) <= _TREE_LIMIT
        if self.fast:
            cell_ids, maps, distinct, fid = _spanning_tree_tensors(self.m, self.n)
            tree_costs = self.cost.ravel()[cell_ids]          # (T, E)
            self.distinct = distinct.T.copy()                 # (m+n, D)
            self.fid = fid
            self.gvec = np.einsum("teq,te->tq", maps, tree_costs)  # (T, m+n)

    def eval_max(self, a: np.ndarray, b: np.ndarray):
        """a: (N,m), b: (N,n) -> (value (N,), grad_a (N,m), grad_b (N,n))."""
        if self.fast:
            ab = np.concatenate([a, b], axis=1)
            vals_all = ab @ self.gvec.T                        # (N, T)
            out_v = np.empty(a.shape[0])
            out_g = np.empty((a.shape[0], self.m + self.n))
            chunk = max(1, int(8_000_000 // max(self.fid.size, 1)))
            for lo in range(0, a.shape[0], chunk):
                hi = min(lo + chunk, a.shape[0])
                nonneg = (ab[lo:hi] @ self.distinct) >= -1e-12  # (c, D)
                feas = nonneg[:, self.fid].all(axis=2)          # (c, T)
                v = np.where(feas, vals_all[lo:hi], -np.inf)
                best = np.argmax(v, axis=1)
                out_v[lo:hi] = v[np.arange(hi - lo), best]
                out_g[lo:hi] = self.gvec[best]
            return out_v, out_g[:, : self.m], out_g[:, self.m:]
        return self._eval_slow(a, b)

    def _eval_slow(self, a, b):
        N = a.shape[0]
        vals = np.empty(N)
        ga = np.empty((N, self.m))
        gb = np.empty((N, self.n))
        for s in range(N):
            plan = solve_transport(self.cost, FiniteDist(a[s] / a[s].sum()),
                                   FiniteDist(b[s] / b[s].sum()), sense="max")
            vals[s] = plan.value
            u_pot, v_pot = _duals_from_plan(self.cost, plan.plan)
            ga[s], gb[s] = u_pot, v_pot
        return vals, ga, gb


def _duals_from_plan(cost, plan):
    """Recover max-problem potentials from an optimal plan's support tree."""
    m, n = cost.shape
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    support = [(i, j) for i in range(m) for j in range(n) if plan[i, j] > 1e-14]
    u[0] = 0.0
    changed = True
    while changed:
        changed = False
        for i, j in support:
            if not math.isnan(u[i]) and math.isnan(v[j]):
                v[j] = cost[i, j] - u[i]
                changed = True
            elif math.isnan(u[i]) and not math.isnan(v[j]):
                u[i] = cost[i, j] - v[j]
                changed = True
    u[np.isnan(u)] = 0.0
    v[np.isnan(v)] = 0.0
    return u, v


def _min_coupling_batch(costs: np.ndarray, u: np.ndarray):
    """Min-value couplings of (u, u) for per-instance cost matrices.

    costs: (N,k,k), u: (N,k). Returns (value (N,), plan (N,k,k), grad_u (N,k)).
    """
    N, k, _ = costs.shape
    if _tree_count(k, k) <= _TREE_LIMIT:
        cell_ids, maps, _, _ = _spanning_tree_tensors(k, k)
        ab = np.concatenate([u, u], axis=1)                       # (N, 2k)
        flat_maps = maps.reshape(-1, 2 * k)
        alloc = (ab @ flat_maps.T).reshape(N, *maps.shape[:2])    # (N, T, E)
        feas = (alloc >= -1e-12).all(axis=2)
        tree_costs = costs.reshape(N, -1)[:, cell_ids]            # (N, T, E)
        vals = np.einsum("nte,nte->nt", alloc, tree_costs)
        vals = np.where(feas, vals, np.inf)
        best = np.argmin(vals, axis=1)
        rng = np.arange(N)
        value = vals[rng, best]
        plan = np.zeros((N, k * k))
        np.put_along_axis(plan, cell_ids[best], np.maximum(alloc[rng, best], 0.0), axis=1)
        grad = np.einsum("neq,ne->nq", maps[best], tree_costs[rng, best])
        return value, plan.reshape(N, k, k), grad[:, :k] + grad[:, k:]

    value = np.empty(N)
    plan = np.empty((N, k, k))
    grad = np.empty((N, k))
    for s in range(N):
        pw = FiniteDist(u[s] / u[s].sum())
        res = solve_transport(costs[s], pw, pw, sense="min")
        value[s] = res.value
        plan[s] = res.plan
        up, vp = _duals_from_plan(costs[s], res.plan)
        grad[s] = up + vp
    return value, plan, grad


# ---------------------------------------------------------------------------
# the multi-start penalized search engine
# ---------------------------------------------------------------------------

_SAFE_FLOOR = 1e-300


def _slog(x):
    return np.log(np.clip(x, _SAFE_FLOOR, None))


def _xlogx_sum(x, axis):
    return np.where(x > SUPPORT_EPS, x * _slog(x), 0.0).sum(axis=axis)


def _project_rows(x: np.ndarray) -> np.ndarray:
    """Euclidean projection of each trailing row onto the probability simplex."""
    shape = x.shape
    v = x.reshape(-1, shape[-1])
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, shape[-1] + 1)
    rho = np.count_nonzero(u - css / idx > 0, axis=1)
    theta = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0).reshape(shape)


class _Objective:
    """Interface for the engine: a batched value plus per-block gradients.

    ``value`` may be called on a sub-batch during line search; ``idx`` then
    carries the global lane ids so stateful objectives can align caches.
    """

    uses_transport = False
    grad_refresh_per_block = True

    def value(self, u, a, b, smat, idx=None):
        raise NotImplementedError

    def value_for_block(self, name, u, a, b, smat, idx=None):
        return self.value(u, a, b, smat, idx)

    def value_grads(self, u, a, b, smat, idx=None):
        raise NotImplementedError


class _FeasibilityOnly(_Objective):
    def value(self, u, a, b, smat, idx=None):
        return np.zeros(u.shape[0])

    def value_grads(self, u, a, b, smat, idx=None):
        z = np.zeros(u.shape[0])
        return z, np.zeros_like(u), np.zeros_like(a), np.zeros_like(b)


class _WynerObjective(_Objective):
    def value(self, u, a, b, smat, idx=None):
        ha = -_xlogx_sum(a, 2)
        hb = -_xlogx_sum(b, 2)
        hs = -_xlogx_sum(smat.reshape(smat.shape[0], -1), 1)
        return hs - (u * (ha + hb)).sum(1)

    def value_grads(self, u, a, b, smat, idx=None):
        ha = -_xlogx_sum(a, 2)
        hb = -_xlogx_sum(b, 2)
        hs = -_xlogx_sum(smat.reshape(smat.shape[0], -1), 1)
        val = hs - (u * (ha + hb)).sum(1)
        dhs = -(_slog(smat) + 1.0)
        gu = -(ha + hb) + np.einsum("sxy,skx,sky->sk", dhs, a, b)
        ga = u[:, :, None] * (np.einsum("sxy,sky->skx", dhs, b) + _slog(a) + 1.0)
        gb = u[:, :, None] * (np.einsum("sxy,skx->sky", dhs, a) + _slog(b) + 1.0)
        return val, gu, ga, gb


class _GammaUBObjective(_Objective):
    uses_transport = True

    def __init__(self, pi_mat):
        self.evaluator = _FixedCostTransport(_smoothed_cost(pi_mat))
        self._per_w = None     # cached -(Ha+Hb)+H per lane/component

    def _pieces(self, u, a, b):
        S, k, nx = a.shape
        ny = b.shape[2]
        hvals, gha, ghb = self.evaluator.eval_max(a.reshape(S * k, nx), b.reshape(S * k, ny))
        return (hvals.reshape(S, k), gha.reshape(S, k, nx), ghb.reshape(S, k, ny))

    def value(self, u, a, b, smat, idx=None):
        ha = -_xlogx_sum(a, 2)
        hb = -_xlogx_sum(b, 2)
        hvals, _, _ = self._pieces(u, a, b)
        return (u * (-(ha + hb) + hvals)).sum(1)

    def value_for_block(self, name, u, a, b, smat, idx=None):
        # the per-component terms do not depend on the weights, so the weight
        # block can reuse the values cached at the last gradient refresh
        if name == "u" and self._per_w is not None and idx is not None:
            return (u * self._per_w[idx]).sum(1)
        return self.value(u, a, b, smat, idx)

    def value_grads(self, u, a, b, smat, idx=None):
        ha = -_xlogx_sum(a, 2)
        hb = -_xlogx_sum(b, 2)
        hvals, gha, ghb = self._pieces(u, a, b)
        gu = -(ha + hb) + hvals
        val = (u * gu).sum(1)
        ga = u[:, :, None] * (_slog(a) + 1.0 + gha)
        gb = u[:, :, None] * (_slog(b) + 1.0 + ghb)
        if idx is not None:
            if self._per_w is None or self._per_w.shape[0] <= int(np.max(idx)):
                self._per_w = np.zeros((int(np.max(idx)) + 1, u.shape[1]))
            self._per_w[idx] = gu
        return val, gu, ga, gb


class _GammaLBObjective(_Objective):
    """Coupling-relaxed objective with a majorized line-search surrogate.

    The inner min over couplings of (P_W, P_W) is expensive; ``value_grads``
    solves it exactly and freezes the optimal plan, while ``value`` reuses the
    frozen plan (an upper bound that is tight at the freeze point), so each
    accepted line-search step still decreases the true objective.
    """

    uses_transport = True
    grad_refresh_per_block = False

    def __init__(self, pi_mat):
        self.evaluator = _FixedCostTransport(_smoothed_cost(pi_mat))
        self._plan = None
        self._u_frozen = None

    def _cross(self, a, b, with_grads):
        S, k, nx = a.shape
        ny = b.shape[2]
        arep = np.repeat(a, k, axis=1).reshape(S * k * k, nx)
        brep = np.tile(b, (1, k, 1)).reshape(S * k * k, ny)
        vals, ga, gb = self.evaluator.eval_max(arep, brep)
        if not with_grads:
            return vals.reshape(S, k, k), None, None
        return (vals.reshape(S, k, k), ga.reshape(S, k, k, nx), gb.reshape(S, k, k, ny))

    def value(self, u, a, b, smat, idx=None):
        ha = -_xlogx_sum(a, 2)
        hb = -_xlogx_sum(b, 2)
        cross, _, _ = self._cross(a, b, with_grads=False)
        if self._plan is not None and idx is not None:
            inner = np.einsum("skl,skl->s", self._plan[idx], cross)
        elif self._plan is not None and u.shape[0] == self._plan.shape[0]:
            inner = np.einsum("skl,skl->s", self._plan, cross)
        else:
            inner, _, _ = _min_coupling_batch(cross, u)
        return -(u * (ha + hb)).sum(1) + inner

    def value_for_block(self, name, u, a, b, smat, idx=None):
        if name != "u":
            return self.value(u, a, b, smat, idx)
        # moving the weights changes the coupling constraint set; repair the
        # frozen plan by shifting its diagonal, which stays feasible for small
        # moves and upper-bounds the true inner min (tight at the freeze point)
        ha = -_xlogx_sum(a, 2)
        hb = -_xlogx_sum(b, 2)
        cross, _, _ = self._cross(a, b, with_grads=False)
        if self._plan is None or self._u_frozen is None or idx is None:
            inner, _, _ = _min_coupling_batch(cross, u)
            return -(u * (ha + hb)).sum(1) + inner
        plan = self._plan[idx]
        delta = u - self._u_frozen[idx]
        diag = np.einsum("skk->sk", plan)
        feasible = (diag + delta >= -1e-15).all(axis=1)
        inner = (np.einsum("skl,skl->s", plan, cross)
                 + np.einsum("sk,skk->s", delta, cross))
        inner = np.where(feasible, inner, np.inf)
        return -(u * (ha + hb)).sum(1) + inner

    def value_grads(self, u, a, b, smat, idx=None):
        ha = -_xlogx_sum(a, 2)
        hb = -_xlogx_sum(b, 2)
        cross, gca, gcb = self._cross(a, b, with_grads=True)
        inner, plan, gu_inner = _min_coupling_batch(cross, u)
        if idx is None:
            self._plan = plan
            self._u_frozen = u.copy()
        else:
            if self._plan is None or self._plan.shape[1] != plan.shape[1]:
                self._plan = np.zeros((int(np.max(idx)) + 1 + plan.shape[0],
                                       plan.shape[1], plan.shape[2]))
                self._u_frozen = np.zeros((self._plan.shape[0], u.shape[1]))
            if self._plan.shape[0] <= int(np.max(idx)):
                grow = int(np.max(idx)) + 1
                pl = np.zeros((grow, plan.shape[1], plan.shape[2]))
                pl[: self._plan.shape[0]] = self._plan
                uf = np.zeros((grow, u.shape[1]))
                uf[: self._u_frozen.shape[0]] = self._u_frozen
                self._plan, self._u_frozen = pl, uf
            self._plan[idx] = plan
            self._u_frozen[idx] = u
        val = -(u * (ha + hb)).sum(1) + inner
        gu = -(ha + hb) + gu_inner
        ga = u[:, :, None] * (_slog(a) + 1.0) + np.einsum("skl,sklx->skx", plan, gca)
        gb = u[:, :, None] * (_slog(b) + 1.0) + np.einsum("skl,skly->sly", plan, gcb)
        return val, gu, ga, gb


class _WeightEntropyObjective(_Objective):
    """H_alpha of the mixture weights; alpha=1 is the common-entropy objective."""

    def __init__(self, alpha: float):
        self.alpha = alpha

    def value(self, u, a, b, smat, idx=None):
        al = self.alpha
        if al == 1.0:
            return -_xlogx_sum(u, 1)
        mask = u > SUPPORT_EPS
        if al == math.inf:
            return -_slog(u.max(axis=1))
        if al == -math.inf:
            return -_slog(np.where(mask, u, np.inf).min(axis=1))
        tot = np.where(mask, np.where(mask, u, 1.0) ** al, 0.0)
        return _slog(tot.sum(axis=1)) / (1.0 - al)

    def value_grads(self, u, a, b, smat, idx=None):
        al = self.alpha
        val = self.value(u, a, b, smat)
        if al == 1.0:
            gu = -(_slog(u) + 1.0)
        elif al == math.inf:
            gu = np.zeros_like(u)
            best = np.argmax(u, axis=1)
            rng = np.arange(u.shape[0])
            gu[rng, best] = -1.0 / np.clip(u[rng, best], SUPPORT_EPS, None)
        elif al == -math.inf:
            gu = np.zeros_like(u)
            masked = np.where(u > SUPPORT_EPS, u, np.inf)
            best = np.argmin(masked, axis=1)
            rng = np.arange(u.shape[0])
            gu[rng, best] = -1.0 / np.clip(u[rng, best], SUPPORT_EPS, None)
        else:
            mask = u > SUPPORT_EPS
            powed = np.where(mask, np.where(mask, u, 1.0) ** al, 0.0)
            tot = powed.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore", over="ignore"):
                gu = np.where(mask, al * np.where(mask, u, 1.0) ** (al - 1.0), 0.0)
            gu = gu / np.clip(tot, _SAFE_FLOOR, None) / (1.0 - al)
        return val, gu, np.zeros_like(a), np.zeros_like(b)


def _smoothed_cost(pi_mat: np.ndarray) -> np.ndarray:
    """-log pi with zero cells mapped to a large finite cost (keeps gradients sane)."""
    with np.errstate(divide="ignore"):
        cost = np.where(pi_mat > SUPPORT_EPS, -np.log(np.clip(pi_mat, _SAFE_FLOOR, None)), 0.0)
    big = cost.max() + 40.0
    return np.where(pi_mat > SUPPORT_EPS, cost, big)


def _synth_batch(u, a, b):
    return np.einsum("sk,skx,sky->sxy", u, a, b)


def _penalty_grads(u, a, b, resid, mu):
    gu = 2.0 * mu * np.einsum("sxy,skx,sky->sk", resid, a, b)
    ga = 2.0 * mu * u[:, :, None] * np.einsum("sxy,sky->skx", resid, b)
    gb = 2.0 * mu * u[:, :, None] * np.einsum("sxy,skx->sky", resid, a)
    return gu, ga, gb


def _expand_idx(idx, ndim):
    return idx.reshape((-1,) + (1,) * (ndim - 1))


def _run_engine(pi_mat: np.ndarray, k: int, objective: _Objective,
                opts: SearchOptions, extra_states=()):
    """Multi-start penalized alternating projected-gradient search.

    Returns (u, a, b, tv, n_starts): lane arrays (random starts, injected
    starts, plus any support-snapped variants), feasibility-polished, together
    with the number of actual starts.
    """
    nx, ny = pi_mat.shape
    rng = np.random.default_rng(opts.seed)
    s0 = max(int(opts.starts), 1)
    u = rng.gamma(1.0, size=(s0, k))
    a = rng.gamma(1.0, size=(s0, k, nx))
    b = rng.gamma(1.0, size=(s0, k, ny))
    u /= u.sum(1, keepdims=True)
    a /= a.sum(2, keepdims=True)
    b /= b.sum(2, keepdims=True)
    for eu, ea, eb in extra_states:
        u = np.concatenate([u, eu[None]], axis=0)
        a = np.concatenate([a, ea[None]], axis=0)
        b = np.concatenate([b, eb[None]], axis=0)
    n_starts = u.shape[0]

    def block_step(cur, mu, steps, act):
        """One alternating pass over the blocks, restricted to the active lanes."""
        f_sub = None
        obj_grads = None
        for name in ("a", "b", "u"):
            sub = {nm: cur[nm][act] for nm in ("u", "a", "b")}
            smat = _synth_batch(sub["u"], sub["a"], sub["b"])
            resid = smat - pi_mat[None]
            if obj_grads is None or objective.grad_refresh_per_block:
                val, gu, ga, gb = objective.value_grads(sub["u"], sub["a"],
                                                        sub["b"], smat, idx=act)
                obj_grads = (gu, ga, gb)
            else:
                gu, ga, gb = obj_grads
                val = objective.value(sub["u"], sub["a"], sub["b"], smat, idx=act)
            pu, pa, pb = _penalty_grads(sub["u"], sub["a"], sub["b"], resid, mu)
            g = {"u": gu + pu, "a": ga + pa, "b": gb + pb}[name]
            f_sub = val + mu * (resid * resid).sum(axis=(1, 2))
            eta = steps[name]
            idx = act.copy()
            gmap = {lane: row for row, lane in enumerate(act)}
            for _ in range(6):
                if idx.size == 0:
                    break
                rows = np.array([gmap[lane] for lane in idx])
                scale = _expand_idx(eta[idx], g.ndim)
                cand = _project_rows(cur[name][idx] - scale * g[rows])
                trial = {nm: cur[nm][idx] for nm in ("u", "a", "b")}
                trial[name] = cand
                sm = _synth_batch(trial["u"], trial["a"], trial["b"])
                fv = objective.value_for_block(name, trial["u"], trial["a"],
                                               trial["b"], sm, idx=idx)
                fv = fv + mu * ((sm - pi_mat[None]) ** 2).sum(axis=(1, 2))
                ok = fv <= f_sub[rows] - 1e-15
                acc = idx[ok]
                if acc.size:
                    cur[name][acc] = cand[ok]
                    f_sub[rows[ok]] = fv[ok]
                    eta[acc] = np.minimum(eta[acc] * 1.1, 2.0)
                idx = idx[~ok]
                eta[idx] *= 0.5
            steps[name] = np.maximum(eta, 1e-10)
        return f_sub

    cur = {"u": u, "a": a, "b": b}
    for mu in (3.0, 30.0, 300.0, 3e3, 3e4):
        steps = {"u": np.full(n_starts, 0.25), "a": np.full(n_starts, 0.25),
                 "b": np.full(n_starts, 0.25)}
        f_prev = np.full(n_starts, np.inf)
        stall_ct = np.zeros(n_starts, dtype=int)
        act = np.arange(n_starts)
        for _ in range(opts.stage_iters):
            if act.size == 0:
                break
            f_now = block_step(cur, mu, steps, act)
            improved = f_prev[act] - f_now > 3e-8 * (1.0 + np.abs(f_now))
            stall_ct[act] = np.where(improved, 0, stall_ct[act] + 1)
            f_prev[act] = f_now
            act = act[stall_ct[act] < 3]
    u, a, b = cur["u"], cur["a"], cur["b"]

    # polish only the lanes that have a realistic shot at feasibility
    tv0 = 0.5 * np.abs(_synth_batch(u, a, b) - pi_mat[None]).sum(axis=(1, 2))
    viable = np.flatnonzero(tv0 <= 0.3)
    if viable.size:
        up, ap, bp = _feasibility_polish(u[viable], a[viable], b[viable],
                                         pi_mat, opts)
        u[viable], a[viable], b[viable] = up, ap, bp
    u, a, b, tv = _dust_snap(u, a, b, pi_mat)

    # support-snapped variants: drop sub-1e-7 dust (which can poison the exact
    # coupling objectives through phantom support cells when pi has zeros),
    # re-polish inside the cleaned support, and offer the results as candidates
    good = np.flatnonzero(tv <= opts.feas_tol)[:8]
    if not (pi_mat <= SUPPORT_EPS).any():
        good = good[:0]
    if good.size:
        us = np.where(u[good] < 1e-7, 0.0, u[good])
        us /= us.sum(1, keepdims=True)
        as_ = np.where(a[good] < 1e-7, 0.0, a[good])
        as_ /= as_.sum(2, keepdims=True)
        bs = np.where(b[good] < 1e-7, 0.0, b[good])
        bs /= bs.sum(2, keepdims=True)
        masks = {"u": us > 0, "a": as_ > 0, "b": bs > 0}
        us, as_, bs = _feasibility_polish(us, as_, bs, pi_mat, opts,
                                          masks=masks, max_iters=300)
        us, as_, bs, tvs = _dust_snap(us, as_, bs, pi_mat)
        keep = tvs <= opts.feas_tol
        if keep.any():
            u = np.concatenate([u, us[keep]], axis=0)
            a = np.concatenate([a, as_[keep]], axis=0)
            b = np.concatenate([b, bs[keep]], axis=0)
            tv = np.concatenate([tv, tvs[keep]], axis=0)
    return u, a, b, tv, n_starts


def _cleaned_state(state, pi_sub, opts):
    """Snap sub-1e-7 support dust off a single (u, a, b) state and re-polish."""
    eu, ea, eb = state
    dusty = (((eu > 0) & (eu < 1e-7)).any() or ((ea > 0) & (ea < 1e-7)).any()
             or ((eb > 0) & (eb < 1e-7)).any())
    if not dusty:
        return None, None, None
    u = np.where(eu < 1e-7, 0.0, eu)[None]
    u = u / u.sum(1, keepdims=True)
    a = np.where(ea < 1e-7, 0.0, ea)[None]
    a = a / a.sum(2, keepdims=True)
    b = np.where(eb < 1e-7, 0.0, eb)[None]
    b = b / b.sum(2, keepdims=True)
    masks = {"u": u > 0, "a": a > 0, "b": b > 0}
    u, a, b = _feasibility_polish(u, a, b, pi_sub, opts, masks=masks, max_iters=150)
    u, a, b, tv = _dust_snap(u, a, b, pi_sub)
    if tv[0] > opts.feas_tol:
        return None, None, None
    return u[0], a[0], b[0]


def _dust_snap(u, a, b, pi_mat):
    """Zero float dust below 1e-13 where that does not degrade feasibility."""
    u_s = np.where(u < 1e-13, 0.0, u)
    u_s /= u_s.sum(1, keepdims=True)
    a_s = np.where(a < 1e-13, 0.0, a)
    a_s /= a_s.sum(2, keepdims=True)
    b_s = np.where(b < 1e-13, 0.0, b)
    b_s /= b_s.sum(2, keepdims=True)
    tv_raw = 0.5 * np.abs(_synth_batch(u, a, b) - pi_mat[None]).sum(axis=(1, 2))
    tv_snap = 0.5 * np.abs(_synth_batch(u_s, a_s, b_s) - pi_mat[None]).sum(axis=(1, 2))
    use = tv_snap <= np.maximum(tv_raw, 1e-15)
    mask = use.reshape(-1, 1)
    u = np.where(mask, u_s, u)
    a = np.where(mask.reshape(-1, 1, 1), a_s, a)
    b = np.where(mask.reshape(-1, 1, 1), b_s, b)
    tv = np.where(use, tv_snap, tv_raw)
    return u, a, b, tv


def _feasibility_polish(u, a, b, pi_mat, opts, masks=None, max_iters=None):
    """Drive each lane's mixture toward pi by projected least squares.

    With ``masks`` the zero pattern is frozen: masked-out entries stay at
    exactly zero, so polishing cannot reintroduce support dust.
    """
    u, a, b = u.copy(), a.copy(), b.copy()
    n_lanes = u.shape[0]
    live = np.arange(n_lanes)
    steps = {nm: np.full(n_lanes, 0.5) for nm in ("u", "a", "b")}
    stall_ct = np.zeros(n_lanes, dtype=int)

    def project(name, idx, x):
        if masks is None:
            return _project_rows(x)
        return _project_rows(np.where(masks[name][idx], x, -1e6))

    for _ in range(max_iters or opts.polish_iters):
        if live.size == 0:
            break
        sm = _synth_batch(u[live], a[live], b[live])
        err = ((sm - pi_mat[None]) ** 2).sum(axis=(1, 2))
        tv_live = 0.5 * np.abs(sm - pi_mat[None]).sum(axis=(1, 2))
        done = tv_live <= 0.25 * opts.feas_tol
        live = live[~done]
        if live.size == 0:
            break
        f_before = err[~done]
        cur = {"u": u, "a": a, "b": b}
        for name in ("a", "b", "u"):
            sm = _synth_batch(u[live], a[live], b[live])
            resid = sm - pi_mat[None]
            pu, pa, pb = _penalty_grads(u[live], a[live], b[live], resid, 1.0)
            g = {"u": pu, "a": pa, "b": pb}[name]
            f_cur = (resid * resid).sum(axis=(1, 2))
            idx = live.copy()
            gmap = {lane: row for row, lane in enumerate(live)}
            for _ in range(6):
                if idx.size == 0:
                    break
                rows = np.array([gmap[lane] for lane in idx])
                scale = _expand_idx(steps[name][idx], g.ndim)
                cand = project(name, idx, cur[name][idx] - scale * g[rows])
                trial = {nm: cur[nm][idx] for nm in ("u", "a", "b")}
                trial[name] = cand
                smi = _synth_batch(trial["u"], trial["a"], trial["b"])
                fv = ((smi - pi_mat[None]) ** 2).sum(axis=(1, 2))
                ok = fv <= f_cur[rows] - 1e-22
                acc = idx[ok]
                if acc.size:
                    cur[name][acc] = cand[ok]
                    f_cur[rows[ok]] = fv[ok]
                    steps[name][acc] = np.minimum(steps[name][acc] * 1.2, 8.0)
                idx = idx[~ok]
                steps[name][idx] = np.maximum(steps[name][idx] * 0.5, 1e-10)
        sm = _synth_batch(u[live], a[live], b[live])
        f_after = ((sm - pi_mat[None]) ** 2).sum(axis=(1, 2))
        improved = f_before - f_after > 1e-24
        stall_ct[live] = np.where(improved, 0, stall_ct[live] + 1)
        live = live[stall_ct[live] < 6]
    return u, a, b


# ---------------------------------------------------------------------------
# pruning, embedding and exact objective evaluation
# ---------------------------------------------------------------------------


def _prune(pi: JointDist):
    mat = pi.matrix
    rows = np.flatnonzero(mat.sum(axis=1) > SUPPORT_EPS)
    cols = np.flatnonzero(mat.sum(axis=0) > SUPPORT_EPS)
    return mat[np.ix_(rows, cols)], rows, cols


def _expand_witness(u, a, b, rows, cols, nx, ny) -> Decomposition:
    k = u.size
    full_a = np.zeros((k, nx))
    full_b = np.zeros((k, ny))
    full_a[:, rows] = a
    full_b[:, cols] = b
    return Decomposition(FiniteDist(u), Channel(full_a), Channel(full_b))


def _restrict_witness(d: Decomposition, rows, cols, k: int):
    """Embed a decomposition into the engine's pruned (k, rows, cols) state."""
    if d.k > k:
        raise ValueError("extra start has more components than the search cap")
    a = d.px_given_w.rows[:, rows]
    b = d.py_given_w.rows[:, cols]
    a = a / np.clip(a.sum(1, keepdims=True), SUPPORT_EPS, None)
    b = b / np.clip(b.sum(1, keepdims=True), SUPPORT_EPS, None)
    u = np.zeros(k)
    u[: d.k] = d.pw.probs
    u /= u.sum()
    ae = np.full((k, len(rows)), 1.0 / len(rows))
    be = np.full((k, len(cols)), 1.0 / len(cols))
    ae[: d.k] = a
    be[: d.k] = b
    return u, ae, be


def _copy_state(pi_sub: np.ndarray, k: int):
    """The W = (X,Y) decomposition: exactly feasible whenever k >= nnz(pi)."""
    nx, ny = pi_sub.shape
    cells = np.argwhere(pi_sub > SUPPORT_EPS)
    if len(cells) > k:
        return None
    u = np.zeros(k)
    a = np.full((k, nx), 1.0 / nx)
    b = np.full((k, ny), 1.0 / ny)
    for w, (i, j) in enumerate(cells):
        u[w] = pi_sub[i, j]
        a[w] = 0.0
        a[w, i] = 1.0
        b[w] = 0.0
        b[w, j] = 1.0
    u /= u.sum()
    return u, a, b


def wyner_objective(d: Decomposition) -> float:
    """I(XY;W) of a decomposition: joint entropy of its mixture minus H(XY|W)."""
    ha = np.array([entropy(d.px_given_w.row(i)) for i in range(d.k)])
    hb = np.array([entropy(d.py_given_w.row(i)) for i in range(d.k)])
    return entropy(synthesize(d)) - float((d.pw.probs * (ha + hb)).sum())


def gamma_ub_objective(d: Decomposition, pi: JointDist) -> float:
    """-H(XY|W) plus the weighted per-component maximal cross-entropy vs pi."""
    total = 0.0
    for w in range(d.k):
        pw = float(d.pw.probs[w])
        if pw <= SUPPORT_EPS:
            continue
        aw = d.px_given_w.row(w)
        bw = d.py_given_w.row(w)
        hterm = max_cross_entropy(aw, bw, pi)
        if math.isinf(hterm):
            return math.inf
        total += pw * (-entropy(aw) - entropy(bw) + hterm)
    return total


def gamma_lb_objective(d: Decomposition, pi: JointDist) -> float:
    """-H(XY|W) plus the cheapest coupling of (P_W, P_W) against the cross matrix."""
    live = np.flatnonzero(d.pw.probs > SUPPORT_EPS)
    u = d.pw.probs[live]
    u = u / u.sum()
    k = live.size
    cross = np.zeros((k, k))
    for i, w in enumerate(live):
        for j, w2 in enumerate(live):
            cross[i, j] = max_cross_entropy(
                d.px_given_w.row(int(w)), d.py_given_w.row(int(w2)), pi)
    hterm = min_expected_cross_entropy(FiniteDist(u), cross).value
    if math.isinf(hterm):
        return math.inf
    ha = np.array([entropy(d.px_given_w.row(int(w))) for w in live])
    hb = np.array([entropy(d.py_given_w.row(int(w))) for w in live])
    return float(-(u * (ha + hb)).sum() + hterm)


def _finish(pi: JointDist, rows, cols, u, a, b, tv, opts, exact_objective, kind,
            caveat=None, meta=None, extra_states=(), starts_used=None) -> BoundReport:
    from .dist import tv_distance

    feasible = tv <= opts.feas_tol
    scored = []
    for s in np.flatnonzero(feasible):
        d = _expand_witness(u[s], a[s], b[s], rows, cols, pi.nx, pi.ny)
        scored.append((exact_objective(d), int(s), d))
    # injected starts are legitimate witnesses in their own right; the engine
    # lane that began there may have wandered, so compare against the originals
    # (raw and with support dust cleaned away)
    sub = pi.matrix[np.ix_(rows, cols)]
    for offset, state in enumerate(extra_states):
        for variant, (eu, ea, eb) in enumerate((state, _cleaned_state(state, sub, opts))):
            if eu is None:
                continue
            d = _expand_witness(eu, ea, eb, rows, cols, pi.nx, pi.ny)
            if tv_distance(synthesize(d), pi) <= opts.feas_tol:
                scored.append((exact_objective(d),
                               u.shape[0] + 2 * offset + variant, d))
    if scored:
        scored.sort(key=lambda t: (t[0], t[1]))
        best_value, _, best_witness = scored[0]
        converged = True
    else:
        s = int(np.argsort(tv)[0])
        best_witness = _expand_witness(u[s], a[s], b[s], rows, cols, pi.nx, pi.ny)
        best_value = exact_objective(best_witness)
        converged = False
    return BoundReport(value=float(best_value), kind=kind, witness=best_witness,
                       starts_used=int(starts_used if starts_used is not None
                                       else u.shape[0]),
                       converged=converged, caveat=caveat, meta=meta)


def _default_k(sub_shape, opts: SearchOptions) -> int:
    k = sub_shape[0] * sub_shape[1]
    if opts.wmax is not None:
        k = int(opts.wmax)
    return max(k, 1)


def wyner_ci(pi: JointDist, opts: SearchOptions | None = None,
             extra_starts=()) -> BoundReport:
    """Best found I(XY;W) over decompositions reproducing pi (heuristic upper value)."""
    opts = opts or SearchOptions()
    sub, rows, cols = _prune(pi)
    k = _default_k(sub.shape, opts)
    extras = []
    cs = _copy_state(sub, k)
    if cs is not None:
        extras.append(cs)
    extras += [_restrict_witness(d, rows, cols, k) for d in extra_starts]
    u, a, b, tv, ns = _run_engine(sub, k, _WynerObjective(), opts, extras)
    return _finish(pi, rows, cols, u, a, b, tv, opts,
                   lambda d: wyner_objective(d), kind="heuristic-upper",
                   extra_states=extras, starts_used=ns)


def gamma_ub(pi: JointDist, opts: SearchOptions | None = None,
             extra_starts=()) -> BoundReport:
    """Single-letter coupling upper bound on the exact common information."""
    opts = opts or SearchOptions()
    sub, rows, cols = _prune(pi)
    k = _default_k(sub.shape, opts)
    extras = []
    cs = _copy_state(sub, k)
    if cs is not None:
        extras.append(cs)
    extras += [_restrict_witness(d, rows, cols, k) for d in extra_starts]
    u, a, b, tv, ns = _run_engine(sub, k, _GammaUBObjective(sub), opts, extras)
    return _finish(pi, rows, cols, u, a, b, tv, opts,
                   lambda d: gamma_ub_objective(d, pi), kind="heuristic-upper",
                   extra_states=extras, starts_used=ns)


def gamma_lb(pi: JointDist, opts: SearchOptions | None = None,
             extra_starts=()) -> BoundReport:
    """Coupling-relaxed companion of gamma_ub (its outer infimum is heuristic).

    The reported number upper-bounds the true relaxed lower bound, hence the
    caveat; it never exceeds gamma_ub evaluated on the same witness.
    """
    opts = opts or SearchOptions()
    sub, rows, cols = _prune(pi)
    k = _default_k(sub.shape, opts)
    extras = []
    cs = _copy_state(sub, k)
    if cs is not None:
        extras.append(cs)
    ub = gamma_ub(pi, opts)
    if ub.witness is not None:
        extras.append(_restrict_witness(ub.witness, rows, cols, k))
    u, a, b, tv, ns = _run_engine(sub, k, _GammaLBObjective(sub), opts, extras)
    return _finish(pi, rows, cols, u, a, b, tv, opts,
                   lambda d: gamma_lb_objective(d, pi), kind="heuristic-upper",
                   caveat="outer infimum is heuristic; value upper-bounds the "
                          "true coupling-relaxed lower bound",
                   extra_states=extras, starts_used=ns)


def common_entropy(pi: JointDist, kmax: int, opts: SearchOptions | None = None,
                   extra_starts=()) -> BoundReport:
    """Best found H(W) over decompositions of pi with at most kmax components."""
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    opts = opts or SearchOptions()
    sub, rows, cols = _prune(pi)
    k = min(kmax, 64)
    extras = []
    cs = _copy_state(sub, k)
    if cs is not None:
        extras.append(cs)
    extras += [_restrict_witness(d, rows, cols, k) for d in extra_starts]
    u, a, b, tv, ns = _run_engine(sub, k, _WeightEntropyObjective(1.0), opts, extras)
    return _finish(pi, rows, cols, u, a, b, tv, opts,
                   lambda d: entropy(d.pw), kind="heuristic-upper",
                   extra_states=extras, starts_used=ns)


# ---------------------------------------------------------------------------
# the order-infinity quantity and its Renyi relatives
# ---------------------------------------------------------------------------


def _phi_batch(pi_mat: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Phi(r) = sum_x min_{y in supp(r)} pi[x,y] / r_y, batched over rows of r."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pi_mat[None, :, :] / r[:, None, :]
    ratio = np.where(np.isnan(ratio), np.inf, ratio)  # 0/0: y carries no r-mass
    return ratio.min(axis=2).sum(axis=1)


def _simplex_grid(dim: int, denom: int) -> np.ndarray:
    combos = itertools.combinations(range(denom + dim - 1), dim - 1)
    pts = []
    for cut in combos:
        prev = -1
        parts = []
        for c in cut:
            parts.append(c - prev - 1)
            prev = c
        parts.append(denom + dim - 2 - prev)
        pts.append(parts)
    return np.asarray(pts, dtype=float) / denom


def g_infinity(pi: JointDist) -> BoundReport:
    """Smallest D_inf(Q_X Q_Y || pi) over product distributions.

    The X-marginal is eliminated analytically: for fixed Q_Y = r the optimum is
    Q_X proportional to m_x(r) = min_y pi[x,y]/r_y and the objective becomes
    -log sum_x m_x(r). A nested grid refinement over r (with a local polish)
    is exhaustive enough to certify small alphabets to 1e-4.
    """
    mat = pi.matrix
    transposed = False
    if mat.shape[1] > mat.shape[0]:
        mat = mat.T
        transposed = True
    ny = mat.shape[1]

    denom = 14 if ny <= 4 else 8
    cand = _simplex_grid(ny, denom)
    vals = _phi_batch(mat, cand)
    evals = cand.shape[0]
    keep = min(48, cand.shape[0])
    top = cand[np.argsort(vals)[::-1][:keep]]
    offsets = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=ny)))
    best_r = top[0]
    best_phi = float(vals.max())
    for level in range(1, 15):
        delta = 1.0 / (denom * 2.0 ** level)
        pts = (top[:, None, :] + delta * offsets[None, :, :]).reshape(-1, ny)
        pts = np.maximum(pts, 0.0)
        sums = pts.sum(axis=1, keepdims=True)
        pts = pts[sums[:, 0] > 0.5] / np.clip(sums[sums[:, 0] > 0.5], 1e-12, None)
        snapped = np.where(pts < delta * 0.5, 0.0, pts)
        ssum = snapped.sum(axis=1, keepdims=True)
        snapped = snapped / np.clip(ssum, 1e-12, None)
        pts = np.concatenate([pts, snapped], axis=0)
        vals = _phi_batch(mat, pts)
        evals += pts.shape[0]
        order = np.argsort(vals)[::-1]
        top = pts[order[:keep]]
        if vals[order[0]] > best_phi:
            best_phi = float(vals[order[0]])
            best_r = pts[order[0]]

    r = best_r
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.isnan(mat / r[None, :]), np.inf, mat / r[None, :])
    m = ratio.min(axis=1)
    if m.sum() <= 0:
        raise RuntimeError("degenerate product search")
    qx = m / m.sum()
    q_first, q_second = (FiniteDist(r), FiniteDist(qx)) if transposed else (FiniteDist(qx), FiniteDist(r))
    product = JointDist(np.outer(q_first.probs, q_second.probs))
    value = renyi_divergence(product, pi, math.inf)
    kind = "certified-exact" if max(pi.nx, pi.ny) <= 4 else "heuristic-upper"
    return BoundReport(value=float(value), kind=kind, witness=(q_first, q_second),
                       starts_used=int(evals), converged=True)


def _mixture_construction(pi: JointDist, qx: FiniteDist, qy: FiniteDist,
                          eps: float) -> Decomposition:
    """Decomposition with H_inf(W) = eps built from a dominating product pair."""
    nx, ny = pi.nx, pi.ny
    if eps <= 0.0:
        a = qx.probs[None, :]
        b = qy.probs[None, :]
        return Decomposition(FiniteDist([1.0]), Channel(a), Channel(b))
    prod = np.outer(qx.probs, qy.probs)
    resid = (math.exp(eps) * pi.matrix - prod) / (math.exp(eps) - 1.0)
    resid = np.where(np.abs(resid) < 1e-14, 0.0, resid)
    if resid.min() < -1e-9:
        raise ValueError("product pair does not dominate pi at the stated level")
    resid = np.clip(resid, 0.0, None)
    resid /= resid.sum()
    cells = np.argwhere(resid > SUPPORT_EPS)
    k = 1 + len(cells)
    u = np.zeros(k)
    a = np.zeros((k, nx))
    b = np.zeros((k, ny))
    u[0] = math.exp(-eps)
    a[0] = qx.probs
    b[0] = qy.probs
    for w, (i, j) in enumerate(cells, start=1):
        u[w] = (1.0 - math.exp(-eps)) * resid[i, j]
        a[w, i] = 1.0
        b[w, j] = 1.0
    u /= u.sum()
    return Decomposition(FiniteDist(u), Channel(a), Channel(b))


def g_alpha(pi: JointDist, alpha: float, kmax: int | None = None,
            opts: SearchOptions | None = None, extra_starts=()) -> BoundReport:
    """Smallest found Renyi entropy of the mixture weights, order alpha."""
    opts = opts or SearchOptions()
    sub, rows, cols = _prune(pi)
    nnz = int((sub > SUPPORT_EPS).sum())
    if kmax is None:
        kmax = sub.shape[0] * sub.shape[1] + (1 if alpha == math.inf else 0)
    if alpha == 1.0:
        return common_entropy(pi, kmax, opts, extra_starts)
    if alpha == 0.0:
        last = None
        for k in range(1, min(kmax, nnz) + 1):
            extras = []
            cs = _copy_state(sub, k)
            if cs is not None:
                extras.append(cs)
            u, a, b, tv, ns = _run_engine(sub, k, _FeasibilityOnly(), opts, extras)
            last = (u, a, b, tv, ns)
            if (tv <= opts.feas_tol).any():
                break
        u, a, b, tv, ns = last
        return _finish(pi, rows, cols, u, a, b, tv, opts,
                       lambda d: renyi_entropy(d.pw, 0.0), kind="heuristic-upper",
                       extra_states=extras, starts_used=ns)
    if alpha == math.inf:
        ginf = g_infinity(pi)
        qx, qy = ginf.witness
        if kmax >= 1 + pi.nx * pi.ny or ginf.value == 0.0:
            witness = _mixture_construction(pi, qx, qy, ginf.value)
            value = renyi_entropy(witness.pw, math.inf)
            return BoundReport(value=float(value), kind=ginf.kind, witness=witness,
                               starts_used=ginf.starts_used, converged=True)
    k = min(kmax, 64)
    extras = []
    cs = _copy_state(sub, k)
    if cs is not None:
        extras.append(cs)
    extras += [_restrict_witness(d, rows, cols, k) for d in extra_starts]
    u, a, b, tv, ns = _run_engine(sub, k, _WeightEntropyObjective(alpha), opts, extras)
    return _finish(pi, rows, cols, u, a, b, tv, opts,
                   lambda d: renyi_entropy(d.pw, alpha), kind="heuristic-upper",
                   extra_states=extras, starts_used=ns)


def nonneg_alpha_rank(a_matrix, alpha: float, kmax: int | None = None,
                      opts: SearchOptions | None = None) -> BoundReport:
    """exp of the order-alpha common weight entropy of the normalized matrix."""
    arr = np.asarray(a_matrix, dtype=float)
    if arr.ndim != 2 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("need a finite nonnegative matrix")
    total = arr.sum()
    if total <= 0:
        raise ValueError("zero matrix has no rank of this kind")
    rep = g_alpha(JointDist(arr / total), alpha, kmax=kmax, opts=opts)
    return BoundReport(value=float(math.exp(rep.value)), kind=rep.kind,
                       witness=rep.witness, starts_used=rep.starts_used,
                       converged=rep.converged, caveat=rep.caveat)


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


def check_condition_star(pi: JointDist, witness: Decomposition,
                         tol: float = 1e-8):
    """True iff pi restricted to every component's support rectangle is product.

    The witness must reproduce pi to 1e-8 total variation. Returns
    (ok, diagnostics) where diagnostics names the first violating component.
    """
    from .dist import tv_distance

    synth = synthesize(witness)
    gap = tv_distance(synth, pi)
    if gap > 1e-8:
        raise ValueError(f"witness does not reproduce the joint (TV={gap:.2e})")
    diag = {"first_violation": None, "max_defect": 0.0}
    ok = True
    for w in np.flatnonzero(witness.pw.probs > SUPPORT_EPS):
        ix = witness.px_given_w.row(int(w)).support
        iy = witness.py_given_w.row(int(w)).support
        block = pi.matrix[np.ix_(ix, iy)]
        mass = block.sum()
        if mass <= SUPPORT_EPS:
            defect = 1.0
        else:
            norm = block / mass
            approx = np.outer(norm.sum(axis=1), norm.sum(axis=0))
            defect = float(np.abs(norm - approx).max())
        diag["max_defect"] = max(diag["max_defect"], defect)
        if defect > tol and ok:
            ok = False
            diag["first_violation"] = int(w)
    return ok, diag


def is_pseudo_product(pi: JointDist):
    """Whether pi(x,y) factors as alpha(x) beta(y) on its support.

    Decided by propagating log-weights over a spanning forest of the bipartite
    support graph and checking every support cell closes to zero (all cycles
    of log pi sum to zero within 1e-8). Returns (ok, alpha, beta) with the
    positive factor vectors when ok.
    """
    mat = pi.matrix
    nx, ny = mat.shape
    log_alpha = np.full(nx, np.nan)
    log_beta = np.full(ny, np.nan)
    supp = mat > SUPPORT_EPS
    with np.errstate(divide="ignore"):
        logm = np.where(supp, np.log(np.clip(mat, _SAFE_FLOOR, None)), 0.0)
    for x0 in range(nx):
        if not math.isnan(log_alpha[x0]) or not supp[x0].any():
            continue
        log_alpha[x0] = 0.0
        stack = [("x", x0)]
        while stack:
            kind, idx = stack.pop()
            if kind == "x":
                for y in np.flatnonzero(supp[idx]):
                    if math.isnan(log_beta[y]):
                        log_beta[y] = logm[idx, y] - log_alpha[idx]
                        stack.append(("y", int(y)))
            else:
                for x in np.flatnonzero(supp[:, idx]):
                    if math.isnan(log_alpha[x]):
                        log_alpha[x] = logm[x, idx] - log_beta[idx]
                        stack.append(("x", int(x)))
    xs, ys = np.nonzero(supp)
    defects = np.abs(log_alpha[xs] + log_beta[ys] - logm[xs, ys])
    if defects.size and defects.max() > 1e-8:
        return False, None, None
    alpha = np.where(np.isnan(log_alpha), 1.0, np.exp(log_alpha))
    beta = np.where(np.isnan(log_beta), 1.0, np.exp(log_beta))
    return True, alpha, beta


def multiletter_gamma(pi: JointDist, n: int, opts: SearchOptions | None = None) -> BoundReport:
    """The coupling upper bound evaluated on the n-fold product source, n <= 2."""
    if n not in (1, 2):
        raise BudgetError("multiletter search supports n in {1, 2}")
    if pi.nx > 3 or pi.ny > 3:
        raise BudgetError("multiletter search supports alphabets up to 3x3")
    opts = opts or SearchOptions()
    if n == 1:
        rep = gamma_ub(pi, opts)
        return BoundReport(rep.value, rep.kind, rep.witness, rep.starts_used,
                           rep.converged, rep.caveat, meta={"n": 1})
    lifted = product_lift(pi, 2)
    cap = (pi.nx * pi.ny) ** 2 if opts.wmax is None else opts.wmax
    opts2 = SearchOptions(starts=opts.starts, wmax=cap, seed=opts.seed,
                          stage_iters=opts.stage_iters, polish_iters=opts.polish_iters,
                          feas_tol=opts.feas_tol, threads=opts.threads)
    # warm start: two independent copies of a single-letter witness small enough
    # to fit under the lifted cardinality cap
    warm_k = max(1, int(math.isqrt(cap)))
    warm_opts = SearchOptions(starts=opts.starts, wmax=warm_k, seed=opts.seed,
                              stage_iters=opts.stage_iters,
                              polish_iters=opts.polish_iters,
                              feas_tol=opts.feas_tol, threads=opts.threads)
    single = gamma_ub(pi, warm_opts)
    extras = []
    if single.witness is not None and single.converged:
        prod = _product_decomposition(single.witness)
        if prod.k <= cap:
            extras.append(prod)
    rep = gamma_ub(lifted, opts2, extra_starts=extras)
    return BoundReport(rep.value, rep.kind, rep.witness, rep.starts_used,
                       rep.converged, rep.caveat, meta={"n": 2})


def _product_decomposition(d: Decomposition) -> Decomposition:
    """Two independent copies of a decomposition, acting on the squared source."""
    k = d.k
    u = np.outer(d.pw.probs, d.pw.probs).ravel()
    a_rows = np.stack([np.kron(d.px_given_w.rows[i], d.px_given_w.rows[j])
                       for i in range(k) for j in range(k)])
    b_rows = np.stack([np.kron(d.py_given_w.rows[i], d.py_given_w.rows[j])
                       for i in range(k) for j in range(k)])
    return Decomposition(FiniteDist(u), Channel(a_rows), Channel(b_rows))
