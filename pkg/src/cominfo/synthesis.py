"""Executable synthesis machinery: splitting, truncated codebooks, exact covering.

Everything here enumerates exactly; there is no sampling noise beyond the
seeded codeword draw. Budgets are deliberate: operations refuse rather than
approximate once an enumeration would leave desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dist import (
    SUPPORT_EPS,
    BudgetError,
    Decomposition,
    FiniteDist,
    JointDist,
    renyi_divergence,
)

WORDS_BUDGET = 2 ** 20        # |W|^n enumerable sequences
CODEBOOK_BUDGET = 2 ** 16     # drawn codewords
PAIR_BUDGET = 2 ** 24         # |X|^n * |Y|^n cells


class EmptyTypicalSetError(RuntimeError):
    """No sequence satisfies the typicality constraint at this blocklength."""


class EmptyShellError(RuntimeError):
    """A codeword admits no conditionally typical output sequence."""


@dataclass(frozen=True, eq=False)
class Codebook:
    """Seed-pinned i.i.d. draw of codewords from a truncated product source."""

    n: int
    rate: float
    words: np.ndarray          # (M, n) symbol indices
    seed: int

    @property
    def size(self) -> int:
        return int(self.words.shape[0])

    @property
    def realized_rate(self) -> float:
        """log|M| / n; the requested rate rounds to an integer codebook size."""
        return float(math.log(self.size) / self.n)


@dataclass(frozen=True, eq=False)
class SplitCode:
    """An exact-synthesis split: target = e^-eps * main + (1 - e^-eps) * residual."""

    epsilon: float
    p_main: JointDist
    p_residual: JointDist
    rate_breakdown: dict = field(default_factory=dict)


def mixture_lambda(q, p) -> float:
    """Largest mixture coefficient of p inside q, e^{-D_inf(p||q)} (0 if unsupported)."""
    d = renyi_divergence(p, q, math.inf)
    return math.exp(-d) if not math.isinf(d) else 0.0


def _arrays_of(dist):
    return dist.probs if isinstance(dist, FiniteDist) else dist.matrix


def mixture_split(q, p, eps: float):
    """The residual making q = e^-eps p + (1 - e^-eps) residual, exact per cell.

    Requires D_inf(p||q) <= eps; otherwise the violating max-ratio cell is
    named in the error.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    qa = _arrays_of(q)
    pa = _arrays_of(p)
    if qa.shape != pa.shape:
        raise ValueError("operands must share an alphabet")
    dinf = renyi_divergence(p, q, math.inf)
    if dinf > eps:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(pa > SUPPORT_EPS, pa / np.where(qa > 0, qa, np.nan), 0.0)
        ratio = np.where(np.isnan(ratio), np.inf, ratio)
        cell = np.unravel_index(int(np.argmax(ratio)), pa.shape)
        raise ValueError(
            f"D_inf(p||q)={dinf:.6g} exceeds eps={eps:.6g}; max ratio at cell {cell}")
    resid = (math.exp(eps) * qa - pa) / (math.exp(eps) - 1.0)
    resid = np.where((resid < 0.0) & (resid > -1e-12), 0.0, resid)
    if isinstance(q, FiniteDist):
        return FiniteDist(resid)
    return JointDist(resid)


def exact_synthesis_rate(rate_main: float, eps_n: float, n: int,
                         alphabet_product_log: float) -> float:
    """Total rate of the split construction: 1/n + e^-eps R + (1 - e^-eps) log|X||Y|."""
    if eps_n < 0.0:
        raise ValueError("eps_n must be nonnegative")
    lam = math.exp(-eps_n)
    return 1.0 / n + lam * rate_main + (1.0 - lam) * alphabet_product_log


def build_split_code(target: JointDist, approx: JointDist, eps: float,
                     rate_main: float, n: int) -> SplitCode:
    """Bundle an approximate synthesizer into an exact one via the mixture split."""
    resid = mixture_split(target, approx, eps)
    lam = math.exp(-eps)
    logxy = math.log(target.nx) + math.log(target.ny)
    breakdown = {
        "prefix_bit": 1.0 / n,
        "main": lam * rate_main,
        "residual": (1.0 - lam) * logxy,
        "total": exact_synthesis_rate(rate_main, eps, n, logxy),
    }
    return SplitCode(epsilon=eps, p_main=approx, p_residual=resid,
                     rate_breakdown=breakdown)


def is_strongly_typical(seq, p: FiniteDist, eps: float) -> bool:
    """Whether the sequence's type is within a factor (1 +- eps) of p, per symbol.

    Symbols outside supp(p) disqualify the sequence (their budget is eps*0).
    """
    arr = np.asarray(seq, dtype=int)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("need a nonempty 1-D symbol sequence")
    if arr.min() < 0 or arr.max() >= p.n:
        raise ValueError("sequence contains symbols outside the alphabet")
    types = np.bincount(arr, minlength=p.n) / arr.size
    return bool(np.all(np.abs(types - p.probs) <= eps * p.probs + 1e-12))


def _all_sequences(n_symbols: int, n: int) -> np.ndarray:
    """All length-n sequences over [0, n_symbols), most significant symbol first."""
    count = n_symbols ** n
    idx = np.arange(count)
    seqs = np.empty((count, n), dtype=np.int64)
    for pos in range(n - 1, -1, -1):
        seqs[:, pos] = idx % n_symbols
        idx //= n_symbols
    return seqs


def build_truncated_codebook(decomp: Decomposition, n: int, eps: float,
                             rate: float, seed: int) -> Codebook:
    """Draw round(e^{nR}) i.i.d. codewords from Q_W^n truncated to its typical set.

    Truncation keeps the sequences strongly typical at level eps/2; the draw is
    fully determined by the seed.
    """
    qw = decomp.pw
    if qw.n ** n > WORDS_BUDGET:
        raise BudgetError(f"|W|^n = {qw.n ** n} exceeds {WORDS_BUDGET}")
    m_size = max(1, round(math.exp(n * rate)))
    if m_size > CODEBOOK_BUDGET:
        raise BudgetError(f"codebook size {m_size} exceeds {CODEBOOK_BUDGET}")
    seqs = _all_sequences(qw.n, n)
    counts = (seqs[:, :, None] == np.arange(qw.n)[None, None, :]).sum(axis=1)
    types = counts / n
    ok = np.all(np.abs(types - qw.probs) <= (eps / 2.0) * qw.probs + 1e-12, axis=1)
    if not ok.any():
        raise EmptyTypicalSetError(
            f"no length-{n} sequence is eps/2-typical for this source (eps={eps})")
    with np.errstate(divide="ignore"):
        logq = np.where(qw.probs > 0, np.log(np.clip(qw.probs, 1e-300, None)), -np.inf)
    logp = (counts * np.where(np.isfinite(logq), logq, -1e9)).sum(axis=1)
    probs = np.where(ok, np.exp(logp - logp[ok].max()), 0.0)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    draw = rng.choice(seqs.shape[0], size=m_size, replace=True, p=probs)
    return Codebook(n=n, rate=rate, words=seqs[draw], seed=seed)


def _shell_mask(counts: np.ndarray, joint: np.ndarray, n: int, eps: float) -> np.ndarray:
    """Pair-typicality mask with a half-count floor on the per-cell deviation.

    The relative window eps*Q can be narrower than the integer resolution of
    length-n counts; widening it to half a count keeps the construction usable
    at small n and coincides with the plain relative window once n is large.
    """
    bound = np.maximum(eps * joint, 0.5 / n)
    bound = np.where(joint > SUPPORT_EPS, bound, 0.0)
    return np.all(np.abs(counts / n - joint) <= bound + 1e-12, axis=(1, 2))


def _conditional_dist(word: np.ndarray, channel_rows: np.ndarray, pw: np.ndarray,
                      n: int, eps: float, out_onehot: np.ndarray) -> np.ndarray:
    """Truncated-renormalized product conditional given one codeword."""
    k, n_out = channel_rows.shape
    wh = np.zeros((n, k))
    wh[np.arange(n), word] = 1.0
    counts = np.einsum("nk,mna->mka", wh, out_onehot)
    joint = pw[:, None] * channel_rows
    mask = _shell_mask(counts, joint, n, eps)
    if not mask.any():
        raise EmptyShellError(f"empty conditional shell for codeword {tuple(word)}")
    with np.errstate(divide="ignore"):
        logc = np.where(channel_rows > 0,
                        np.log(np.clip(channel_rows, 1e-300, None)), -1e9)
    scores = np.einsum("mka,ka->m", counts, logc)
    probs = np.where(mask, np.exp(scores - scores[mask].max()), 0.0)
    total = probs.sum()
    if total <= 0.0:
        raise EmptyShellError(f"empty conditional shell for codeword {tuple(word)}")
    return probs / total


def synthesized_dist(cb: Codebook, decomp: Decomposition, n: int,
                     eps: float) -> JointDist:
    """Exact output distribution of the codebook with truncated product generators."""
    nx = decomp.px_given_w.n_outputs
    ny = decomp.py_given_w.n_outputs
    if (nx ** n) * (ny ** n) > PAIR_BUDGET:
        raise BudgetError("output enumeration exceeds the pair budget")
    xs = _all_sequences(nx, n)
    ys = _all_sequences(ny, n)
    xh = np.zeros((xs.shape[0], n, nx))
    xh[np.arange(xs.shape[0])[:, None], np.arange(n)[None, :], xs] = 1.0
    yh = np.zeros((ys.shape[0], n, ny))
    yh[np.arange(ys.shape[0])[:, None], np.arange(n)[None, :], ys] = 1.0
    pw = decomp.pw.probs
    acc = np.zeros((xs.shape[0], ys.shape[0]))
    for word in cb.words:
        px = _conditional_dist(word, decomp.px_given_w.rows, pw, n, eps, xh)
        py = _conditional_dist(word, decomp.py_given_w.rows, pw, n, eps, yh)
        acc += np.outer(px, py)
    acc /= cb.size
    return JointDist(acc)


def covering_dinf(cb: Codebook, decomp: Decomposition, n: int, eps: float,
                  target: JointDist) -> float:
    """Exact D_inf between the codebook's output and the target product source."""
    synth = synthesized_dist(cb, decomp, n, eps)
    if synth.matrix.shape != target.matrix.shape:
        raise ValueError("target shape does not match the lifted output alphabet")
    return renyi_divergence(synth, target, math.inf)


@dataclass(frozen=True)
class SuperblockReport:
    """Measured vs predicted D_inf for the near-uniform allocation of a superblock."""

    measured: float
    bound: float
    holds: bool
    m_prime: int
    max_cell_gap: float
    typical_fraction: float


def superblock_rate_check(decomp_k: Decomposition, k: int, n: int, eps: float,
                          rate_prime: float) -> SuperblockReport:
    """Simulate n independent k-blocks from a near-uniform seed and check the rate bound.

    The W-distribution of the k-block code is quantized onto m' = round(e^{nkR'})
    uniform atoms by floor/ceil allocation over its weakly typical set; the
    resulting D_inf against the truncated target must stay below
    log(1 + e^{-nk (R' - (H(W)+eps)/k)}).
    """
    qw = decomp_k.pw
    if qw.n ** n > WORDS_BUDGET:
        raise BudgetError("superblock enumeration exceeds the word budget")
    m_prime = max(1, round(math.exp(n * k * rate_prime)))
    if m_prime > 2 ** 26:
        raise BudgetError("allocation size exceeds budget")
    seqs = _all_sequences(qw.n, n)
    with np.errstate(divide="ignore"):
        logq = np.where(qw.probs > 0, np.log(np.clip(qw.probs, 1e-300, None)), -1e9)
    logp = logq[seqs].sum(axis=1)
    h = float(-(qw.probs[qw.probs > SUPPORT_EPS]
                * np.log(qw.probs[qw.probs > SUPPORT_EPS])).sum())
    ok = np.abs(-logp / n - h) <= eps + 1e-12
    if not ok.any():
        raise EmptyTypicalSetError("weakly typical set is empty at this blocklength")
    q_trunc = np.where(ok, np.exp(logp), 0.0)
    q_trunc /= q_trunc.sum()
    scaled = m_prime * q_trunc
    base = np.floor(scaled)
    remainder = m_prime - int(base.sum())
    frac = scaled - base
    order = np.argsort(-frac, kind="stable")
    base[order[:remainder]] += 1.0
    p_tilde = base / m_prime
    supp = p_tilde > 0
    measured = float(np.log((p_tilde[supp] / q_trunc[supp]).max())) if supp.any() else 0.0
    bound = math.log(1.0 + math.exp(-n * k * (rate_prime - (h + eps) / k)))
    max_gap = float(np.abs(p_tilde - q_trunc).max())
    return SuperblockReport(
        measured=measured,
        bound=bound,
        holds=bool(measured <= bound + 1e-12),
        m_prime=m_prime,
        max_cell_gap=max_gap,
        typical_fraction=float(ok.mean()),
    )


def run_covering_trial(p_crossover: float, n: int, eps: float, rate: float,
                       seed: int):
    """One covering experiment row for the symmetric binary source."""
    from .closed_forms import dsbs_decomposition, dsbs_joint
    from .dist import product_lift

    decomp = dsbs_decomposition(p_crossover)
    cb = build_truncated_codebook(decomp, n, eps, rate, seed)
    target = product_lift(dsbs_joint(p_crossover), n)
    dinf = covering_dinf(cb, decomp, n, eps, target)
    return {"rate": rate, "seed": seed, "d_inf": dinf,
            "realized_rate": cb.realized_rate}
