"""Command-line front end: quantity computation, sweeps, and seeded experiments.

Output is machine-readable (key=value lines or CSV) with 7 significant digits,
in nats unless --bits is given. Exit codes: 0 ok, 2 input error, 3 budget or
convergence failure. Identical argv produces identical bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bounds, closed_forms, synthesis
from .dist import (
    BudgetError,
    JointDist,
    ShapeMismatchError,
    entropy,
    mutual_information,
    renyi_divergence,
    renyi_entropy,
    tv_distance,
)

LOG2 = math.log(2.0)


class InputProblem(Exception):
    """Anything the caller can fix: bad file, bad flag, domain violation."""


class RunProblem(Exception):
    """Budget exceeded or the requested computation failed to converge."""


@dataclass
class DistFile:
    """On-disk joint distribution: a matrix plus labels and a normalization flag."""

    matrix: np.ndarray
    x_labels: list | None = None
    y_labels: list | None = None
    normalized: bool = True
    scale: float = 1.0


def load_dist_file(path: str) -> DistFile:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise InputProblem(f"input file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InputProblem(f"{path} is not valid JSON ({exc})")
    if not isinstance(raw, dict) or "matrix" not in raw:
        raise InputProblem(f"{path} must be a JSON object with a 'matrix' field")
    try:
        mat = np.asarray(raw["matrix"], dtype=float)
    except (TypeError, ValueError):
        raise InputProblem(f"{path}: matrix is not numeric")
    if mat.ndim != 2:
        raise InputProblem(f"{path}: matrix must be two-dimensional")
    normalized = bool(raw.get("normalized", True))
    scale = 1.0
    if not normalized:
        total = float(mat.sum())
        if total <= 0 or not math.isfinite(total):
            raise InputProblem(f"{path}: matrix total must be positive to normalize")
        scale = total
        mat = mat / total
    return DistFile(matrix=mat, x_labels=raw.get("x_labels"),
                    y_labels=raw.get("y_labels"), normalized=normalized, scale=scale)


def save_dist_file(df: DistFile, path: str) -> None:
    doc = {"matrix": [list(map(float, row)) for row in df.matrix],
           "normalized": True}
    if df.x_labels is not None:
        doc["x_labels"] = list(df.x_labels)
    if df.y_labels is not None:
        doc["y_labels"] = list(df.y_labels)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def _joint_from(path: str) -> JointDist:
    df = load_dist_file(path)
    try:
        labels_x = tuple(df.x_labels) if df.x_labels else None
        labels_y = tuple(df.y_labels) if df.y_labels else None
        return JointDist(df.matrix, labels_x, labels_y)
    except ValueError as exc:
        raise InputProblem(f"{path}: {exc}")


def _fmt(x: float, bits: bool) -> str:
    if math.isinf(x):
        return "inf"
    return f"{(x / LOG2 if bits else x):.7g}"


def _emit(lines: list[str], out_path: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _opts_from(args) -> bounds.SearchOptions:
    return bounds.SearchOptions(starts=args.starts, wmax=args.wmax,
                                seed=args.seed, threads=args.threads)


def _parse_order(text: str) -> float:
    if text in ("inf", "infinity", "oo"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise InputProblem(f"bad order/alpha value: {text}")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ci", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, opt=False, inp=False):
        sp.add_argument("--out", default=None, help="write output to this path")
        sp.add_argument("--bits", action="store_true", help="print bits, not nats")
        if inp:
            sp.add_argument("--input", required=True, help="JSON distribution file")
        if opt:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--starts", type=int, default=64)
            sp.add_argument("--wmax", type=int, default=None)
            sp.add_argument("--threads", type=int, default=1,
                            help="worker threads for per-seed experiment runs")

    sp = sub.add_parser("dsbs", help="closed-form rates of the symmetric binary source")
    sp.add_argument("--p", type=float, required=True)
    common(sp)

    sp = sub.add_parser("gaussian", help="closed-form Gaussian rate bounds")
    sp.add_argument("--rho", type=float, required=True)
    common(sp)

    sp = sub.add_parser("bounds", help="optimized bounds for a joint distribution")
    sp.add_argument("--quantity", required=True,
                    choices=["wyner", "gamma-ub", "gamma-lb"])
    common(sp, opt=True, inp=True)

    sp = sub.add_parser("entropy", help="entropies of a joint distribution")
    sp.add_argument("--alpha", default=None)
    common(sp, inp=True)

    sp = sub.add_parser("divergence", help="divergence between two joints")
    sp.add_argument("--input2", required=True)
    sp.add_argument("--order", default="1")
    common(sp, inp=True)

    sp = sub.add_parser("g-infinity", help="best product-vs-joint sup-ratio rate")
    common(sp, inp=True)

    sp = sub.add_parser("common-entropy", help="smallest H(W) over decompositions")
    sp.add_argument("--kmax", type=int, default=None)
    common(sp, opt=True, inp=True)

    sp = sub.add_parser("rank", help="nonnegative alpha-rank of a matrix")
    sp.add_argument("--alpha", default="0")
    sp.add_argument("--kmax", type=int, default=None)
    common(sp, opt=True, inp=True)

    sp = sub.add_parser("condition-star", help="product-restriction test of a witness")
    common(sp, opt=True, inp=True)

    sp = sub.add_parser("sweep-dsbs", help="CSV sweep of the binary-source rates")
    sp.add_argument("--pmin", type=float, required=True)
    sp.add_argument("--pmax", type=float, required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--plot", default=None, help="also render a figure to this path")
    common(sp)

    sp = sub.add_parser("sweep-gaussian", help="CSV sweep of the Gaussian rates")
    sp.add_argument("--rmin", type=float, required=True)
    sp.add_argument("--rmax", type=float, required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--plot", default=None)
    common(sp)

    sp = sub.add_parser("covering", help="seeded covering experiment on a binary source")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--n", type=int, default=6)
    sp.add_argument("--eps", type=float, default=0.2)
    sp.add_argument("--rate", type=float, default=None)
    sp.add_argument("--rates", default=None, help="comma-separated rate grid")
    sp.add_argument("--seeds", type=int, default=1, help="number of seeds per rate")
    sp.add_argument("--seed", type=int, default=0, help="base seed")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--plot", default=None)
    common(sp)

    sp = sub.add_parser("superblock", help="near-uniform superblock allocation check")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--eps", type=float, default=0.3)
    sp.add_argument("--rate", type=float, required=True)
    common(sp)
    return p


def _cmd_dsbs(args) -> list[str]:
    try:
        exact = closed_forms.dsbs_exact_ci(args.p)
        wyner = closed_forms.dsbs_wyner_ci(args.p)
    except ValueError as exc:
        raise InputProblem(str(exc))
    return [f"exact={_fmt(exact, args.bits)}",
            f"wyner={_fmt(wyner, args.bits)}",
            f"gap={_fmt(exact - wyner, args.bits)}"]


def _cmd_gaussian(args) -> list[str]:
    try:
        w = closed_forms.gaussian_wyner(args.rho)
        e = closed_forms.gaussian_exact_ub(args.rho)
        le = closed_forms.gaussian_li_elgamal_ub(args.rho)
    except ValueError as exc:
        raise InputProblem(str(exc))
    return [f"wyner={_fmt(w, args.bits)}",
            f"exact_ub={_fmt(e, args.bits)}",
            f"li_elgamal={_fmt(le, args.bits)}"]


def _report_lines(rep: bounds.BoundReport, args) -> list[str]:
    lines = [f"value={_fmt(rep.value, args.bits)}",
             f"kind={rep.kind}",
             f"converged={str(rep.converged).lower()}",
             f"starts={rep.starts_used}"]
    if rep.caveat:
        lines.append(f"caveat={rep.caveat}")
    return lines


def _cmd_bounds(args) -> list[str]:
    pi = _joint_from(args.input)
    opts = _opts_from(args)
    fn = {"wyner": bounds.wyner_ci, "gamma-ub": bounds.gamma_ub,
          "gamma-lb": bounds.gamma_lb}[args.quantity]
    rep = fn(pi, opts)
    if not rep.converged:
        raise RunProblem(f"{args.quantity} search did not reach feasibility")
    return _report_lines(rep, args)


def _cmd_entropy(args) -> list[str]:
    pi = _joint_from(args.input)
    lines = [f"entropy={_fmt(entropy(pi), args.bits)}",
             f"marginal_x={_fmt(entropy(pi.marginal_x()), args.bits)}",
             f"marginal_y={_fmt(entropy(pi.marginal_y()), args.bits)}",
             f"mutual_information={_fmt(mutual_information(pi), args.bits)}"]
    if args.alpha is not None:
        alpha = _parse_order(args.alpha)
        lines.append(f"renyi_{args.alpha}={_fmt(renyi_entropy(pi, alpha), args.bits)}")
    return lines


def _cmd_divergence(args) -> list[str]:
    p = _joint_from(args.input)
    q = _joint_from(args.input2)
    order = _parse_order(args.order)
    try:
        d = renyi_divergence(p, q, order)
        tv = tv_distance(p, q)
    except ShapeMismatchError as exc:
        raise InputProblem(str(exc))
    return [f"divergence={_fmt(d, args.bits)}", f"tv={tv:.7g}"]


def _cmd_g_infinity(args) -> list[str]:
    pi = _joint_from(args.input)
    rep = bounds.g_infinity(pi)
    qx, qy = rep.witness
    lines = _report_lines(rep, args)
    lines.append("qx=" + ",".join(f"{v:.7g}" for v in qx.probs))
    lines.append("qy=" + ",".join(f"{v:.7g}" for v in qy.probs))
    return lines


def _cmd_common_entropy(args) -> list[str]:
    pi = _joint_from(args.input)
    kmax = args.kmax if args.kmax is not None else pi.nx * pi.ny
    rep = bounds.common_entropy(pi, kmax, _opts_from(args))
    if not rep.converged:
        raise RunProblem("common-entropy search did not reach feasibility")
    return _report_lines(rep, args)


def _cmd_rank(args) -> list[str]:
    df = load_dist_file(args.input)
    alpha = _parse_order(args.alpha)
    try:
        rep = bounds.nonneg_alpha_rank(df.matrix * df.scale, alpha,
                                       kmax=args.kmax, opts=_opts_from(args))
    except ValueError as exc:
        raise InputProblem(str(exc))
    return [f"rank={rep.value:.7g}", f"kind={rep.kind}",
            f"converged={str(rep.converged).lower()}"]


def _cmd_condition_star(args) -> list[str]:
    pi = _joint_from(args.input)
    rep = bounds.wyner_ci(pi, _opts_from(args))
    if not rep.converged:
        raise RunProblem("no feasible decomposition found to test")
    ok, diag = bounds.check_condition_star(pi, rep.witness)
    lines = [f"holds={str(ok).lower()}",
             f"wyner={_fmt(rep.value, args.bits)}",
             f"max_defect={diag['max_defect']:.7g}"]
    if diag["first_violation"] is not None:
        lines.append(f"first_violation={diag['first_violation']}")
    return lines


def _cmd_sweep_dsbs(args) -> list[str]:
    try:
        grid = closed_forms.dsbs_grid(args.pmin, args.pmax, args.steps)
    except ValueError as exc:
        raise InputProblem(str(exc))
    rows = [(p, closed_forms.dsbs_exact_ci(p), closed_forms.dsbs_wyner_ci(p))
            for p in grid]
    lines = ["p,exact_ci,wyner_ci"]
    for p, e, w in rows:
        lines.append(f"{p:.7g},{_fmt(e, args.bits)},{_fmt(w, args.bits)}")
    if args.plot:
        from .plots import render_dsbs_sweep

        render_dsbs_sweep(rows, args.plot)
    return lines


def _cmd_sweep_gaussian(args) -> list[str]:
    if not (0.0 <= args.rmin < args.rmax < 1.0) or args.steps < 2:
        raise InputProblem("need 0 <= rmin < rmax < 1 and steps >= 2")
    grid = np.linspace(args.rmin, args.rmax, args.steps)
    rows = [(r, closed_forms.gaussian_wyner(r), closed_forms.gaussian_exact_ub(r),
             closed_forms.gaussian_li_elgamal_ub(r)) for r in grid]
    lines = ["rho,wyner,exact_ub,li_elgamal"]
    for r, w, e, le in rows:
        lines.append(f"{r:.7g},{_fmt(w, args.bits)},{_fmt(e, args.bits)},"
                     f"{_fmt(le, args.bits)}")
    if args.plot:
        from .plots import render_gaussian_sweep

        render_gaussian_sweep(rows, args.plot)
    return lines


def run_covering_experiment(p: float, n: int, eps: float, rates, seeds: int,
                            base_seed: int = 0, threads: int = 1):
    """One covering row per (rate, seed): deterministic given the arguments.

    Returns a list of dicts with keys rate, seed, d_inf, realized_rate, in
    rate-major order.
    """
    jobs = [(rate, base_seed + s) for rate in rates for s in range(seeds)]

    def one(job):
        rate, seed = job
        return synthesis.run_covering_trial(p, n, eps, rate, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, jobs))
    return [one(job) for job in jobs]


def _cmd_covering(args) -> list[str]:
    if args.rates:
        try:
            rates = [float(tok) for tok in args.rates.split(",") if tok.strip()]
        except ValueError:
            raise InputProblem(f"bad --rates list: {args.rates}")
    elif args.rate is not None:
        rates = [args.rate]
    else:
        raise InputProblem("covering needs --rate or --rates")
    if not (0.0 < args.p < 0.5):
        raise InputProblem("DSBS crossover must lie in (0, 1/2)")
    results = run_covering_experiment(args.p, args.n, args.eps, rates,
                                      args.seeds, args.seed, args.threads)
    lines = ["R,seed,d_inf,realized_rate"]
    rows = []
    for res in results:
        rows.append((res["rate"], res["seed"], res["d_inf"], res["realized_rate"]))
        lines.append(f"{res['rate']:.7g},{res['seed']},"
                     f"{_fmt(res['d_inf'], args.bits)},{res['realized_rate']:.7g}")
    if args.plot:
        from .plots import render_covering

        render_covering(rows, args.plot)
    return lines


def _cmd_superblock(args) -> list[str]:
    if not (0.0 < args.p < 0.5):
        raise InputProblem("DSBS crossover must lie in (0, 1/2)")
    decomp = closed_forms.dsbs_decomposition(args.p)
    rep = synthesis.superblock_rate_check(decomp, args.k, args.n, args.eps, args.rate)
    return [f"measured={_fmt(rep.measured, args.bits)}",
            f"bound={_fmt(rep.bound, args.bits)}",
            f"holds={str(rep.holds).lower()}",
            f"m_prime={rep.m_prime}",
            f"max_cell_gap={rep.max_cell_gap:.7g}"]


_HANDLERS = {
    "dsbs": _cmd_dsbs,
    "gaussian": _cmd_gaussian,
    "bounds": _cmd_bounds,
    "entropy": _cmd_entropy,
    "divergence": _cmd_divergence,
    "g-infinity": _cmd_g_infinity,
    "common-entropy": _cmd_common_entropy,
    "rank": _cmd_rank,
    "condition-star": _cmd_condition_star,
    "sweep-dsbs": _cmd_sweep_dsbs,
    "sweep-gaussian": _cmd_sweep_gaussian,
    "covering": _cmd_covering,
    "superblock": _cmd_superblock,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        lines = _HANDLERS[args.command](args)
    except InputProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BudgetError, RunProblem, synthesis.EmptyTypicalSetError,
            synthesis.EmptyShellError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(lines, args.out)
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
