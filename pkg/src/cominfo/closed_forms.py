"""Closed-form common-information values for the two fully solved source families.

Doubly symmetric binary sources (DSBS): the 2x2 joint [[a0,b0],[b0,a0]] with
a0 = (1-p)/2, b0 = p/2, equivalently generated as X = W xor A, Y = W xor B
with W ~ Bern(1/2) and A, B ~ Bern(a) independent, a = (1 - sqrt(1-2p))/2.
Bivariate Gaussians with correlation rho enter through their known rate
formulas only. Everything here is analytic; these functions double as oracles
for the numerical optimizers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist import Channel, Decomposition, FiniteDist, JointDist

LOG2 = math.log(2.0)


def binary_entropy(a: float) -> float:
    """H2(a) in nats, with the 0 log 0 convention at the endpoints."""
    if a <= 0.0 or a >= 1.0:
        return 0.0
    return -a * math.log(a) - (1.0 - a) * math.log(1.0 - a)


def _check_p(p: float) -> None:
    if not (0.0 < p < 0.5):
        raise ValueError(f"DSBS crossover must lie in (0, 1/2), got {p!r}")


@dataclass(frozen=True)
class DsbsParams:
    """Crossover p together with the derived channel flip a and joint cells."""

    p: float
    a: float
    alpha0: float
    beta0: float

    @classmethod
    def from_p(cls, p: float) -> "DsbsParams":
        _check_p(p)
        a = (1.0 - math.sqrt(1.0 - 2.0 * p)) / 2.0
        return cls(p=p, a=a, alpha0=(1.0 - p) / 2.0, beta0=p / 2.0)


def dsbs_joint(p: float) -> JointDist:
    """The symmetric 2x2 joint [[a0, b0], [b0, a0]]."""
    par = DsbsParams.from_p(p)
    return JointDist([[par.alpha0, par.beta0], [par.beta0, par.alpha0]])


def dsbs_decomposition(p: float) -> Decomposition:
    """The W xor noise construction: W ~ Bern(1/2), both channels flip with prob a."""
    par = DsbsParams.from_p(p)
    a = par.a
    bsc = Channel([[1.0 - a, a], [a, 1.0 - a]])
    return Decomposition(FiniteDist([0.5, 0.5]), bsc, bsc)


def dsbs_exact_ci(p: float) -> float:
    """Exact common information of the DSBS, in nats."""
    par = DsbsParams.from_p(p)
    a = par.a
    return (
        -2.0 * binary_entropy(a)
        - (1.0 - 2.0 * a) * math.log(0.5 * (a * a + (1.0 - a) ** 2))
        - 2.0 * a * math.log(a * (1.0 - a))
    )


def dsbs_wyner_ci(p: float) -> float:
    """Wyner common information of the DSBS, in nats."""
    par = DsbsParams.from_p(p)
    a = par.a
    return (
        -2.0 * binary_entropy(a)
        - (a * a + (1.0 - a) ** 2) * math.log(0.5 * (a * a + (1.0 - a) ** 2))
        - 2.0 * a * (1.0 - a) * math.log(a * (1.0 - a))
    )


def dsbs_lb_analytic(a: float) -> float:
    """The converse-side DSBS value written in terms of alpha0 = 1/2 (a^2 + (1-a)^2).

    Uses the mirror parameterization 1/2 + sqrt(alpha0 - 1/4); for a < 1/2 the
    square root equals 1/2 - a, so this reproduces dsbs_exact_ci through a
    different arithmetic path (useful as an identity check).
    """
    if not (0.0 < a < 0.5):
        raise ValueError(f"a must lie in (0, 1/2), got {a!r}")
    alpha0 = 0.5 * (a * a + (1.0 - a) ** 2)
    beta0 = a * (1.0 - a)
    root = math.sqrt(alpha0 - 0.25)
    return (
        -2.0 * binary_entropy(0.5 + root)
        + math.log(1.0 / alpha0)
        + (1.0 - 2.0 * root) * math.log(alpha0 / beta0)
    )


def _check_rho(rho: float) -> None:
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"correlation must lie in [0, 1), got {rho!r}")


def gaussian_wyner(rho: float) -> float:
    """Wyner common information of a bivariate Gaussian pair, in nats."""
    _check_rho(rho)
    if rho == 0.0:
        return 0.0
    return 0.5 * math.log((1.0 + rho) / (1.0 - rho))


def gaussian_exact_ub(rho: float) -> float:
    """Upper bound on the Gaussian exact common information, in nats."""
    _check_rho(rho)
    if rho == 0.0:
        return 0.0
    return gaussian_wyner(rho) + rho / (1.0 + rho)


def gaussian_li_elgamal_ub(rho: float) -> float:
    """The one-shot dyadic-decomposition upper bound, in nats."""
    _check_rho(rho)
    return 0.5 * math.log(1.0 / (1.0 - rho * rho)) + 24.0 * LOG2


def dsbs_grid(pmin: float, pmax: float, steps: int) -> np.ndarray:
    """Evenly spaced DSBS crossover grid including both endpoints."""
    if not (0.0 < pmin < pmax < 0.5):
        raise ValueError("need 0 < pmin < pmax < 1/2")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    return np.linspace(pmin, pmax, steps)
