"""Closed-form asymptotic populations and squeezing for the solvable models.

A coupled level pair crossing with slope difference ds and coupling c
multiplies the seeded population by exp(2 pi |c|^2 / |ds|). In the
four-mode model the g pairs cross with |ds| = |b1 - b2| and the gamma pairs
with |ds| = |b1 + b2|, which defines

    n_g     = exp(pi |g|^2 / beta_g),          beta_g     = |b1 - b2| / 2
    n_gamma = exp(pi |gamma|^2 / beta_gamma),  beta_gamma = |b1 + b2| / 2.

When theta = arg(gamma) - arg(g) is 0 or pi the two paths from A_up to A_down
cancel and the 4x4 population matrix is

    [[P, 0, x, y], [0, P, y, x], [x, y, P, 0], [y, x, 0, P]],   P = n_g n_gamma.

Which level the seed meets first fixes (x, y): for b1 b2 > 0 the seed crosses
its gamma partner first and x = n_gamma (n_g - 1), y = n_gamma - 1; for
b1 b2 < 0 the order is reversed and x = n_g - 1, y = n_g (n_gamma - 1).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .observables import PopulationTable

__all__ = [
    "SolvabilityError",
    "NTildePair",
    "THETA_TOLERANCE",
    "effective_rates",
    "n_tilde",
    "nlz_populations",
    "is_solvable",
    "population_matrix",
    "spin_ratio",
    "spin_ratio_small_gamma_slope",
    "spontaneous_population",
    "squeezing_extrema",
]

THETA_TOLERANCE = 1e-6

FOUR_MODE_LABELS = ("A_up", "A_down", "B_up", "B_down")


class SolvabilityError(ValueError):
    """Parameters outside the class with a closed-form answer; propagate numerically."""


@dataclass(frozen=True)
class NTildePair:
    n_g: float
    n_gamma: float

    @property
    def product(self) -> float:
        return self.n_g * self.n_gamma


def _slope(value: float, name: str) -> float:
    value = float(value)
    if value == 0.0 or not math.isfinite(value):
        raise SolvabilityError(f"{name} must be finite and nonzero")
    return value


def effective_rates(b1: float, b2: float) -> tuple[float, float]:
    """(beta_g, beta_gamma): half the slope differences at the g and gamma crossings."""
    b1, b2 = _slope(b1, "b1"), _slope(b2, "b2")
    if abs(b1) == abs(b2):
        raise SolvabilityError("|b1| == |b2|: one family of coupled levels never crosses")
    return abs(b1 - b2) / 2, abs(b1 + b2) / 2


def n_tilde(g: complex, gamma: complex, b1: float, b2: float) -> NTildePair:
    beta_g, beta_gamma = effective_rates(b1, b2)
    return NTildePair(math.exp(math.pi * abs(g) ** 2 / beta_g), math.exp(math.pi * abs(gamma) ** 2 / beta_gamma))


def nlz_populations(g: complex, beta: float) -> tuple[float, float]:
    """Two-mode asymptotic (|phi_A|^2, |phi_B|^2); their difference is always 1."""
    beta = _slope(beta, "beta")
    a_sq = math.exp(math.pi * abs(g) ** 2 / abs(beta))
    return a_sq, a_sq - 1.0


def theta_of(g: complex, gamma: complex) -> float:
    """arg(gamma) - arg(g) in [0, 2 pi)."""
    return (cmath.phase(gamma) - cmath.phase(g)) % (2 * math.pi)


def is_solvable(g: complex, gamma: complex, tol: float = THETA_TOLERANCE) -> bool:
    """theta within ``tol`` of 0 or pi (any theta when a coupling vanishes)."""
    if g == 0 or gamma == 0:
        return True
    th = theta_of(g, gamma) % math.pi
    return min(th, math.pi - th) <= tol


def _require_solvable(g, gamma, tol):
    if not is_solvable(g, gamma, tol):
        raise SolvabilityError(
            f"theta = {theta_of(g, gamma):.6g} is not 0 or pi; no closed form, use numerical propagation"
        )


def _cross_entries(nt: NTildePair, b1: float, b2: float) -> tuple[float, float]:
    """(x, y): seeded-column populations of the same-spin and cross-spin partners."""
    if b1 * b2 > 0:
        return nt.n_gamma * (nt.n_g - 1.0), nt.n_gamma - 1.0
    return nt.n_g - 1.0, nt.n_g * (nt.n_gamma - 1.0)


def population_matrix(
    g: complex, gamma: complex, b1: float, b2: float, tol: float = THETA_TOLERANCE
) -> PopulationTable:
    _require_solvable(g, gamma, tol)
    nt = n_tilde(g, gamma, b1, b2)
    P = nt.product
    x, y = _cross_entries(nt, b1, b2)
    stim = np.array([[P, 0, x, y], [0, P, y, x], [x, y, P, 0], [y, x, 0, P]], dtype=float)
    return PopulationTable(stimulated=stim, spontaneous=np.full(4, P - 1.0), seed_scale=1, labels=FOUR_MODE_LABELS)


def spin_ratio(g: complex, gamma: complex, b1: float, b2: float, tol: float = THETA_TOLERANCE) -> float:
    """Down-spin atoms over up-spin atoms produced from one A_up seed."""
    col = population_matrix(g, gamma, b1, b2, tol).stimulated[:, 0]
    return float((col[1] + col[3]) / (col[0] + col[2]))


def spin_ratio_small_gamma_slope(g: complex, b1: float, b2: float) -> float:
    """lim_{gamma -> 0} spin_ratio / |gamma|^2."""
    beta_g, beta_gamma = effective_rates(b1, b2)
    n_g = math.exp(math.pi * abs(g) ** 2 / beta_g)
    weight = 1.0 if b1 * b2 > 0 else n_g
    return weight * math.pi / beta_gamma / (2 * n_g - 1.0)


def spontaneous_population(g: complex, gamma: complex, b1: float, b2: float, tol: float = THETA_TOLERANCE) -> float:
    """Vacuum-seeded atoms per mode, the same in all four modes."""
    _require_solvable(g, gamma, tol)
    return n_tilde(g, gamma, b1, b2).product - 1.0


def squeezing_extrema(
    pair: str, g: complex, gamma: complex, b1: float, b2: float, tol: float = THETA_TOLERANCE
) -> tuple[float, float, float]:
    """(X+^2, X-^2, shift) for ``same_spin_AB`` or ``cross_spin_AB`` pairs.

    The vacuum-seeded variance of X = [e^{-i phi}(a + b) + h.c.] / 2 oscillates
    between P - 1/2 +- sqrt(P z), z the seeded-column population of the
    partner mode. Written as shift + (sqrt(P) +- sqrt(z))^2 / 2 this gives
    shift = (P - z - 1) / 2.
    """
    _require_solvable(g, gamma, tol)
    nt = n_tilde(g, gamma, b1, b2)
    P = nt.product
    x, y = _cross_entries(nt, b1, b2)
    if pair == "same_spin_AB":
        z = x
    elif pair == "cross_spin_AB":
        z = y
    else:
        raise ValueError(f"unknown pair {pair!r}")
    shift = (P - z - 1.0) / 2
    root_p, root_z = math.sqrt(P), math.sqrt(z)
    return shift + 0.5 * (root_p + root_z) ** 2, shift + 0.5 * (root_p - root_z) ** 2, shift
