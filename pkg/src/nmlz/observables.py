"""Physical outputs of a transfer matrix: populations, quadratures, conservation.

Every final-time annihilation operator is linear in the initial ones,

    o_i = sum_k u_ik c_k + v_ik c_k^dag,

where c runs over (a_1.., b_1..). For an A mode, u_ik = M_ik on A columns and
v_ik = M_ik on B columns. For a B mode, M row i describes b_i^dag, so
u_ik = conj(M_ik) on B columns and v_ik = conj(M_ik) on A columns. All
vacuum expectation values follow from
<o_i o_j> = sum_k u_ik v_jk and <o_i^dag o_j> = sum_k conj(v_ik) v_jk.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .propagator import TransferMatrix, fmt, pseudo_unitarity_residual

__all__ = [
    "PopulationTable",
    "QuadratureReport",
    "ConservationResiduals",
    "stimulated_populations",
    "spontaneous_populations",
    "population_table",
    "bogoliubov_coefficients",
    "pair_moments",
    "quadrature_variance",
    "quadrature_extrema",
    "conservation_residuals",
    "write_populations_csv",
    "write_quadrature_json",
]

GRID_STEP = 1e-3


@dataclass(frozen=True)
class PopulationTable:
    stimulated: np.ndarray  # (i, j): atoms in mode i from one atom seeded in mode j
    spontaneous: np.ndarray
    seed_scale: int = 1
    labels: tuple = ()


@dataclass(frozen=True)
class QuadratureReport:
    pair: tuple[str, str]
    mean_level: float
    oscillation_amplitude: float
    x_plus_sq: float
    x_minus_sq: float
    optimal_angle: float  # angle of minimum variance, in [0, pi)
    shift: float  # constant offset c in c + (|u| +- |v|)^2 / 2
    squeezed: bool  # x_minus_sq - shift below the vacuum value 1/2
    grid_x_plus_sq: float
    grid_x_minus_sq: float

    @property
    def shifted(self) -> tuple[float, float]:
        return self.x_plus_sq - self.shift, self.x_minus_sq - self.shift


@dataclass(frozen=True)
class ConservationResiduals:
    column_residuals: np.ndarray  # |n_jj - sum_{i != j} n_ij - 1|
    signed_column_residuals: np.ndarray  # |sum_i sigma_i sigma_j n_ij - 1|
    pseudo_unitarity: float


def _unpack(M, sigma=None) -> tuple[np.ndarray, np.ndarray, tuple]:
    if isinstance(M, TransferMatrix):
        return M.M, M.sigma, tuple(str(lab) for lab in M.labels)
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("transfer matrix must be square")
    if sigma is None:
        N = M.shape[0]
        if N % 2:
            raise ValueError("pass sigma for odd-dimensional matrices")
        sigma = np.r_[np.ones(N // 2), -np.ones(N // 2)]
    return M, np.asarray(sigma, dtype=float), ()


def stimulated_populations(M, n0: int = 1) -> np.ndarray:
    """n0 |M_ij|^2."""
    mat, _, _ = _unpack(M)
    return n0 * np.abs(mat) ** 2


def spontaneous_populations(M, sigma=None) -> np.ndarray:
    """Vacuum-seeded atoms per mode: the opposite-block row sums of |M_ij|^2."""
    mat, sig, _ = _unpack(M, sigma)
    n = np.abs(mat) ** 2
    opposite = sig[:, None] != sig[None, :]
    return np.sum(np.where(opposite, n, 0.0), axis=1)


def population_table(M, n0: int = 1, sigma=None) -> PopulationTable:
    mat, sig, labels = _unpack(M, sigma)
    return PopulationTable(stimulated_populations(mat, n0), spontaneous_populations(mat, sig), n0, labels)


def bogoliubov_coefficients(M, sigma=None) -> tuple[np.ndarray, np.ndarray]:
    """(u, v) with o_i = sum_k u_ik c_k + v_ik c_k^dag."""
    mat, sig, _ = _unpack(M, sigma)
    a_row = sig[:, None] > 0
    same = sig[:, None] == sig[None, :]
    coeff = np.where(a_row, mat, mat.conj())
    u = np.where(same, coeff, 0.0)
    v = np.where(same, 0.0, coeff)
    return u, v


def pair_moments(M, i: int, j: int, sigma=None) -> dict:
    """Vacuum moments needed for the pair (i, j) quadrature."""
    mat, sig, _ = _unpack(M, sigma)
    N = mat.shape[0]
    if not (0 <= i < N and 0 <= j < N) or i == j:
        raise ValueError(f"invalid mode pair ({i}, {j}) for dimension {N}")
    u, v = bogoliubov_coefficients(mat, sig)
    return {
        "n_i": float(np.sum(np.abs(v[i]) ** 2)),
        "n_j": float(np.sum(np.abs(v[j]) ** 2)),
        "normal": complex(np.sum(v[i].conj() * v[j])),  # <o_i^dag o_j>
        "anomalous": complex(np.sum(u[i] * v[j])),  # <o_i o_j>
        "square_i": complex(np.sum(u[i] * v[i])),  # <o_i o_i>
        "square_j": complex(np.sum(u[j] * v[j])),
    }


def _variance_terms(mom: dict) -> tuple[float, complex]:
    """<X^2>(phi) = mean + Re(e^{-2 i phi} osc)."""
    mean = 0.5 * (1.0 + mom["n_i"] + mom["n_j"]) + mom["normal"].real
    osc = 0.5 * (mom["square_i"] + mom["square_j"] + 2.0 * mom["anomalous"])
    return mean, osc


def quadrature_variance(M, pair: Sequence[int], phi, sigma=None):
    """<X^2> for X = [e^{-i phi}(o_i + o_j) + h.c.] / 2 in the evolved vacuum.

    Vacuum gives 1/2. ``phi`` may be a scalar or an array.
    """
    i, j = pair
    mean, osc = _variance_terms(pair_moments(M, i, j, sigma))
    return mean + np.real(np.exp(-2j * np.asarray(phi)) * osc)


def quadrature_extrema(M, pair: Sequence[int], sigma=None) -> QuadratureReport:
    """Closed-form extrema of the pair variance, cross-checked on a phi grid."""
    mat, sig, labels = _unpack(M, sigma)
    i, j = pair
    mom = pair_moments(mat, i, j, sig)
    mean, osc = _variance_terms(mom)
    amp = abs(osc)
    x_plus, x_minus = mean + amp, mean - amp
    # Re(e^{-2i phi} osc) = -|osc| at 2 phi = arg(osc) + pi
    angle = ((math.atan2(osc.imag, osc.real) + math.pi) / 2) % math.pi
    grid = np.arange(0.0, math.pi, GRID_STEP)
    curve = mean + np.real(np.exp(-2j * grid) * osc)
    # shift: the variance minus the dominant single-term contribution
    u, v = bogoliubov_coefficients(mat, sig)
    terms = np.abs(u[i] * v[j])
    if amp > 0 and terms.max() > 0:
        k = int(np.argmax(terms))
        shift = mean - 0.5 * (abs(u[i, k]) ** 2 + abs(v[j, k]) ** 2)
    else:
        shift = mean - 0.5
    names = (labels[i], labels[j]) if labels else (str(i), str(j))
    return QuadratureReport(
        pair=names,
        mean_level=float(mean),
        oscillation_amplitude=float(amp),
        x_plus_sq=float(x_plus),
        x_minus_sq=float(x_minus),
        optimal_angle=float(angle),
        shift=float(shift),
        squeezed=bool(x_minus - shift < 0.5 * (1 - 1e-9)),
        grid_x_plus_sq=float(curve.max()),
        grid_x_minus_sq=float(curve.min()),
    )


def conservation_residuals(M, sigma=None) -> ConservationResiduals:
    """Column pair-conservation residuals and ||M^dag Sigma M - Sigma||.

    ``column_residuals`` uses n_jj - sum_{i != j} n_ij = 1; it coincides with
    the exact identity sum_i sigma_i sigma_j n_ij = 1 (``signed_column_residuals``)
    whenever same-block off-diagonal populations vanish.
    """
    mat, sig, _ = _unpack(M, sigma)
    n = np.abs(mat) ** 2
    diag = np.diag(n)
    pairwise = np.abs(2 * diag - n.sum(axis=0) - 1.0)
    signed = np.abs((sig[:, None] * sig[None, :] * n).sum(axis=0) - 1.0)
    return ConservationResiduals(pairwise, signed, pseudo_unitarity_residual(mat, sig))


def write_populations_csv(table: PopulationTable, path, seeds: Sequence[int] | None = None, analytic: PopulationTable | None = None) -> Path:
    """Columns: mode, n_stimulated_from_<seed>..., n_spontaneous (+ analytic_ counterparts)."""
    path = Path(path)
    N = table.stimulated.shape[0]
    labels = table.labels or tuple(str(k + 1) for k in range(N))
    seeds = list(range(N)) if seeds is None else list(seeds)
    header = ["mode"] + [f"n_stimulated_from_{labels[s]}" for s in seeds] + ["n_spontaneous"]
    if analytic is not None:
        header += [f"analytic_stimulated_from_{labels[s]}" for s in seeds] + ["analytic_spontaneous"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(N):
            row = [labels[i]] + [fmt(table.stimulated[i, s]) for s in seeds] + [fmt(table.spontaneous[i])]
            if analytic is not None:
                row += [fmt(analytic.stimulated[i, s]) for s in seeds] + [fmt(analytic.spontaneous[i])]
            w.writerow(row)
    return path


def write_quadrature_json(reports: Sequence[QuadratureReport], path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([asdict(r) for r in reports], indent=2, sort_keys=True) + "\n")
    return path
