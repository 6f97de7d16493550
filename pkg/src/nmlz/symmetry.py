"""CPT structure of four-mode transfer matrices and PT-broken spectral windows.

For real couplings, if u(t) solves i du/dt = H(t) u then so does
Pi conj(u(-t)), with Pi the spin-flip parity [[0,-1],[1,0]] on each block.
Combined with Sigma-pseudo-unitarity this forces

    M = Pi Sigma M^T Sigma Pi^T,   i.e.   M_ij = e_i e_j M_{p(j) p(i)},

with p swapping up and down within each block and e = (+, -, -, +). The
alternative pattern e = (+, -, +, -) differs only on the A-B blocks and is
kept selectable; both give M11 = M22, M33 = M44 and vanishing
M12, M21, M34, M43.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import TimeDependentMatrix
from .propagator import TransferMatrix, fmt

__all__ = [
    "CPT_SIGNS",
    "CptReport",
    "PtWindow",
    "cpt_transform",
    "gauge_fix",
    "cpt_report",
    "default_scan",
    "max_imag_profile",
    "pt_broken_windows",
    "write_windows_csv",
    "write_json",
]

SPIN_FLIP = np.array([1, 0, 3, 2])
CPT_SIGNS = {
    "derived": np.array([1.0, -1.0, -1.0, 1.0]),
    "printed": np.array([1.0, -1.0, 1.0, -1.0]),
}
PT_THRESHOLD = 1e-9
BISECTION_TOL = 1e-6


def _matrix(M) -> np.ndarray:
    mat = M.M if isinstance(M, TransferMatrix) else np.asarray(M, dtype=complex)
    if mat.shape != (4, 4):
        raise ValueError(f"CPT acts on 4x4 transfer matrices, got shape {mat.shape}")
    return mat


def cpt_transform(M, signs: str = "derived") -> np.ndarray:
    """(CPT M)_ij = e_i e_j M_{p(j) p(i)}; an involution for either sign pattern."""
    mat = _matrix(M)
    if signs not in CPT_SIGNS:
        raise ValueError(f"unknown sign pattern {signs!r}; choose from {sorted(CPT_SIGNS)}")
    e = CPT_SIGNS[signs]
    return np.outer(e, e) * mat[np.ix_(SPIN_FLIP, SPIN_FLIP)].T


def gauge_fix(M, phi: float) -> np.ndarray:
    """D M D^-1 with D = diag(1, 1, e^{-i phi}, e^{-i phi}): the transfer matrix
    of the model whose g carries no phase."""
    mat = _matrix(M)
    d = np.array([1, 1, np.exp(-1j * phi), np.exp(-1j * phi)])
    return d[:, None] * mat / d[None, :]


@dataclass(frozen=True)
class CptReport:
    residual: float  # ||M - CPT(M)||
    relative_residual: float  # residual / ||M||
    zero_entries_max: float  # max |M12|, |M21|, |M34|, |M43|
    diagonal_pairing: float  # max |M11 - M22|, |M33 - M44|
    largest_entry: float
    theta: float | None

    def holds(self, rel_tol: float = 1e-6, zero_tol: float = 1e-3) -> bool:
        return self.relative_residual < rel_tol and self.zero_entries_max < zero_tol * self.largest_entry


def cpt_report(M, theta: float | None = None, g_phase: float = 0.0, signs: str = "derived") -> CptReport:
    """CPT diagnostics after removing the phase of g from the B block."""
    mat = gauge_fix(M, g_phase) if g_phase else _matrix(M)
    residual = float(np.linalg.norm(mat - cpt_transform(mat, signs)))
    return CptReport(
        residual=residual,
        relative_residual=residual / float(np.linalg.norm(mat)),
        zero_entries_max=float(max(abs(mat[0, 1]), abs(mat[1, 0]), abs(mat[2, 3]), abs(mat[3, 2]))),
        diagonal_pairing=float(max(abs(mat[0, 0] - mat[1, 1]), abs(mat[2, 2] - mat[3, 3]))),
        largest_entry=float(np.max(np.abs(mat))),
        theta=None if theta is None else float(theta % (2 * math.pi)),
    )


# -- PT-broken windows ---------------------------------------------------------------


@dataclass(frozen=True)
class PtWindow:
    t_start: float
    t_end: float
    max_imag: float
    controlling_coupling: str


def max_imag(model: TimeDependentMatrix, t: float) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(model.evaluate(t)).imag)))


def max_imag_profile(model: TimeDependentMatrix, times: Sequence[float]) -> np.ndarray:
    return np.array([max_imag(model, t) for t in times])


def default_scan(model: TimeDependentMatrix, points: int = 4001) -> np.ndarray:
    """Uniform grid spanning every coupled crossing with generous margins."""
    crossings = model.crossings()
    if not crossings:
        return np.linspace(-10.0, 10.0, points)
    times = [c["time"] for c in crossings]
    reach = max(2 * c["coupling"] / abs(c["slope_difference"]) for c in crossings) + 1.0
    return np.linspace(min(times) - reach, max(times) + reach, points)


def _refine(model, t_in, t_out, threshold) -> float:
    """Bisect between a point inside (above threshold) and one outside."""
    while abs(t_out - t_in) > BISECTION_TOL:
        mid = 0.5 * (t_in + t_out)
        if max_imag(model, mid) > threshold:
            t_in = mid
        else:
            t_out = mid
    return 0.5 * (t_in + t_out)


def _label(model: TimeDependentMatrix, start: float, end: float) -> str:
    crossings = model.crossings()
    if not crossings:
        return "mixed"
    inside = {c["name"] for c in crossings if start <= c["time"] <= end}
    if len(inside) > 1:
        return "mixed"
    if len(inside) == 1:
        return inside.pop()
    center = 0.5 * (start + end)
    return min(crossings, key=lambda c: abs(c["time"] - center))["name"]


def pt_broken_windows(
    model: TimeDependentMatrix, scan: Sequence[float] | None = None, threshold: float = PT_THRESHOLD
) -> list[PtWindow]:
    """Intervals where some eigenvalue has |Im| > threshold, edges bisected to 1e-6."""
    scan = default_scan(model) if scan is None else np.asarray(scan, dtype=float)
    if scan.size < 2 or np.any(np.diff(scan) <= 0):
        raise ValueError("scan must be an increasing grid of at least two times")
    missed = [c["time"] for c in model.crossings() if not scan[0] <= c["time"] <= scan[-1]]
    if missed:
        warnings.warn(f"scan [{scan[0]:.4g}, {scan[-1]:.4g}] misses crossings at {missed}", stacklevel=2)
    prof = max_imag_profile(model, scan)
    broken = prof > threshold
    windows = []
    k = 0
    while k < scan.size:
        if not broken[k]:
            k += 1
            continue
        first = k
        while k + 1 < scan.size and broken[k + 1]:
            k += 1
        last = k
        start = scan[0] if first == 0 else _refine(model, scan[first], scan[first - 1], threshold)
        end = scan[-1] if last == scan.size - 1 else _refine(model, scan[last], scan[last + 1], threshold)
        windows.append(PtWindow(float(start), float(end), float(prof[first:last + 1].max()), _label(model, start, end)))
        k += 1
    return windows


def write_windows_csv(windows: Sequence[PtWindow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start", "t_end", "max_imag", "label"])
        for win in windows:
            w.writerow([fmt(win.t_start), fmt(win.t_end), fmt(win.max_imag), win.controlling_coupling])
    return path


def write_json(items, path) -> Path:
    """Serialize a CptReport or a list of PtWindow records."""
    path = Path(path)
    data = [asdict(x) for x in items] if isinstance(items, (list, tuple)) else asdict(items)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path
