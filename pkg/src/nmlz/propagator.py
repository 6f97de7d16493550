"""Numerical transfer matrices for i dPhi/dt = H(t) Phi on [-T, +T].

The raw fundamental matrix maps the diabatic operators at -T to +T. Finite T
leaves an O(coupling / (slope T)) admixture of the other diabatic states,
which would contaminate small populations. ``frame_order`` removes it by
expressing both ends in adiabatic (order 1) or superadiabatic (order 2)
eigenbases of H(+-T), normalized against Sigma and phase-fixed so each
basis vector reduces to its diabatic unit vector as T grows.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .model import Spectrum, TimeDependentMatrix, instantaneous_spectrum

__all__ = [
    "IntegrationError",
    "GrowthLimitError",
    "IntegrationConfig",
    "TransferMatrix",
    "EvolutionTrajectory",
    "default_window",
    "predicted_growth",
    "propagate",
    "propagate_between",
    "propagate_trajectory",
    "casimir_drift",
    "pseudo_unitarity_residual",
    "write_trajectory_csv",
]

log = logging.getLogger(__name__)

WINDOW_WIDTHS = 40.0  # transition widths kept on each side of the outermost crossing
MIN_WINDOW = 10.0


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t = {time:.6g})")
        self.time = time


class GrowthLimitError(IntegrationError):
    """Predicted amplitude growth exceeds what double precision can resolve."""


@dataclass(frozen=True)
class IntegrationConfig:
    T: float | None = None  # None: default_window(model)
    rtol: float = 1e-12
    atol: float = 1e-14
    picture: str = "auto"  # "direct", "interaction", or "auto" (interaction for T >= 50)
    samples: int = 201
    method: str = "gauss6"  # "gauss6" or "dop853"
    frame_order: int = 2  # 0 raw diabatic, 1 adiabatic, 2 superadiabatic boundary frames
    residual_threshold: float = 1e-8
    growth_limit: float = 1e12

    def __post_init__(self):
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be positive")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.picture not in ("auto", "direct", "interaction"):
            raise ValueError(f"unknown picture {self.picture!r}")
        if self.method not in ("gauss6", "dop853"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.frame_order not in (0, 1, 2):
            raise ValueError("frame_order must be 0, 1 or 2")
        if self.samples < 2:
            raise ValueError("samples must be at least 2")

    def resolved(self, model: TimeDependentMatrix) -> "IntegrationConfig":
        T = default_window(model) if self.T is None else float(self.T)
        picture = self.picture
        if picture == "auto":
            picture = "interaction" if T >= 50 else "direct"
        return replace(self, T=T, picture=picture)


@dataclass(frozen=True)
class TransferMatrix:
    """Phi(t_end) = raw @ Phi(t_start); ``M`` is raw seen in the boundary frames."""

    M: np.ndarray
    raw: np.ndarray
    t_start: float
    t_end: float
    config: IntegrationConfig
    sigma: np.ndarray
    labels: tuple
    pseudo_unitarity: float
    steps: int = 0
    rejected: int = 0
    warnings: tuple[str, ...] = ()

    @property
    def n_a(self) -> int:
        return int(np.sum(self.sigma > 0))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.M) ** 2


@dataclass(frozen=True)
class EvolutionTrajectory:
    times: np.ndarray
    matrices: np.ndarray  # raw M(t_k, -T), shape (K, N, N)
    eigenvalues: Spectrum
    casimir_drift: np.ndarray
    sigma: np.ndarray
    config: IntegrationConfig
    warnings: tuple[str, ...] = field(default=())


def default_window(model: TimeDependentMatrix, widths: float = WINDOW_WIDTHS) -> float:
    """Half-window T covering every coupled crossing plus ``widths`` transition widths.

    The width of a crossing with coupling c and slope difference ds is taken
    as max(c / |ds|, 1 / sqrt|ds|): the first term dominates strong coupling,
    the second is the intrinsic time scale of the sweep.
    """
    T = MIN_WINDOW
    for cr in model.crossings():
        ds = abs(cr["slope_difference"])
        width = max(cr["coupling"] / ds, 1.0 / math.sqrt(ds))
        T = max(T, abs(cr["time"]) + widths * width)
    return float(T)


def predicted_growth(model: TimeDependentMatrix) -> float:
    """Rough amplitude scale of the largest transfer-matrix entry.

    Each coupled crossing multiplies populations by exp(2 pi |c|^2 / |ds|);
    the estimate takes the worst column product and returns its square root.
    """
    worst = 0.0
    for j in range(model.dimension):
        total = 0.0
        for cr in model.crossings():
            if j in cr["pair"]:
                total += 2 * math.pi * cr["coupling"] ** 2 / abs(cr["slope_difference"])
        worst = max(worst, total)
    return math.exp(0.5 * worst)


def pseudo_unitarity_residual(M: np.ndarray, sigma: np.ndarray) -> float:
    """Frobenius norm of M^dag Sigma M - Sigma."""
    return float(np.linalg.norm(M.conj().T @ (sigma[:, None] * M) - np.diag(sigma)))


# -- boundary frames --------------------------------------------------------------


def _eigenframe(H: np.ndarray, reference: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of H ordered to match ``reference`` energies, Sigma-normalized,
    with the k-th vector's k-th component real positive."""
    w, V = np.linalg.eig(H)
    _, cols = linear_sum_assignment(np.abs(reference[:, None] - w[None, :]))
    w, V = w[cols], V[:, cols]
    for k in range(len(w)):
        V[:, k] *= np.exp(-1j * np.angle(V[k, k]))
        norm = np.real(np.vdot(V[:, k], sigma * V[:, k]))
        if norm * sigma[k] <= 0:
            raise IntegrationError("boundary eigenvector has wrong Sigma-norm sign; window inside a PT-broken region?")
        V[:, k] /= math.sqrt(abs(norm))
    return w, V


def boundary_frame(model: TimeDependentMatrix, t: float, order: int) -> np.ndarray:
    """Columns are the (super)adiabatic basis at time t expressed in the diabatic basis."""
    N = model.dimension
    if order == 0:
        return np.eye(N, dtype=complex)
    sig = model.sigma
    w, V = _eigenframe(model.evaluate(t), model.diabatic_energies(t), sig)
    if np.max(np.abs(w.imag)) > 1e-9 * max(1.0, np.max(np.abs(w))):
        raise IntegrationError("spectrum at the window edge is not real; enlarge T", t)
    if order == 1:
        return V
    d = 1e-3 * max(1.0, abs(t))
    _, Vp = _eigenframe(model.evaluate(t + d), model.diabatic_energies(t + d), sig)
    _, Vm = _eigenframe(model.evaluate(t - d), model.diabatic_energies(t - d), sig)
    connection = np.linalg.solve(V, (Vp - Vm) / (2 * d))
    # V is Sigma-unitary, so V^-1 dV/dt satisfies X^dag Sigma = -Sigma X exactly;
    # project out the finite-difference error so that W is Sigma-unitary too
    connection = 0.5 * (connection - sig[:, None] * connection.conj().T * sig[None, :])
    H_ad = np.diag(w.real) - 1j * connection
    _, W = _eigenframe(H_ad, w.real, sig)
    return V @ W


# -- integration ------------------------------------------------------------------


def _diabatic_phase(model: TimeDependentMatrix, t: float) -> np.ndarray:
    return 0.5 * model.slopes * t * t + model.offsets * t


def _integrate(model: TimeDependentMatrix, cfg: IntegrationConfig, times: np.ndarray) -> tuple[np.ndarray, int, int]:
    """States Phi(t_k) = U(t_k, times[0]) at each output time (direct picture)."""
    interaction = cfg.picture == "interaction"
    N = model.dimension
    if interaction:
        Y0 = np.diag(np.exp(1j * _diabatic_phase(model, times[0]))).astype(np.complex128)
    else:
        Y0 = np.eye(N, dtype=np.complex128)
    out = np.empty((times.size, N, N), dtype=np.complex128)
    kernel = _kernels.gauss6 if cfg.method == "gauss6" else _kernels.dop853
    status, t_fail, steps, rejected = kernel(
        np.ascontiguousarray(times, dtype=np.float64),
        Y0,
        np.ascontiguousarray(model.slopes, dtype=np.float64),
        np.ascontiguousarray(model.offsets, dtype=np.float64),
        np.ascontiguousarray(model.couplings, dtype=np.complex128),
        interaction,
        float(cfg.rtol),
        float(cfg.atol),
        1e-2,
        out,
    )
    if status == 1:
        raise IntegrationError("step size underflow", t_fail)
    if status == 2:
        raise IntegrationError("step budget exhausted", t_fail)
    if interaction:
        for k, t in enumerate(times):
            out[k] = np.exp(-1j * _diabatic_phase(model, t))[:, None] * out[k]
    return out, steps, rejected


def _check_growth(model: TimeDependentMatrix, cfg: IntegrationConfig) -> None:
    growth = predicted_growth(model)
    if growth > cfg.growth_limit:
        raise GrowthLimitError(
            f"predicted amplitude growth {growth:.3g} exceeds the limit {cfg.growth_limit:.3g}; "
            "double precision cannot resolve the small entries"
        )


def propagate(model: TimeDependentMatrix, config: IntegrationConfig | None = None) -> TransferMatrix:
    """Transfer matrix over [-T, +T], reported in the boundary frames."""
    cfg = (config or IntegrationConfig()).resolved(model)
    _check_growth(model, cfg)
    T = cfg.T
    states, steps, rejected = _integrate(model, cfg, np.array([-T, T]))
    raw = states[-1]
    M = raw
    if cfg.frame_order:
        F_end = boundary_frame(model, T, cfg.frame_order)
        F_start = boundary_frame(model, -T, cfg.frame_order)
        M = np.linalg.solve(F_end, raw @ F_start)
    residual = pseudo_unitarity_residual(M, model.sigma)
    notes = []
    if residual > cfg.residual_threshold:
        notes.append(f"pseudo-unitarity residual {residual:.3g} above threshold {cfg.residual_threshold:.3g}")
        log.warning(notes[-1])
    return TransferMatrix(
        M=M,
        raw=raw,
        t_start=-T,
        t_end=T,
        config=cfg,
        sigma=model.sigma,
        labels=model.labels,
        pseudo_unitarity=residual,
        steps=int(steps),
        rejected=int(rejected),
        warnings=tuple(notes),
    )


def propagate_between(
    model: TimeDependentMatrix, t_start: float, t_end: float, config: IntegrationConfig | None = None
) -> np.ndarray:
    """Raw U(t_end, t_start) in the diabatic basis (no boundary frames)."""
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    cfg = (config or IntegrationConfig()).resolved(model)
    _check_growth(model, cfg)
    states, _, _ = _integrate(model, cfg, np.array([t_start, t_end], dtype=float))
    return states[-1]


def propagate_trajectory(
    model: TimeDependentMatrix, config: IntegrationConfig | None = None, times: Sequence[float] | None = None
) -> EvolutionTrajectory:
    """Raw M(t_k, -T) at ``samples`` evenly spaced times (or the given times)."""
    cfg = (config or IntegrationConfig()).resolved(model)
    _check_growth(model, cfg)
    T = cfg.T
    if times is None:
        times = np.linspace(-T, T, cfg.samples)
    times = np.asarray(times, dtype=float)
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("trajectory needs at least two increasing sample times")
    if times[0] != -T:
        times = np.concatenate([[-T], times])
    states, _, _ = _integrate(model, cfg, times)
    sig = model.sigma
    drift = np.array([pseudo_unitarity_residual(Mk, sig) for Mk in states])
    notes = ()
    if drift.max() > cfg.residual_threshold:
        notes = (f"casimir drift {drift.max():.3g} above threshold {cfg.residual_threshold:.3g}",)
        log.warning(notes[0])
    return EvolutionTrajectory(
        times=times,
        matrices=states,
        eigenvalues=instantaneous_spectrum(model, times),
        casimir_drift=drift,
        sigma=sig,
        config=cfg,
        warnings=notes,
    )


def casimir_drift(trajectory: EvolutionTrajectory) -> float:
    """Largest ||M^dag Sigma M - Sigma|| over the trajectory samples."""
    if trajectory.times.size == 0:
        raise ValueError("empty trajectory")
    return float(np.max(trajectory.casimir_drift))


def write_trajectory_csv(trajectory: EvolutionTrajectory, path: str | Path) -> Path:
    """CSV with t, Re/Im of every entry (row-major, 1-based names) and drift."""
    path = Path(path)
    N = trajectory.matrices.shape[1]
    header = ["t"]
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            header += [f"M_{i}_{j}_re", f"M_{i}_{j}_im"]
    header.append("drift")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, M, d in zip(trajectory.times, trajectory.matrices, trajectory.casimir_drift):
            row = [fmt(t)]
            for z in M.ravel():
                row += [fmt(z.real), fmt(z.imag)]
            row.append(fmt(d))
            w.writerow(row)
    return path


def fmt(x: float) -> str:
    """Fixed 12-significant-digit float formatting used by every CSV writer."""
    return f"{float(x):.12g}"
