"""Four-guide coupled-mode array realizing the four-mode sweep along z.

Ports (1, 2, 3, 4) carry (A_up, A_down, B_up^dag, B_down^dag). With z = z_scale t
the amplitudes obey i dpsi/dz = K(z) psi, K(z) = H(z / z_scale) / z_scale, up to a
fixed phase relabeling of the guides. Multiplying ports 3 and 4 by i turns the real
antisymmetric couplings of a real-coupling model into purely imaginary symmetric
ones, the anti-Hermitian realization available in photonics. Ports 1-2 and 3-4
(the diagonals of the square layout) are uncoupled.
"""

from __future__ import annotations

import cmath
import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analytic import SolvabilityError, is_solvable
from .model import ModeLabel, ModelSpec, TimeDependentMatrix, build_four_mode, gauge_transform
from .propagator import IntegrationConfig, propagate, propagate_trajectory, fmt

__all__ = ["WaveguideArray", "WaveguideResult", "map_to_waveguide", "simulate_waveguide", "write_profile_csv"]

PORT_PHASES = np.array([1, 1, 1j, 1j])


@dataclass(frozen=True)
class WaveguideArray:
    slopes: np.ndarray  # propagation-constant slopes in z
    offsets: np.ndarray
    couplings: np.ndarray  # 4x4, purely imaginary, zero on the 1-2 and 3-4 diagonals
    z_scale: float
    z_span: float | None  # half-length; None picks the propagator's default window
    # mapping record: exact inverse back to the four-mode model
    source: dict

    def coupled_mode_matrix(self, z: float) -> np.ndarray:
        return np.diag(self.slopes * z + self.offsets).astype(complex) + self.couplings

    def as_model(self) -> TimeDependentMatrix:
        """The array as a generic Sigma-pseudo-Hermitian z-dependent matrix."""
        return TimeDependentMatrix(
            slopes=self.slopes.copy(),
            offsets=self.offsets.copy(),
            couplings=self.couplings.copy(),
            n_a=2,
            labels=tuple(ModeLabel("A" if k < 2 else "B", f"port{k + 1}") for k in range(4)),
            spec=ModelSpec("waveguide", dict(self.source, z_scale=self.z_scale)),
            coupling_names={(0, 2): "g", (1, 3): "g", (0, 3): "gamma", (1, 2): "gamma"},
        )

    def to_model(self) -> TimeDependentMatrix:
        s = self.source
        return build_four_mode(s["b1"], s["b2"], s["E1"], s["E2"], s["g"], s["gamma"])

    def to_config(self) -> dict:
        s = self.source
        return {
            "kind": "waveguide",
            "z_scale": self.z_scale,
            "z_span": self.z_span,
            "b1": s["b1"],
            "b2": s["b2"],
            "E1": s["E1"],
            "E2": s["E2"],
            "g": {"abs": abs(s["g"]), "phase": cmath.phase(s["g"])},
            "gamma": {"abs": abs(s["gamma"]), "phase": cmath.phase(s["gamma"])},
        }


@dataclass(frozen=True)
class WaveguideResult:
    intensities: np.ndarray  # |psi_i(z_end)|^2 for unit input at ``input_port``
    input_port: int
    z: np.ndarray
    profile: np.ndarray  # (len(z), 4) intensities along the array


def map_to_waveguide(model: TimeDependentMatrix, z_scale: float = 1.0, z_span: float | None = None) -> WaveguideArray:
    if model.spec.kind != "four_mode":
        raise ValueError("only four-mode models map onto the four-guide array")
    if not z_scale > 0:
        raise ValueError("z_scale must be positive")
    p = model.spec.params
    if not is_solvable(p["g"], p["gamma"]):
        raise SolvabilityError("imaginary couplings realize only theta in {0, pi}")
    real_model, _ = gauge_transform(model)
    d = PORT_PHASES
    K = (d[:, None] * real_model.couplings / d[None, :]) / z_scale
    # gauge-fixed couplings are real up to rounding of e^{i theta}; keep them exactly imaginary
    K = 1j * K.imag
    return WaveguideArray(
        slopes=model.slopes / z_scale**2,
        offsets=model.offsets / z_scale,
        couplings=K,
        z_scale=float(z_scale),
        z_span=z_span,
        source=dict(p),
    )


def simulate_waveguide(
    array: WaveguideArray, input_port: int, config: IntegrationConfig | None = None, samples: int = 0
) -> WaveguideResult:
    """Unit amplitude into ``input_port`` (1-based) at -z_span; intensities at +z_span."""
    if input_port not in (1, 2, 3, 4):
        raise ValueError("input_port must be 1, 2, 3 or 4")
    cfg = config or IntegrationConfig()
    if array.z_span is not None:
        cfg = replace(cfg, T=array.z_span)
    model = array.as_model()
    result = propagate(model, cfg)
    col = input_port - 1
    intensities = np.abs(result.M[:, col]) ** 2
    z = np.array([result.t_start, result.t_end])
    profile = np.vstack([np.eye(4)[col], np.abs(result.raw[:, col]) ** 2])
    if samples >= 2:
        traj = propagate_trajectory(model, result.config, np.linspace(result.t_start, result.t_end, samples))
        z = traj.times
        profile = np.abs(traj.matrices[:, :, col]) ** 2
    return WaveguideResult(intensities=intensities, input_port=input_port, z=z, profile=profile)


def write_profile_csv(result: WaveguideResult, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "I1", "I2", "I3", "I4"])
        for z, row in zip(result.z, result.profile):
            w.writerow([fmt(z)] + [fmt(x) for x in row])
    return path
