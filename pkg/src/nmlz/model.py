"""Linear-sweep non-Hermitian level-crossing models.

All models share one matrix form in the Heisenberg picture,

    H(t) = diag(slopes * t + offsets) + C,

over the basis (a_1 .. a_n, b_1^dag .. b_m^dag). The constant coupling
matrix C only connects the A block to the B block, with the lower-left
block equal to minus the conjugate transpose of the upper-right one. That
sign structure makes H pseudo-Hermitian with respect to
Sigma = diag(+1 on A, -1 on B).
"""

from __future__ import annotations

import cmath
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "ModelError",
    "DegenerateCrossingWarning",
    "ModeLabel",
    "ModelSpec",
    "TimeDependentMatrix",
    "Spectrum",
    "build_two_mode",
    "build_four_mode",
    "build_general",
    "instantaneous_spectrum",
    "gauge_transform",
    "coupling_phases",
    "model_from_config",
    "load_model_config",
    "model_to_config",
]


class ModelError(ValueError):
    """Invalid model parameters or configuration."""


class DegenerateCrossingWarning(UserWarning):
    """Raised when a pair of coupled levels never crosses (parallel slopes)."""


@dataclass(frozen=True)
class ModeLabel:
    species: str  # "A" or "B"
    name: str  # "up", "down" or an index for general models

    def __post_init__(self):
        if self.species not in ("A", "B"):
            raise ModelError(f"species must be 'A' or 'B', got {self.species!r}")

    @property
    def block(self) -> str:
        return "annihilation" if self.species == "A" else "creation-conjugate"

    def __str__(self) -> str:
        return f"{self.species}_{self.name}"

    @classmethod
    def parse(cls, text: str) -> "ModeLabel":
        species, _, name = text.partition("_")
        if not name:
            raise ModelError(f"mode label must look like 'A_up', got {text!r}")
        return cls(species.upper(), name)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative parameters of a model, as read from a config.

    ``params`` holds the kind-specific scalars: ``beta, g`` for the two-mode
    model, ``b1, b2, E1, E2, g, gamma`` for the four-mode model, and
    ``slopes_a, slopes_b, offsets_a, offsets_b, G`` for the general model.
    """

    kind: str
    params: Mapping[str, Any]

    @property
    def theta(self) -> float | None:
        """Phase difference arg(gamma) - arg(g) in [0, 2pi) (four-mode only)."""
        if self.kind != "four_mode":
            return None
        return (cmath.phase(self.params["gamma"]) - cmath.phase(self.params["g"])) % (2 * math.pi)


@dataclass(frozen=True, eq=False)
class TimeDependentMatrix:
    """H(t) = diag(slopes*t + offsets) + couplings, with n_a A-block modes."""

    slopes: np.ndarray
    offsets: np.ndarray
    couplings: np.ndarray
    n_a: int
    labels: tuple[ModeLabel, ...]
    spec: ModelSpec
    # pairs (i, j, name) of A-B couplings, used for windows and crossing bounds
    coupling_names: Mapping[tuple[int, int], str] = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.slopes, self.offsets, self.couplings):
            arr.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.slopes.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        sig = np.ones(self.dimension)
        sig[self.n_a:] = -1.0
        return sig

    def evaluate(self, t: float) -> np.ndarray:
        return np.diag(self.slopes * t + self.offsets).astype(complex) + self.couplings

    __call__ = evaluate

    def diabatic_energies(self, t: float) -> np.ndarray:
        return self.slopes * t + self.offsets

    def pseudo_hermiticity_residual(self, t: float) -> float:
        h = self.evaluate(t)
        sig = self.sigma
        return float(np.linalg.norm(sig[:, None] * h * sig[None, :] - h.conj().T))

    def crossings(self) -> list[dict]:
        """Diabatic crossings of A-B level pairs with a nonzero coupling.

        Each entry carries the pair indices, the crossing time, the slope
        difference, the coupling magnitude and the coupling name.
        """
        out = []
        for i in range(self.n_a):
            for j in range(self.n_a, self.dimension):
                c = max(abs(self.couplings[i, j]), abs(self.couplings[j, i]))
                if c == 0.0:
                    continue
                ds = self.slopes[i] - self.slopes[j]
                if ds == 0.0:
                    continue
                t_cross = -(self.offsets[i] - self.offsets[j]) / ds
                out.append(
                    dict(
                        pair=(i, j),
                        time=float(t_cross),
                        slope_difference=float(ds),
                        coupling=float(c),
                        name=self.coupling_names.get((i, j), f"G[{j - self.n_a}][{i}]"),
                    )
                )
        return out


def _check_slope(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value == 0.0:
        raise ModelError(f"{name} must be a finite nonzero sweep rate, got {value}")
    return value


def build_two_mode(beta: float, g: complex) -> TimeDependentMatrix:
    """Two-mode matrix [[beta t, g*], [-g, -beta t]] on (a, b^dag)."""
    beta = _check_slope(beta, "beta")
    g = complex(g)
    couplings = np.array([[0, g.conjugate()], [-g, 0]], dtype=complex)
    return TimeDependentMatrix(
        slopes=np.array([beta, -beta]),
        offsets=np.zeros(2),
        couplings=couplings,
        n_a=1,
        labels=(ModeLabel("A", "1"), ModeLabel("B", "1")),
        spec=ModelSpec("two_mode", {"beta": beta, "g": g}),
        coupling_names={(0, 1): "g"},
    )


def build_four_mode(b1: float, b2: float, E1: float, E2: float, g: complex, gamma: complex) -> TimeDependentMatrix:
    """Four-mode matrix on (a_up, a_down, b_up^dag, b_down^dag).

    Diagonal (b1 t + E1, -b1 t + E1, b2 t + E2, -b2 t + E2), upper-right block
    [[g*, -gamma*], [gamma*, g*]] and lower-left block [[-g, -gamma], [gamma, -g]].
    """
    b1 = _check_slope(b1, "b1")
    b2 = _check_slope(b2, "b2")
    g, gamma = complex(g), complex(gamma)
    if abs(b1) == abs(b2):
        which = "g" if b1 == b2 else "gamma"
        warnings.warn(
            f"|b1| == |b2|: the {which}-coupled level pairs are parallel and never cross; "
            "the closed-form population matrix does not apply",
            DegenerateCrossingWarning,
            stacklevel=2,
        )
    gc, gac = g.conjugate(), gamma.conjugate()
    couplings = np.array(
        [
            [0, 0, gc, -gac],
            [0, 0, gac, gc],
            [-g, -gamma, 0, 0],
            [gamma, -g, 0, 0],
        ],
        dtype=complex,
    )
    return TimeDependentMatrix(
        slopes=np.array([b1, -b1, b2, -b2]),
        offsets=np.array([E1, E1, E2, E2], dtype=float),
        couplings=couplings,
        n_a=2,
        labels=(ModeLabel("A", "up"), ModeLabel("A", "down"), ModeLabel("B", "up"), ModeLabel("B", "down")),
        spec=ModelSpec("four_mode", {"b1": b1, "b2": b2, "E1": float(E1), "E2": float(E2), "g": g, "gamma": gamma}),
        coupling_names={(0, 2): "g", (1, 3): "g", (0, 3): "gamma", (1, 2): "gamma"},
    )


def build_general(
    a_slopes: Sequence[float],
    b_slopes: Sequence[float],
    a_offsets: Sequence[float],
    b_offsets: Sequence[float],
    G: Sequence[Sequence[complex]] | np.ndarray,
) -> TimeDependentMatrix:
    """General n x m model on (a_1..a_n, b_1^dag..b_m^dag).

    ``G`` has one row per B mode and one column per A mode. The lower-left
    block of H is -G and the upper-right block is G^dag, so n = m = 2 with
    G = [[g, gamma], [-gamma, g]] gives the four-mode matrix.
    """
    a_slopes = np.asarray(a_slopes, dtype=float).ravel()
    b_slopes = np.asarray(b_slopes, dtype=float).ravel()
    a_offsets = np.asarray(a_offsets, dtype=float).ravel()
    b_offsets = np.asarray(b_offsets, dtype=float).ravel()
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    n, m = a_slopes.size, b_slopes.size
    if n < 1 or m < 1:
        raise ModelError("need at least one mode in each block")
    if a_offsets.size != n or b_offsets.size != m:
        raise ModelError(f"offset lengths ({a_offsets.size}, {b_offsets.size}) do not match slopes ({n}, {m})")
    if G.shape != (m, n):
        raise ModelError(f"G must have shape (m, n) = ({m}, {n}), got {G.shape}")
    for k, s in enumerate(np.concatenate([a_slopes, b_slopes])):
        _check_slope(s, f"slope[{k}]")
    N = n + m
    couplings = np.zeros((N, N), dtype=complex)
    couplings[n:, :n] = -G
    couplings[:n, n:] = G.conj().T
    labels = tuple(ModeLabel("A", str(i + 1)) for i in range(n)) + tuple(ModeLabel("B", str(j + 1)) for j in range(m))
    return TimeDependentMatrix(
        slopes=np.concatenate([a_slopes, b_slopes]),
        offsets=np.concatenate([a_offsets, b_offsets]),
        couplings=couplings,
        n_a=n,
        labels=labels,
        spec=ModelSpec(
            "general",
            {
                "slopes_a": a_slopes.tolist(),
                "slopes_b": b_slopes.tolist(),
                "offsets_a": a_offsets.tolist(),
                "offsets_b": b_offsets.tolist(),
                "G": G.tolist(),
            },
        ),
    )


@dataclass(frozen=True)
class Spectrum:
    times: np.ndarray
    eigenvalues: np.ndarray  # (len(times), N) complex, continuity-tracked

    @property
    def real(self) -> np.ndarray:
        return self.eigenvalues.real

    @property
    def imag(self) -> np.ndarray:
        return self.eigenvalues.imag


def instantaneous_spectrum(model: TimeDependentMatrix, times: Sequence[float]) -> Spectrum:
    """Eigenvalues of H(t) at each time, ordered so that curves are continuous.

    Consecutive samples are matched by a minimum total-distance assignment in
    the complex plane. The first sample is sorted by real part, then imaginary.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ModelError("times must be a nonempty 1-D sequence")
    if np.any(np.diff(times) < 0):
        raise ModelError("times must be sorted")
    out = np.empty((times.size, model.dimension), dtype=complex)
    prev = None
    for k, t in enumerate(times):
        try:
            w = np.linalg.eigvals(model.evaluate(t))
        except np.linalg.LinAlgError as exc:
            raise ModelError(f"eigenvalue solver failed at t={t}: {exc}") from exc
        if prev is None:
            w = w[np.lexsort((w.imag, w.real))]
        else:
            _, cols = linear_sum_assignment(np.abs(prev[:, None] - w[None, :]))
            w = w[cols]
        out[k] = w
        prev = w
    return Spectrum(times, out)


def coupling_phases(model: TimeDependentMatrix) -> tuple[float, float]:
    """(phi, chi): phases of g and gamma of a four-mode model."""
    if model.spec.kind != "four_mode":
        raise ModelError("coupling phases are defined for the four-mode model only")
    return cmath.phase(model.spec.params["g"]), cmath.phase(model.spec.params["gamma"])


def gauge_transform(model: TimeDependentMatrix) -> tuple[TimeDependentMatrix, float]:
    """Remove the phase of g by rescaling the B block with exp(-i phi).

    Returns the transformed model, whose couplings are |g| and
    |gamma| exp(i theta), and the phase phi that was removed. Transfer
    matrices are related by M_new = D M D^-1, D = diag(1, 1, e^{-i phi}, e^{-i phi}).
    """
    phi, chi = coupling_phases(model)
    p = model.spec.params
    new = build_four_mode(
        p["b1"], p["b2"], p["E1"], p["E2"], abs(p["g"]), abs(p["gamma"]) * cmath.exp(1j * (chi - phi))
    )
    return new, phi


# -- config files ---------------------------------------------------------------

_KIND_ALIASES = {
    "twomode": "two_mode",
    "two_mode": "two_mode",
    "fourmode": "four_mode",
    "four_mode": "four_mode",
    "general": "general",
    "waveguide": "four_mode",  # array configs carry the four-mode parameters plus z_scale
}


def _polar(value: Any, key: str) -> complex:
    if isinstance(value, Mapping):
        try:
            return cmath.rect(float(value["abs"]), float(value.get("phase", 0.0)))
        except KeyError as exc:
            raise ModelError(f"{key} needs an 'abs' entry") from exc
    if isinstance(value, (int, float)):
        return complex(value)
    raise ModelError(f"{key} must be a number or {{abs, phase}}, got {value!r}")


def _pair(value: Any, key: str) -> complex:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, (int, float)):
        return complex(value)
    raise ModelError(f"{key} entries must be [re, im] pairs, got {value!r}")


def model_from_config(cfg: Mapping[str, Any]) -> TimeDependentMatrix:
    """Build a model from a parsed JSON config."""
    try:
        kind = _KIND_ALIASES[str(cfg["kind"]).lower().replace("-", "_")]
    except KeyError as exc:
        raise ModelError(f"unknown or missing model kind: {cfg.get('kind')!r}") from exc
    try:
        if kind == "two_mode":
            return build_two_mode(float(cfg["beta"]), _polar(cfg["g"], "g"))
        if kind == "four_mode":
            return build_four_mode(
                float(cfg["b1"]),
                float(cfg["b2"]),
                float(cfg.get("E1", 0.0)),
                float(cfg.get("E2", 0.0)),
                _polar(cfg["g"], "g"),
                _polar(cfg["gamma"], "gamma"),
            )
        G = [[_pair(v, "G") for v in row] for row in cfg["G"]]
        return build_general(cfg["slopes_a"], cfg["slopes_b"], cfg["offsets_a"], cfg["offsets_b"], G)
    except KeyError as exc:
        raise ModelError(f"missing config key {exc.args[0]!r} for kind {kind}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"bad config value: {exc}") from exc


def load_model_config(path: str | Path) -> tuple[TimeDependentMatrix, dict]:
    """Read a JSON config file; returns the model and the raw dict."""
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ModelError("config root must be a JSON object")
    return model_from_config(cfg), cfg


def model_to_config(model: TimeDependentMatrix) -> dict:
    """Inverse of model_from_config."""
    p = model.spec.params
    if model.spec.kind == "two_mode":
        return {"kind": "two_mode", "beta": p["beta"], "g": {"abs": abs(p["g"]), "phase": cmath.phase(p["g"])}}
    if model.spec.kind == "four_mode":
        return {
            "kind": "four_mode",
            "b1": p["b1"],
            "b2": p["b2"],
            "E1": p["E1"],
            "E2": p["E2"],
            "g": {"abs": abs(p["g"]), "phase": cmath.phase(p["g"])},
            "gamma": {"abs": abs(p["gamma"]), "phase": cmath.phase(p["gamma"])},
        }
    return {
        "kind": "general",
        "slopes_a": p["slopes_a"],
        "slopes_b": p["slopes_b"],
        "offsets_a": p["offsets_a"],
        "offsets_b": p["offsets_b"],
        "G": [[[v.real, v.imag] for v in row] for row in p["G"]],
    }
