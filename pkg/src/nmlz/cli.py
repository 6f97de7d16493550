"""Command-line entry point: ``nmlz <subcommand> [--config cfg.json] [flags]``.

Exit codes: 0 success, 2 usage, 3 bad config, 4 integration failure,
5 closed form requested outside the solvable class, 6 verification failed,
7 output not writable.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import analytic, observables, symmetry, waveguide
from .model import (
    ModelError,
    ModeLabel,
    TimeDependentMatrix,
    instantaneous_spectrum,
    load_model_config,
    model_from_config,
    model_to_config,
)
from .propagator import (
    IntegrationConfig,
    IntegrationError,
    fmt,
    propagate,
    propagate_between,
)

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_INTEGRATION = 4
EXIT_SOLVABILITY = 5
EXIT_VERIFY = 6
EXIT_OUTPUT = 7

# four-mode reference model: opposite-sign slopes, offsets separating the crossings
DEFAULT_CONFIG = {
    "kind": "four_mode",
    "b1": -1.0,
    "b2": 0.5,
    "E1": 5.0,
    "E2": 1.0,
    "g": {"abs": 0.5, "phase": 0.0},
    "gamma": {"abs": 1.0, "phase": 0.0},
}

SWEEP_PARAMETERS = ("gamma_abs", "g_abs", "theta", "slope_b1", "slope_b2", "z_scale")
SWEEP_OUTPUTS = ("populations", "spontaneous", "squeezing", "cpt", "windows", "spectrum")


class UsageError(Exception):
    pass


# -- helpers ----------------------------------------------------------------------


def _integration_config(args, cfg: dict) -> IntegrationConfig:
    base = dict(cfg.get("integration", {}))
    for key in ("T", "rtol", "atol", "picture"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    try:
        return IntegrationConfig(**base)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"bad integration settings: {exc}") from exc


def _load(args) -> tuple[TimeDependentMatrix, dict, str]:
    if args.config:
        model, cfg = load_model_config(args.config)
        tag = args.tag or Path(args.config).stem
    else:
        cfg = copy.deepcopy(DEFAULT_CONFIG)
        model = model_from_config(cfg)
        tag = args.tag or "default"
    return model, cfg, tag


def _out_path(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else fmt(x) for x in row])
    return path


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not serializable: {type(x)}")


def _labels(model: TimeDependentMatrix) -> list[str]:
    return [str(lab) for lab in model.labels]


def _seed_index(model: TimeDependentMatrix, seed: str | None) -> int:
    labels = _labels(model)
    if seed is None:
        return 0
    if seed in labels:
        return labels.index(seed)
    try:
        return labels.index(str(ModeLabel.parse(seed)))
    except ModelError:
        pass
    raise UsageError(f"unknown seed mode {seed!r}; choose from {labels}")


def _analytic_table(model: TimeDependentMatrix):
    """Closed-form populations when the model has one, else None."""
    p = model.spec.params
    if model.spec.kind == "two_mode":
        a_sq, b_sq = analytic.nlz_populations(p["g"], p["beta"])
        stim = np.array([[a_sq, b_sq], [b_sq, a_sq]])
        return observables.PopulationTable(stim, np.array([b_sq, b_sq]), 1, tuple(_labels(model)))
    if model.spec.kind == "four_mode":
        try:
            return analytic.population_matrix(p["g"], p["gamma"], p["b1"], p["b2"])
        except analytic.SolvabilityError:
            return None
    return None


def _complex_pair_list(M: np.ndarray):
    return [[[z.real, z.imag] for z in row] for row in M]


# -- subcommands ------------------------------------------------------------------


def cmd_spectrum(args) -> int:
    model, _, tag = _load(args)
    scan = symmetry.default_scan(model)
    t_min = scan[0] if args.t_min is None else args.t_min
    t_max = scan[-1] if args.t_max is None else args.t_max
    times = np.linspace(t_min, t_max, args.samples)
    spectrum = instantaneous_spectrum(model, times)
    windows = symmetry.pt_broken_windows(model, times)
    N = model.dimension
    if args.format == "json":
        _write_json(
            _out_path(args, f"spectrum_{tag}.json"),
            {
                "times": times,
                "real": spectrum.real,
                "imag": spectrum.imag,
                "windows": [asdict(w) for w in windows],
            },
        )
    else:
        header = ["t"] + [f"lambda_{k + 1}_{part}" for k in range(N) for part in ("re", "im")]
        rows = ([t] + [x for lam in row for x in (lam.real, lam.imag)] for t, row in zip(times, spectrum.eigenvalues))
        _write_csv(_out_path(args, f"spectrum_{tag}.csv"), header, rows)
        symmetry.write_windows_csv(windows, _out_path(args, f"spectrum_{tag}_windows.csv"))
    return EXIT_OK


def cmd_smatrix(args) -> int:
    model, cfg, tag = _load(args)
    result = propagate(model, _integration_config(args, cfg))
    if args.format == "json":
        _write_json(
            _out_path(args, f"smatrix_{tag}.json"),
            {
                "labels": _labels(model),
                "M": _complex_pair_list(result.M),
                "raw": _complex_pair_list(result.raw),
                "T": result.config.T,
                "pseudo_unitarity": result.pseudo_unitarity,
                "warnings": list(result.warnings),
            },
        )
    else:
        N = model.dimension
        rows = (
            [str(i + 1), str(j + 1), result.M[i, j].real, result.M[i, j].imag, abs(result.M[i, j]) ** 2]
            for i in range(N)
            for j in range(N)
        )
        _write_csv(_out_path(args, f"smatrix_{tag}.csv"), ["i", "j", "re", "im", "abs2"], rows)
    return EXIT_OK


def cmd_populations(args) -> int:
    model, cfg, tag = _load(args)
    exact = _analytic_table(model)
    if args.analytic_only and exact is None:
        raise analytic.SolvabilityError("no closed form for this model; drop --analytic-only")
    result = propagate(model, _integration_config(args, cfg))
    table = observables.population_table(result, n0=args.n0)
    seeds = None if args.seed_mode is None else [_seed_index(model, args.seed_mode)]
    if exact is not None and args.n0 != 1:
        exact = replace(exact, stimulated=exact.stimulated * args.n0, seed_scale=args.n0)
    if args.format == "json":
        data = {"labels": _labels(model), "stimulated": table.stimulated, "spontaneous": table.spontaneous}
        if exact is not None:
            data.update(analytic_stimulated=exact.stimulated, analytic_spontaneous=exact.spontaneous)
        _write_json(_out_path(args, f"populations_{tag}.json"), data)
    else:
        observables.write_populations_csv(table, _out_path(args, f"populations_{tag}.csv"), seeds, exact)
    return EXIT_OK


def _pairs(model: TimeDependentMatrix) -> list[tuple[int, int]]:
    N = model.dimension
    return [(i, j) for i in range(N) for j in range(i + 1, N)]


def cmd_squeeze(args) -> int:
    model, cfg, tag = _load(args)
    result = propagate(model, _integration_config(args, cfg))
    pairs = _pairs(model)
    reports = [observables.quadrature_extrema(result, pr) for pr in pairs]
    observables.write_quadrature_json(reports, _out_path(args, f"squeeze_{tag}.json"))
    phis = np.linspace(0.0, math.pi, args.samples)
    curves = [observables.quadrature_variance(result, pr, phis) for pr in pairs]
    labels = _labels(model)
    header = ["phi"] + [f"var_{labels[i]}__{labels[j]}" for i, j in pairs]
    _write_csv(_out_path(args, f"squeeze_{tag}_curves.csv"), header, ([p] + [c[k] for c in curves] for k, p in enumerate(phis)))
    return EXIT_OK


def cmd_waveguide(args) -> int:
    model, cfg, tag = _load(args)
    z_scale = args.z_scale if args.z_scale is not None else float(cfg.get("z_scale", 1.0))
    array = waveguide.map_to_waveguide(model, z_scale, cfg.get("z_span"))
    res = waveguide.simulate_waveguide(array, args.input_port, _integration_config(args, cfg), samples=args.samples)
    _write_csv(
        _out_path(args, f"waveguide_{tag}.csv"),
        ["port", "intensity"],
        ([str(k + 1), x] for k, x in enumerate(res.intensities)),
    )
    waveguide.write_profile_csv(res, _out_path(args, f"waveguide_{tag}_profile.csv"))
    _write_json(_out_path(args, f"waveguide_{tag}_array.json"), array.to_config())
    return EXIT_OK


# -- sweeps -----------------------------------------------------------------------


def _sweep_values(args) -> list[float]:
    if args.values:
        vals = [float(v) for v in args.values.split(",") if v.strip()]
    elif args.range:
        start, stop, count = args.range
        vals = list(np.linspace(float(start), float(stop), int(count)))
    else:
        raise UsageError("sweep needs --values or --range")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise UsageError("sweep values must be a nonempty list of finite numbers")
    return vals


def _apply(cfg: dict, parameter: str, value: float) -> dict:
    cfg = copy.deepcopy(cfg)
    kind = cfg["kind"]
    if parameter == "z_scale":
        cfg["z_scale"] = value
    elif kind == "two_mode":
        if parameter == "g_abs":
            cfg["g"]["abs"] = value
        elif parameter == "slope_b1":
            cfg["beta"] = value
        else:
            raise UsageError(f"parameter {parameter} does not apply to the two-mode model")
    elif kind == "four_mode":
        if parameter == "gamma_abs":
            cfg["gamma"]["abs"] = value
        elif parameter == "g_abs":
            cfg["g"]["abs"] = value
        elif parameter == "theta":
            cfg["gamma"]["phase"] = cfg["g"]["phase"] + value
        elif parameter == "slope_b1":
            cfg["b1"] = value
        elif parameter == "slope_b2":
            cfg["b2"] = value
    else:
        raise UsageError("sweeps support two-mode and four-mode models")
    return cfg


def sweep_point(cfg: dict, parameter: str, value: float, icfg: IntegrationConfig, outputs: tuple, seed: int) -> dict:
    """One sweep row; pure so it can run in a worker process."""
    point = _apply(cfg, parameter, value)
    model = model_from_config(point)
    labels = _labels(model)
    row = {parameter: value % (2 * math.pi) if parameter == "theta" else value}
    if parameter == "z_scale":
        array = waveguide.map_to_waveguide(model, value)
        res = waveguide.simulate_waveguide(array, seed + 1, icfg)
        row.update({f"I{k + 1}": x for k, x in enumerate(res.intensities)})
        return row
    needs_matrix = {"populations", "spontaneous", "squeezing", "cpt"} & set(outputs)
    result = propagate(model, icfg) if needs_matrix else None
    exact = _analytic_table(model)
    nan = float("nan")
    if "populations" in outputs:
        n = result.populations[:, seed]
        for k, lab in enumerate(labels):
            row[f"n_{lab}"] = n[k]
        for k, lab in enumerate(labels):
            row[f"analytic_n_{lab}"] = exact.stimulated[k, seed] if exact is not None else nan
    if "spontaneous" in outputs:
        sp = observables.spontaneous_populations(result)
        for k, lab in enumerate(labels):
            row[f"sp_{lab}"] = sp[k]
        row["analytic_sp"] = exact.spontaneous[0] if exact is not None else nan
    if "squeezing" in outputs:
        rep = observables.quadrature_extrema(result, (0, model.n_a))
        row.update(x_plus_sq=rep.x_plus_sq, x_minus_sq=rep.x_minus_sq, shift=rep.shift)
        if model.spec.kind == "four_mode" and exact is not None:
            p = model.spec.params
            xp, xm, sh = analytic.squeezing_extrema("same_spin_AB", p["g"], p["gamma"], p["b1"], p["b2"])
        elif model.spec.kind == "two_mode":
            a_sq, b_sq = analytic.nlz_populations(model.spec.params["g"], model.spec.params["beta"])
            xp = 0.5 * (math.sqrt(a_sq) + math.sqrt(b_sq)) ** 2
            xm = 0.5 * (math.sqrt(a_sq) - math.sqrt(b_sq)) ** 2
            sh = 0.0
        else:
            xp = xm = sh = nan
        row.update(analytic_x_plus_sq=xp, analytic_x_minus_sq=xm, analytic_shift=sh)
    if "cpt" in outputs:
        if model.spec.kind == "four_mode":
            phi = math.atan2(model.spec.params["g"].imag, model.spec.params["g"].real)
            rep = symmetry.cpt_report(result, model.spec.theta, phi)
            row.update(cpt_relative_residual=rep.relative_residual, cpt_zero_entries_rel=rep.zero_entries_max / rep.largest_entry)
        else:
            row.update(cpt_relative_residual=nan, cpt_zero_entries_rel=nan)
    if "windows" in outputs or "spectrum" in outputs:
        windows = symmetry.pt_broken_windows(model)
        if "windows" in outputs:
            row["n_windows"] = float(len(windows))
        if "spectrum" in outputs:
            row["max_imag"] = max((w.max_imag for w in windows), default=0.0)
    return row


def cmd_sweep(args) -> int:
    model, raw_cfg, tag = _load(args)
    icfg = _integration_config(args, raw_cfg)
    cfg = dict(model_to_config(model), **{k: v for k, v in raw_cfg.items() if k in ("z_scale", "z_span")})
    values = _sweep_values(args)
    outputs = tuple(o.strip() for o in args.outputs.split(",") if o.strip())
    bad = set(outputs) - set(SWEEP_OUTPUTS)
    if bad:
        raise UsageError(f"unknown sweep outputs {sorted(bad)}")
    seed = _seed_index(model, args.seed_mode)
    jobs = max(1, args.jobs)
    tasks = [(cfg, args.parameter, v, icfg, outputs, seed) for v in values]
    if jobs == 1:
        rows = [sweep_point(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(sweep_point, *zip(*tasks)))  # map keeps parameter order
    header = list(rows[0].keys())
    if args.format == "json":
        _write_json(_out_path(args, f"sweep_{tag}.json"), rows)
    else:
        _write_csv(_out_path(args, f"sweep_{tag}.csv"), header, ([r[h] for h in header] for r in rows))
    return EXIT_OK


# -- verify -----------------------------------------------------------------------


def _check(checks: list, name: str, value: float, tolerance: float, passed: bool | None = None) -> None:
    ok = bool(value < tolerance) if passed is None else bool(passed)
    checks.append({"name": name, "value": float(value), "tolerance": float(tolerance), "pass": ok})


def run_checks(model: TimeDependentMatrix, icfg: IntegrationConfig) -> list[dict]:
    """The invariant suite behind ``verify``; each check records value and tolerance."""
    checks: list[dict] = []
    _check(
        checks,
        "pseudo_hermiticity",
        max(model.pseudo_hermiticity_residual(t) for t in (-7.0, 0.0, 7.0)),
        1e-12,
    )
    result = propagate(model, icfg)
    M = result.M
    scale = float(np.max(np.abs(M)) ** 2)
    _check(checks, "pseudo_unitarity", result.pseudo_unitarity, 1e-8)
    cons = observables.conservation_residuals(result)
    _check(checks, "column_conservation_signed", float(cons.signed_column_residuals.max()), 1e-6)

    T = result.config.T
    composed = propagate_between(model, 0.0, T, result.config) @ propagate_between(model, -T, 0.0, result.config)
    _check(checks, "composition_relative", float(np.linalg.norm(composed - result.raw) / np.linalg.norm(result.raw)), 1e-6)

    other = "direct" if result.config.picture == "interaction" else "interaction"
    alt = propagate(model, replace(result.config, picture=other))
    _check(checks, "picture_covariance_relative", float(np.max(np.abs(alt.populations - result.populations)) / scale), 1e-6)

    doubled = propagate(model, replace(result.config, T=2 * T, picture="interaction"))
    n1, n2 = result.populations, doubled.populations
    resolvable = n2 > 1e-6 * scale
    _check(checks, "window_convergence", float(np.max(np.abs(n1 - n2)[resolvable] / n2[resolvable])), 1e-3)

    scan_times = symmetry.default_scan(model, 401)
    worst_pairing = 0.0
    for t in scan_times:
        w = np.linalg.eigvals(model.evaluate(t))
        # every eigenvalue must have its conjugate in the spectrum
        worst_pairing = max(worst_pairing, float(np.max(np.min(np.abs(w[:, None] - w.conj()[None, :]), axis=1))))
    _check(checks, "spectrum_conjugate_pairs", worst_pairing, 1e-8)

    windows = symmetry.pt_broken_windows(model)
    _check(checks, "pt_window_count", abs(len(windows) - len(model.crossings())), 0.5)

    exact = _analytic_table(model)
    if exact is not None:
        big = exact.stimulated >= 1
        err = np.max(np.abs(result.populations[big] - exact.stimulated[big]) / exact.stimulated[big])
        _check(checks, "analytic_populations_relative", float(err), 1e-2)

    if model.spec.kind == "four_mode":
        p = model.spec.params
        phi = math.atan2(p["g"].imag, p["g"].real)
        rep = symmetry.cpt_report(result, model.spec.theta, phi)
        if analytic.is_solvable(p["g"], p["gamma"]):
            _check(checks, "cpt_relative_residual", rep.relative_residual, 1e-6)
            _check(checks, "cpt_zero_entries_relative", rep.zero_entries_max / rep.largest_entry, 1e-3)
            aa = observables.quadrature_extrema(result, (0, 1))
            _check(checks, "aa_quadrature_phase_independent", aa.oscillation_amplitude, 1e-6)
            same = [observables.quadrature_extrema(result, pr) for pr in ((0, 2), (1, 3))]
            _check(checks, "same_spin_reports_equal", abs(same[0].x_plus_sq - same[1].x_plus_sq) / same[0].x_plus_sq, 1e-6)
            array = waveguide.map_to_waveguide(model)
            res = waveguide.simulate_waveguide(array, 1, result.config)
            col = result.populations[:, 0]
            _check(checks, "waveguide_round_trip_relative", float(np.max(np.abs(res.intensities - col)) / col.max()), 1e-6)
    return checks


def cmd_verify(args) -> int:
    model, cfg, tag = _load(args)
    checks = run_checks(model, _integration_config(args, cfg))
    ok = all(c["pass"] for c in checks)
    _write_json(_out_path(args, "verify_report.json"), {"config": tag, "pass": ok, "checks": checks})
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']:<36} {c['value']:.3e}  (< {c['tolerance']:.1e})")
    return EXIT_OK if ok else EXIT_VERIFY


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="model JSON config (default: built-in four-mode example)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--tag", help="output file tag (default: config file stem)")
    common.add_argument("--T", type=float, help="half-window of the sweep")
    common.add_argument("--rtol", type=float)
    common.add_argument("--atol", type=float)
    common.add_argument("--picture", choices=("direct", "interaction"))
    common.add_argument("--seed-mode", help="seed mode label such as A_up")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="nmlz", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="instantaneous eigenvalue curves and PT windows")
    p.add_argument("--t-min", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--samples", type=int, default=2001)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("smatrix", parents=[common], help="transfer matrix dump")
    p.set_defaults(func=cmd_smatrix)

    p = sub.add_parser("populations", parents=[common], help="stimulated and spontaneous populations")
    p.add_argument("--n0", type=int, default=1, help="seed atom number")
    p.add_argument("--analytic-only", action="store_true", help="fail unless a closed form exists")
    p.set_defaults(func=cmd_populations)

    p = sub.add_parser("squeeze", parents=[common], help="pair quadrature reports and variance curves")
    p.add_argument("--samples", type=int, default=361)
    p.set_defaults(func=cmd_squeeze)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweep")
    p.add_argument("--parameter", choices=SWEEP_PARAMETERS, required=True)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--range", nargs=3, metavar=("START", "STOP", "COUNT"))
    p.add_argument("--outputs", default="populations,spontaneous", help=",".join(SWEEP_OUTPUTS))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("waveguide", parents=[common], help="port intensities of the mapped waveguide array")
    p.add_argument("--input-port", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--z-scale", type=float)
    p.add_argument("--samples", type=int, default=0, help="profile samples along z")
    p.set_defaults(func=cmd_waveguide)

    p = sub.add_parser("verify", parents=[common], help="invariant suite with a JSON report")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except analytic.SolvabilityError as exc:
        print(f"solvability error: {exc}", file=sys.stderr)
        return EXIT_SOLVABILITY
    except ModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
