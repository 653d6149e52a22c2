"""
``srlwctl``: run named experiments from a JSON config and write a report.

    srlwctl <experiment> --config <file> [--out <dir>] [--param key=value ...]

The config is a JSON object, either flat or with a nested ``"parameters"``
object; ``--param`` values override it. Every run writes ``report.json`` and
CSV series into the output directory. Exit codes: 0 success, 2 invalid
configuration, 3 numerical failure, 4 other model errors (for example
incompatible data).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, SRLWError

__all__ = ["ExperimentConfig", "ExperimentReport", "EXPERIMENTS", "load_config", "run",
           "emit_plot_data", "write_report", "main"]

REQUIRED = object()

# name -> {parameter: (type, default)}
EXPERIMENTS = {
    "simulate": {"N": (int, REQUIRED), "T": (float, REQUIRED), "p": (int, 0), "seed": (int, 0),
                 "amplitude": (float, 1e-3), "decay": (float, 2.0), "s": (float, 1.0),
                 "samples": (int, 33), "tol": (float, 1e-12), "max_iter": (int, 50)},
    "moving-control": {"N": (int, REQUIRED), "c": (float, REQUIRED), "T": (float, REQUIRED),
                       "s": (float, 1.0), "seed": (int, 0), "random_targets": (int, 20),
                       "quadrature_nodes": (int, 16)},
    "point-control": {"N": (int, REQUIRED), "c": (float, REQUIRED), "T": (float, REQUIRED),
                      "quadrature_nodes": (int, 16), "samples": (int, 257)},
    "nonlinear-control": {"N": (int, REQUIRED), "c": (float, REQUIRED), "T": (float, REQUIRED),
                          "p": (int, 1), "data_norm": (float, 1e-3), "seed": (int, 0),
                          "s": (float, 1.0), "tol": (float, 1e-12), "max_iter": (int, 30)},
    "bounded-spectrum": {"M": (int, REQUIRED), "t": (float, 10.0), "seed": (int, 0)},
    "spectral-probe": {"M": (int, REQUIRED), "T": (float, 10.0), "m": (int, 1),
                       "cond_limit": (float, 1e12)},
    "approx-control": {"T": (float, 10.0), "control_dim": (int, 40), "modes": (int, 4),
                       "M": (int, 64), "penalties": (list, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])},
    "gap-report": {"c": (float, REQUIRED), "N": (int, REQUIRED), "T": (float, REQUIRED),
                   "tail_from": (int, 1)},
}


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict
    output_dir: str = "."

    @classmethod
    def from_dict(cls, data, experiment=None, overrides=None, output_dir=None):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        name = data.pop("experiment", None)
        if experiment is not None and name is not None and name != experiment:
            raise ConfigError(f"config is for {name!r} but {experiment!r} was requested")
        name = experiment or name
        if name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
        out = output_dir or data.pop("output_dir", None) or "."
        data.pop("output_dir", None)
        params = dict(data.pop("parameters", {}) or {})
        params.update(data)
        params.update(overrides or {})
        return cls(name, validate(name, params), out)


def validate(name, params):
    schema = EXPERIMENTS[name]
    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {name}: {unknown}")
    out = {}
    for key, (typ, default) in schema.items():
        if key not in params:
            if default is REQUIRED:
                raise ConfigError(f"missing required parameter {key!r} for {name}")
            out[key] = default
            continue
        val = params[key]
        try:
            if typ is int:
                if isinstance(val, bool) or float(val) != int(float(val)):
                    raise ValueError
                val = int(float(val))
            elif typ is float:
                if isinstance(val, bool):
                    raise ValueError
                val = float(val)
                if not np.isfinite(val):
                    raise ValueError
            elif typ is list:
                val = [float(v) for v in val]
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {key!r} must be {typ.__name__}, got {params[key]!r}")
        out[key] = val
    for key in ("N", "M", "T", "control_dim", "samples", "max_iter", "m", "modes"):
        if key in out and out[key] <= 0:
            raise ConfigError(f"parameter {key!r} must be positive")
    return out


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    metrics: dict
    artifacts: list = field(default_factory=list)
    wall_time: float = 0.0
    series: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {"experiment": self.config.experiment, "parameters": self.config.parameters,
                "metrics": self.metrics, "artifacts": self.artifacts, "wall_time": self.wall_time}


def _f(x):
    return float(np.real(x))


def _run_simulate(P):
    from .ivp_solver import CollocationGrid, ForcingSignal, picard_solve, solve_linear_forced
    from .spectral_core import TorusState, xs_norm

    rng = np.random.default_rng(P["seed"])
    U0 = TorusState.random(P["N"], rng, P["decay"])
    U0 = U0 * (P["amplitude"] / xs_norm(U0, P["s"]))
    f = ForcingSignal.zero(P["N"])
    metrics = {"initial_norm": xs_norm(U0, P["s"])}
    if P["p"] == 0:
        traj = solve_linear_forced(U0, f, P["T"], times=np.linspace(0, P["T"], P["samples"]))
    else:
        res = picard_solve(U0, f, P["p"], P["T"], P["tol"], P["max_iter"], P["s"],
                           grid=CollocationGrid(P["T"], panels=P["samples"] - 1, nodes=8))
        traj = res.trajectory
        metrics.update(iterations=res.iterations, contraction_ratio=res.contraction_ratio)
    N = P["N"]
    conserved = (1 + traj_k(N) ** 2) * np.abs(traj.u) ** 2 + np.abs(traj.v) ** 2
    metrics.update(final_norm=xs_norm(traj.final(), P["s"]),
                   v_mean_drift=float(np.max(np.abs(traj.v[:, N] - traj.v[0, N]))),
                   mode_energy_drift=float(np.max(np.abs(conserved - conserved[0]))),
                   samples=len(traj))
    return metrics, {"trajectory": traj}


def traj_k(N):
    return np.arange(-N, N + 1)


def _smooth_target(N):
    from .spectral_core import TorusState
    k = traj_k(N)
    return TorusState(N, (1.0 + k**2) ** -2.0, np.zeros(2 * N + 1))


def _run_moving(P):
    from .moment_toolkit import gap, moving_frequencies
    from .moving_control import BumpProfile, synthesize_moving, verify_terminal
    from .spectral_core import TorusState, xs_norm

    N, c, T, s = P["N"], P["c"], P["T"], P["s"]
    b = BumpProfile.one_plus_cos()
    U0, UT = TorusState.zeros(N), _smooth_target(N)
    h = synthesize_moving(U0, UT, b, c, T, s)
    err = verify_terminal(U0, UT, h, b, c, T, P["quadrature_nodes"], s)
    rng = np.random.default_rng(P["seed"])
    ratios = []
    for _ in range(P["random_targets"]):
        Y = TorusState.random(N, rng, 2.0)
        Y.v[N] = 0.0
        ratios.append(synthesize_moving(U0, Y, b, c, T, s).control_norm / xs_norm(Y, s))
    rep = gap(moving_frequencies(c, N, T))
    metrics = {"terminal_error": err, "control_norm": h.control_norm,
               "dual_residual": h.dual_residual, "gram_cond": h.duals.duals.cond,
               "delta_combined": rep.delta_combined, "norm_ratio_min": min(ratios, default=np.nan),
               "norm_ratio_max": max(ratios, default=np.nan)}
    metrics["norm_ratio_spread"] = metrics["norm_ratio_max"] / metrics["norm_ratio_min"]
    return metrics, {"control": h}


def _run_point(P):
    from .point_control import synthesize_point, verify_terminal_point
    from .spectral_core import TorusState

    N, c, T = P["N"], P["c"], P["T"]
    U0, UT = TorusState.zeros(N), _smooth_target(N)
    g = synthesize_point(U0, UT, c, T, N)
    err = verify_terminal_point(U0, UT, g, c, T, P["quadrature_nodes"])
    return ({"terminal_error": err, "control_norm": g.control_norm,
             "dual_residual": g.dual_residual}, {"point_control": (g, P["samples"])})


def _run_nonlinear(P):
    from .moving_control import BumpProfile
    from .nonlinear_control import nonlinear_exact_control
    from .spectral_core import TorusState, xs_norm

    N, s = P["N"], P["s"]
    rng = np.random.default_rng(P["seed"])
    U0 = TorusState.random(N, rng, 2.0)
    UT = TorusState.random(N, rng, 2.0)
    U0.v[N] = UT.v[N] = 0.0
    scale = P["data_norm"] / (xs_norm(U0, s) + xs_norm(UT, s))
    U0, UT = U0 * scale, UT * scale
    h, rep = nonlinear_exact_control(U0, UT, BumpProfile.one_plus_cos(), P["c"], P["T"], P["p"],
                                     P["tol"], P["max_iter"], s)
    metrics = {"iterations": rep.iterations, "terminal_error": rep.terminal_error,
               "relative_error": rep.relative_error, "control_norm": rep.control_norm,
               "max_ratio_from_2": max(rep.contraction_ratios, default=0.0),
               "data_norm": xs_norm(U0, s) + xs_norm(UT, s)}
    return metrics, {"fixed_point": rep}


def _run_bounded_spectrum(P):
    from .bounded_domain import (BoundedState, eigenpairs, energy, energy_quadrature,
                                 evolve_homogeneous, inner_product_quadrature)

    M = P["M"]
    pairs = eigenpairs(M)
    nodes = 4 * (M + 1)
    gram = np.array([[inner_product_quadrature(a.u, a.du, a.v, b.u, b.du, b.v, nodes)
                      for b in pairs] for a in pairs])
    defect = float(np.max(np.abs(gram - np.eye(len(pairs)))))
    a = BoundedState.random(M, np.random.default_rng(P["seed"]))
    drift = max(abs(energy(evolve_homogeneous(a, t)) - energy(a))
                for t in np.linspace(0, P["t"], 11))
    rows = [[p.n, repr(p.lam), repr(p.u_amp.imag), repr(p.v_amp.real), repr(gram[i, i].real)]
            for i, p in enumerate(pairs)]
    metrics = {"lambda_1": pairs[M].lam, "orthonormality_defect": defect,
               "energy_drift": float(drift),
               "energy_quadrature_gap": abs(energy_quadrature(a) - energy(a))}
    return metrics, {"eigen_table": (["n", "lambda", "u_amp_imag", "v_amp", "norm_sq"], rows)}


def _run_probe(P):
    from .bounded_domain import spectral_controllability_probe

    r = spectral_controllability_probe(P["m"], P["M"], P["T"], cond_limit=P["cond_limit"])
    costs = r.cost.tolist()
    metrics = {"costs": costs, "conds": r.cond.tolist(),
               "monotone_cost": bool(np.all(np.diff(r.cost) > 0)),
               "first_ill_conditioned_M": int(r.M_constraints[r.ill_conditioned][0])
               if r.ill_conditioned.any() else None}
    return metrics, {"cost_curve": r}


def _approx_target(modes):
    from .bounded_domain import BoundedState
    vals = {}
    for n in range(1, modes + 1):
        vals[n] = vals[-n] = 1.0 / n**2
    a = BoundedState.from_modes(modes, vals)
    return a * (1.0 / a.norm())


def _run_approx(P):
    from .bounded_domain import BoundedState, penalty_sweep

    aT = _approx_target(P["modes"])
    sweep = penalty_sweep(BoundedState.zeros(P["modes"]), aT, P["T"], P["control_dim"],
                          P["penalties"], P["M"])
    res = [r.residual for r in sweep]
    rows = [[repr(p), repr(r.residual), repr(r.residual_l2), repr(r.control_norm)]
            for p, r in zip(P["penalties"], sweep)]
    best = int(np.argmin(res))
    metrics = {"residuals": res, "residuals_l2": [r.residual_l2 for r in sweep],
               "control_norms": [r.control_norm for r in sweep],
               "best_residual": res[best], "best_control_norm": sweep[best].control_norm,
               "monotone_in_penalty": bool(np.all(np.diff(res) <= 0) if
                                           np.all(np.diff(P["penalties"]) < 0) else
                                           np.all(np.diff(res) >= 0))}
    return metrics, {"penalty_sweep": (["penalty", "residual", "residual_l2", "control_norm"], rows)}


def _run_gap(P):
    from .moment_toolkit import conditioning_record, gap, moving_frequencies

    fam = moving_frequencies(P["c"], P["N"], P["T"])
    rep = gap(fam, P["tail_from"])
    rec = conditioning_record(P["c"], P["T"], P["N"], P["tail_from"])
    metrics = dict(rep.to_dict(), family_size=len(fam), cond=rec["cond"], residual=rec["residual"],
                   min_horizon=2 * np.pi / rep.delta_combined)
    return metrics, {"gap_record": rec}


RUNNERS = {"simulate": _run_simulate, "moving-control": _run_moving, "point-control": _run_point,
           "nonlinear-control": _run_nonlinear, "bounded-spectrum": _run_bounded_spectrum,
           "spectral-probe": _run_probe, "approx-control": _run_approx, "gap-report": _run_gap}


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def run(config):
    """Run one experiment; numerical and data errors propagate with the experiment name."""
    if config.experiment not in RUNNERS:
        raise ConfigError(f"unknown experiment {config.experiment!r}")
    start = time.perf_counter()
    try:
        metrics, series = RUNNERS[config.experiment](config.parameters)
    except SRLWError as exc:
        exc.args = (f"[{config.experiment}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    return ExperimentReport(config, _clean(metrics), [], time.perf_counter() - start, series)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def emit_plot_data(report, out_dir=None):
    """Write the report's CSV series; returns the written paths."""
    out_dir = out_dir or report.config.output_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for name, obj in report.series.items():
            path = os.path.join(out_dir, f"{name}.csv")
            if name == "trajectory":
                obj.to_csv(path)
            elif name == "control":
                obj.grid_csv(path)
                jpath = os.path.join(out_dir, "control.json")
                with open(jpath, "w") as fh:
                    fh.write(obj.to_json())
                paths.append(jpath)
            elif name == "point_control":
                g, nt = obj
                g.samples_csv(path, nt)
            elif name == "fixed_point":
                obj.trace_csv(path)
            elif name == "cost_curve":
                obj.to_csv(path)
            elif name == "gap_record":
                _write_rows(path, list(obj), [[repr(v) for v in obj.values()]])
            else:
                _write_rows(path, *obj)
            paths.append(path)
    except OSError as exc:
        raise OSError(f"failed writing plot data to {out_dir}: {exc}") from exc
    report.artifacts = sorted(os.path.basename(p) for p in paths)
    return paths


def write_report(report, out_dir=None):
    out_dir = out_dir or report.config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(_clean(report.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _parse_param(text):
    if "=" not in text:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        return key.strip(), json.loads(raw)
    except json.JSONDecodeError:
        return key.strip(), raw


def main(argv=None):
    parser = argparse.ArgumentParser(prog="srlwctl", description=__doc__.strip().splitlines()[0])
    parser.add_argument("experiment", choices=None, help=" | ".join(EXPERIMENTS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--param", action="append", default=[], help="override, key=value")
    args = parser.parse_args(argv)
    try:
        overrides = dict(_parse_param(p) for p in args.param)
        cfg = ExperimentConfig.from_dict(load_config(args.config), args.experiment, overrides,
                                         args.out)
        report = run(cfg)
        emit_plot_data(report)
        path = write_report(report)
    except SRLWError as exc:
        code = 2 if isinstance(exc, ConfigError) else 3 if isinstance(exc, NumericalError) else 4
        json.dump({"error": type(exc).__name__, "message": str(exc),
                   "experiment": args.experiment, "exit_code": code}, sys.stderr)
        sys.stderr.write("\n")
        return code
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
