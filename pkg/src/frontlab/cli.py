"""Scenario-driven command line: spectrum, front, simulate, verify, sweep.

A scenario is one INI-style file with named sections and key = value
entries; the subcommand selects the workflow and `--out` the artifact
directory.  Every resolved setting (defaults included) is echoed into the
output summary so each artifact is self-describing, and all CSV output uses
17 significant digits with newline endings, making reruns byte-identical.

Exit codes: 0 all checks passed, 1 scientific failure (a verdict or
bracketing failure), 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import front as _front
from . import norms as _norms
from . import sim as _sim
from . import spectral as _spectral
from .model import BlockSystem, ModelParams, make_exo_endo_system, make_gasless_system

__all__ = ["ConfigError", "Scenario", "load_scenario", "cmd_spectrum", "cmd_front",
           "cmd_simulate", "cmd_verify", "cmd_sweep", "main"]

THREADS_ENV = "FRONTLAB_THREADS"


class ConfigError(Exception):
    """Scenario file is missing, malformed, or semantically invalid."""


_REQUIRED = object()


@dataclass
class Scenario:
    """Parsed scenario with every accessed key recorded for the summary."""

    raw: configparser.ConfigParser
    resolved: dict = field(default_factory=dict)

    def get(self, section: str, key: str, kind=str, default=_REQUIRED):
        try:
            text = self.raw.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            if default is _REQUIRED:
                raise ConfigError(f"missing required setting [{section}] {key}")
            self.resolved[f"{section}.{key}"] = _fmt_value(default)
            return default
        try:
            value = _parse_value(text, kind)
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc
        self.resolved[f"{section}.{key}"] = _fmt_value(value)
        return value

    def has(self, section: str, key: str) -> bool:
        return self.raw.has_option(section, key)

    def set_override(self, section: str, key: str, value: str) -> None:
        if not self.raw.has_section(section):
            self.raw.add_section(section)
        self.raw.set(section, key, value)


def _parse_value(text: str, kind):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is float:
        return float(text)
    if kind is int:
        val = float(text)
        if val != int(val):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(val)
    if kind == "floats":
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    if kind == "ints":
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    return text


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return ", ".join(_fmt_value(v) for v in value)
    return str(value)


def load_scenario(path) -> Scenario:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        # configparser diagnostics carry [line N] markers
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    return Scenario(raw=parser)


def _build_model(scenario: Scenario):
    kind = scenario.get("model", "kind", str, "combustion")
    if kind == "combustion":
        eps = scenario.get("model", "epsilon", float, 0.5)
        kappa = scenario.get("model", "kappa", float, 1.0)
        c = scenario.get("model", "c", float, 1.0)
        alpha, alpha_label = _resolve_alpha(scenario, c)
        # the optimal weight sits at the closure of the admissible band, so
        # the carrier ModelParams holds a nudged value; all spectral calls
        # receive the exact alpha explicitly
        stored = np.nextafter(alpha, 0.0) if alpha_label == "optimal" else alpha
        try:
            params = ModelParams(epsilon=eps, kappa=kappa, c=c, alpha=stored)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return params, alpha
    if kind == "exo_endo":
        args = {k: scenario.get("model", k, float) for k in
                ("d2", "d3", "sigma", "tau", "a2", "a3", "b2", "b3")}
        c = scenario.get("model", "c", float, 1.0)
        alpha, _ = _resolve_alpha(scenario, c)
        try:
            sys_ = make_exo_endo_system(args["d2"], args["d3"], args["sigma"],
                                        args["tau"], (args["a2"], args["a3"]),
                                        (args["b2"], args["b3"]), c=c, alpha=alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return sys_, alpha
    if kind == "gasless":
        beta = scenario.get("model", "beta", float)
        c = scenario.get("model", "c", float, 1.0)
        alpha, _ = _resolve_alpha(scenario, c)
        try:
            sys_ = make_gasless_system(beta, c=c, alpha=alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return sys_, alpha
    raise ConfigError(f"unknown model kind {kind!r}")


def _resolve_alpha(scenario: Scenario, c: float) -> tuple[float, str]:
    text = scenario.get("weights", "alpha", str, "optimal")
    if isinstance(text, str) and text.strip().lower() == "optimal":
        astar, _ = _spectral.optimal_weight(c)
        return astar, "optimal"
    try:
        return float(text), "explicit"
    except ValueError as exc:
        raise ConfigError(f"bad value for [weights] alpha: {text!r}") from exc


def _build_grid(scenario: Scenario) -> _sim.Grid:
    d = scenario.get("grid", "d", int, 1)
    L = scenario.get("grid", "l", "floats", (50.0,) * d)
    N = scenario.get("grid", "n", "ints", (1024,) if d == 1 else (256, 128))
    try:
        return _sim.Grid(L=L, N=N)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_perturbation(scenario: Scenario, grid: _sim.Grid, ncomp: int) -> _sim.Perturbation:
    shape = scenario.get("perturbation", "shape", str, "gaussian")
    if scenario.has("perturbation", "eta") and scenario.has("perturbation", "amplitude"):
        raise ConfigError("[perturbation] give either eta or amplitude, not both")
    if scenario.has("perturbation", "amplitude"):
        eta = None
        amplitude = scenario.get("perturbation", "amplitude", float)
    else:
        eta = scenario.get("perturbation", "eta", float, 1e-3)
        amplitude = None
    center = scenario.get("perturbation", "center", "floats", (0.0,) * grid.d)
    widths = scenario.get("perturbation", "width", "floats", (2.0,) * grid.d)
    mask = scenario.get("perturbation", "mask", "ints", (1,) * ncomp)
    try:
        return _sim.Perturbation(shape=shape, amplitude=amplitude, eta=eta,
                                 center=center, widths=widths, mask=mask)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_summary(outdir: Path, name: str, scenario: Scenario, metrics: dict) -> None:
    lines = [f"scenario.{k}: {v}" for k, v in sorted(scenario.resolved.items())]
    lines += [f"{k}: {_fmt_value(v)}" for k, v in metrics.items()]
    (outdir / name).write_text("\n".join(lines) + "\n")


def cmd_spectrum(scenario: Scenario, outdir: Path, seed: int = 42) -> tuple[int, dict]:
    """Abscissas, sweeps, optimal weight, and the semigroup envelope constant."""
    model, alpha = _build_model(scenario)
    d = scenario.get("grid", "d", int, 1)
    m = scenario.get("spectrum", "m", int, 401 if d == 1 else 101)
    R_text = scenario.get("spectrum", "r", str, "auto")
    R = None if str(R_text).strip().lower() == "auto" else float(R_text)

    if isinstance(model, ModelParams):
        sym_u = _spectral.SymbolMatrix.from_params(model, d=d, alpha=0.0)
        sym_w = _spectral.SymbolMatrix.from_params(model, d=d, alpha=alpha)
        closed_u = _spectral.abscissa_unweighted(model)
        closed_w = _spectral.abscissa_weighted(model, alpha=alpha)
        astar, vstar = _spectral.optimal_weight(model.c)
        a1, a2 = _spectral.block_abscissas(model)
    else:
        sym_u = _spectral.SymbolMatrix.from_system(model, d=d, alpha=0.0)
        sym_w = _spectral.SymbolMatrix.from_system(model, d=d, alpha=alpha)
        closed_u = _spectral.closed_form_abscissa(sym_u)
        closed_w = _spectral.closed_form_abscissa(sym_w)
        astar, vstar = _spectral.optimal_weight(model.c)
        a1 = a2 = None

    sw_u = _spectral.sweep_symbol(sym_u, R=R, m=m)
    sw_w = _spectral.sweep_symbol(sym_w, R=R, m=m)
    _spectral.write_spectrum_csv(outdir / "spectrum_unweighted.csv", sw_u)
    _spectral.write_spectrum_csv(outdir / "spectrum_weighted.csv", sw_w)

    metrics = {
        "alpha": alpha,
        "abscissa_unweighted_closed": closed_u if closed_u is not None else "none",
        "abscissa_unweighted_realized": sw_u.realized_abscissa,
        "abscissa_weighted_closed": closed_w if closed_w is not None else "none",
        "abscissa_weighted_realized": sw_w.realized_abscissa,
        "sweep_extent": sw_u.extent,
        "sweep_certified": sw_u.certified and sw_w.certified,
        "alpha_star": astar,
        "abscissa_star": vstar,
    }
    if a2 is not None:
        metrics["block_abscissa_1"] = a1
        metrics["block_abscissa_2"] = a2
    if isinstance(model, BlockSystem):
        metrics["zero_diffusion_block"] = model.zero_diffusion

    code = 0
    if isinstance(model, ModelParams):
        t_max = scenario.get("spectrum", "envelope_t_max", float, 40.0)
        t_grid = np.linspace(0.0, t_max, 801)
        xi_grid = np.linspace(-sw_w.extent, sw_w.extent, 401)
        try:
            K_est, nu = _spectral.semigroup_envelope(model, t_grid, xi_grid,
                                                     alpha=alpha)
            metrics["nu"] = nu
            metrics["envelope_K"] = K_est
        except (ValueError, RuntimeError) as exc:
            metrics["envelope_error"] = str(exc)
            code = 1
        if d >= 2:
            rep = _spectral.tensor_sum_check(model, R=sw_w.extent, m=min(m, 101), d=d)
            metrics["tensor_sum_difference"] = rep["difference"]
            if rep["difference"] > 1e-10:
                code = 1

    _write_summary(outdir, "summary.txt", scenario, metrics)
    return code, metrics


def cmd_front(scenario: Scenario, outdir: Path, seed: int = 42) -> tuple[int, dict]:
    """Shoot for the connecting orbit (eps = 0) or run a conservation orbit."""
    mode = scenario.get("front", "mode", str, "shoot")
    eps = scenario.get("model", "epsilon", float, 0.0)
    kappa = scenario.get("model", "kappa", float, 1.0)
    tol = scenario.get("front", "tol", float, 1e-12)

    if mode == "shoot":
        if eps != 0.0:
            raise ConfigError("shooting requires [model] epsilon = 0")
        c_min = scenario.get("front", "c_min", float, 0.05)
        c_max = scenario.get("front", "c_max", float, 2.0)
        scan_points = scenario.get("front", "scan_points", int, 17)
        try:
            params = ModelParams(epsilon=0.0, kappa=kappa, c=max(c_max, 1.0),
                                 alpha=0.25 * max(c_max, 1.0))
            c_star, profile = _front.shoot_speed(params, (c_min, c_max), tol=tol,
                                                 scan_points=scan_points)
        except _front.ShootingError as exc:
            metrics = {"error": str(exc)}
            _write_summary(outdir, "summary.txt", scenario, metrics)
            return 1, metrics
        _front.write_profile_csv(outdir / "profile.csv", profile)
        metrics = {
            "c_star": c_star,
            "phi1_left_residual": profile.residual_left,
            "right_end_residual": profile.residual_right,
            "k_drift_max": profile.k_drift,
            "phi2_monotone": profile.phi2_monotone,
            "bisection_iterations": profile.bisection_iterations,
            "samples": len(profile.z),
        }
        _write_summary(outdir, "summary.txt", scenario, metrics)
        return 0, metrics

    if mode == "orbit":
        c = scenario.get("model", "c", float, 1.0)
        dim = 4 if eps > 0.0 else 3
        s0 = scenario.get("front", "s0", "floats", (0.0, 1.0, 0.0, 0.0)[:dim])
        z0, z1 = scenario.get("front", "span", "floats", (0.0, 10.0))
        try:
            params = ModelParams(epsilon=eps, kappa=kappa, c=c, alpha=0.25 * c)
            res = _front.integrate_orbit(params, np.asarray(s0), (z0, z1), tol=tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        with open(outdir / "orbit.csv", "w", newline="") as fh:
            fh.write("z,phi1,phi2,phi3,phi4,k_drift\n")
            k0 = res.k_values[0]
            for z, s, kv in zip(res.z, res.states, res.k_values):
                p4 = s[3] if s.size == 4 else 0.0
                row = [z, s[0], s[1], s[2], p4, kv - k0]
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
        metrics = {"k_drift_max": res.k_drift, "steps": res.nsteps,
                   "samples": len(res.z)}
        _write_summary(outdir, "summary.txt", scenario, metrics)
        return 0, metrics

    raise ConfigError(f"unknown front mode {mode!r}")


def _write_snapshot(outdir: Path, tag: str, state: _sim.FieldState,
                    grid: _sim.Grid, model_desc: dict) -> None:
    for comp in range(state.data.shape[0]):
        path = outdir / f"snapshot_{tag}_c{comp}.csv"
        with open(path, "w", newline="") as fh:
            for val in state.data[comp].ravel():
                fh.write(f"{val:.17g}\n")
    meta = {
        "t": state.t,
        "components": int(state.data.shape[0]),
        "block_split": state.n1,
        "grid": {"L": list(grid.L), "N": list(grid.N)},
        "model": model_desc,
    }
    (outdir / f"snapshot_{tag}_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _model_desc(model) -> dict:
    if isinstance(model, ModelParams):
        return {"kind": "combustion", "epsilon": model.epsilon,
                "kappa": model.kappa, "c": model.c, "alpha": model.alpha}
    return {"kind": model.name, "c": model.c, "alpha": model.alpha,
            "zero_diffusion": model.zero_diffusion}


def _run_simulation(scenario: Scenario, outdir: Path):
    model, alpha = _build_model(scenario)
    grid = _build_grid(scenario)
    ncomp = 2 if isinstance(model, ModelParams) else model.n
    pert = _build_perturbation(scenario, grid, ncomp)
    T = scenario.get("time", "t", float, 40.0)
    dt = scenario.get("time", "dt", float, 0.02)
    record_every = scenario.get("time", "record_every", int, 25)
    nonlinear = scenario.get("time", "nonlinear", bool, True)
    try:
        result = _sim.run(model, grid, pert, T=T, dt=dt, record_every=record_every,
                          nonlinear=nonlinear)
    except ValueError as exc:
        raise ConfigError(f"simulation rejected the scenario: {exc}") from exc
    _norms.write_norms_csv(outdir / "norms.csv", result.series)
    desc = _model_desc(model)
    _write_snapshot(outdir, "initial", result.snapshots[0], grid, desc)
    _write_snapshot(outdir, "final", result.snapshots[-1], grid, desc)
    return model, alpha, result


def cmd_simulate(scenario: Scenario, outdir: Path, seed: int = 42) -> tuple[int, dict]:
    """Integrate the perturbation equation; write the norm series and snapshots."""
    try:
        model, alpha, result = _run_simulation(scenario, outdir)
    except _sim.SimulationBlowupError as exc:
        metrics = {"error": str(exc)}
        _write_summary(outdir, "summary.txt", scenario, metrics)
        return 1, metrics
    e_col = result.series.column("normE_v", 0)
    metrics = {
        "steps": result.nsteps,
        "dt_effective": result.dt,
        "records": len(result.series),
        "final_normE": float(e_col[-1]),
        "sup_normE": float(np.max(e_col)),
        "boundary_warnings": len(result.warnings),
    }
    for msg in result.warnings:
        metrics.setdefault("boundary_warning", msg)
    _write_summary(outdir, "summary.txt", scenario, metrics)
    return 0, metrics


def cmd_verify(scenario: Scenario, outdir: Path, seed: int = 42) -> tuple[int, dict]:
    """Simulate, then render the stability-theorem verdict; exit 1 on failure."""
    try:
        model, alpha, result = _run_simulation(scenario, outdir)
    except _sim.SimulationBlowupError as exc:
        metrics = {"error": str(exc), "overall_pass": False}
        _write_summary(outdir, "summary.txt", scenario, metrics)
        return 1, metrics
    if not isinstance(model, ModelParams):
        raise ConfigError("verify requires the combustion model")
    eta = float(result.series.column("normE_v", 0)[0])  # measured |v0|_E
    delta = scenario.get("verify", "delta", float, 10.0 * eta)
    rate_floor = scenario.get("verify", "rate_floor", float, 0.8)
    c1_cap = scenario.get("verify", "c1_cap", float, 10.0)
    window = None
    if scenario.has("verify", "window"):
        window = scenario.get("verify", "window", "floats")
        if len(window) != 2:
            raise ConfigError("[verify] window takes two times")
    report = _norms.verify_stability_theorem(
        result.series, model, eta=eta, delta=delta,
        nu_expected=model.c * alpha - alpha**2,
        rate_floor=rate_floor, c1_cap=c1_cap, window=window)
    (outdir / "verdict.txt").write_text(report.to_text())
    metrics = {"overall_pass": report.overall,
               "boundary_warnings": len(result.warnings)}
    for name in sorted(report.items):
        for key, val in report.items[name].items():
            metrics[f"{name}_{key}"] = val
    _write_summary(outdir, "summary.txt", scenario, metrics)
    return (0 if report.overall else 1), metrics


COMMANDS = {
    "spectrum": cmd_spectrum,
    "front": cmd_front,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap is not None:
        try:
            limit = max(1, int(cap))
        except ValueError:
            limit = 1
    else:
        limit = min(4, os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def cmd_sweep(scenario: Scenario, outdir: Path, seed: int = 42) -> tuple[int, dict]:
    """Run a sub-command once per swept value; aggregate one row per value.

    Per-value failures are recorded in their row and never abort the sweep;
    the sweep itself exits 0 unless its own configuration is invalid.
    """
    command = scenario.get("sweep", "command", str)
    if command not in COMMANDS:
        raise ConfigError(f"unknown sweep command {command!r}")
    axis = scenario.get("sweep", "axis", str)
    if "." not in axis:
        raise ConfigError("[sweep] axis must be section.key, e.g. weights.alpha")
    section, key = axis.split(".", 1)
    values_text = scenario.get("sweep", "values", str, "")
    values = [tok.strip() for tok in values_text.split(",") if tok.strip()]

    def run_one(idx_value):
        idx, value = idx_value
        subdir = outdir / f"run_{idx:03d}"
        subdir.mkdir(parents=True, exist_ok=True)
        # a fresh parser copy keeps the override isolated per value
        sub = Scenario(raw=_copy_parser(scenario.raw))
        sub.set_override(section, key, value)
        try:
            code, metrics = COMMANDS[command](sub, subdir, seed)
            return idx, value, ("ok" if code == 0 else "failed"), code, metrics
        except (ConfigError, ValueError) as exc:
            return idx, value, "failed", 2, {"error": str(exc)}

    rows = []
    if values:
        with ThreadPoolExecutor(max_workers=_worker_count(len(values))) as pool:
            rows = list(pool.map(run_one, enumerate(values)))
    rows.sort(key=lambda r: r[0])

    metric_keys = sorted({k for row in rows for k in row[4]})
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        fh.write("index,value,status,exit_code," + ",".join(metric_keys) + "\n")
        for idx, value, status, code, metrics in rows:
            cells = [str(idx), value, status, str(code)]
            cells += [_csv_cell(metrics[k]) if k in metrics else "" for k in metric_keys]
            fh.write(",".join(cells) + "\n")
    summary = {"command": command, "axis": axis, "values": len(rows),
               "failed": sum(1 for r in rows if r[2] != "ok")}
    _write_summary(outdir, "summary.txt", scenario, summary)
    return 0, summary


def _csv_cell(value) -> str:
    """One sweep-table cell; free-text values must not break the row format."""
    text = _fmt_value(value)
    return text.replace(",", ";").replace("\n", " ")


def _copy_parser(parser: configparser.ConfigParser) -> configparser.ConfigParser:
    clone = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    for section in parser.sections():
        clone.add_section(section)
        for key, val in parser.items(section):
            clone.set(section, key, val)
    return clone


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="frontlab",
        description="Spectral and nonlinear stability laboratory for "
                    "combustion-type reaction-diffusion steady states.")
    parser.add_argument("command", choices=[*COMMANDS, "sweep"])
    parser.add_argument("--config", required=True, help="scenario file")
    parser.add_argument("--out", default="./out", help="artifact directory")
    parser.add_argument("--seed", type=int, default=42)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        scenario = load_scenario(args.config)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        handler = cmd_sweep if args.command == "sweep" else COMMANDS[args.command]
        code, _metrics = handler(scenario, outdir, args.seed)
        return code
    except ConfigError as exc:
        print(f"frontlab: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
