"""Command-line front end: ``tcsim <command> [--config FILE] [--out DIR] ...``.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Exit status: 0 on success, 2 for malformed input, 1 when a solver or fit
fails (an ``error.json`` is written in that case).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from dataclasses import asdict, replace
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

from . import analysis, montecarlo, params, sequence, tdse
from .errors import ConfigError, FitError, InvalidInputError, SolverError
from .montecarlo import DEFAULT_SEED, ExperimentPlan, fmt

COMMANDS = ("params", "sequence", "fringe", "ensemble", "accuracy", "histogram", "tdse", "table1")
SEED_ENV = "TCS_SEED"
RNG_SCHEME = (
    "Philox keyed by SeedSequence([seed, ensemble, duration_index]); "
    "detunings drawn first, then atom outcomes"
)
CURVE_SAMPLES = 200


class Output:
    """Collects files for one command, honouring --format."""

    def __init__(self, out_dir: Path, fmt_: str):
        self.dir = out_dir
        self.format = fmt_
        self.files: list[str] = []

    def text(self, name: str, text: str):
        path = self.dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.files.append(name)

    def json(self, name: str, obj: Any, force: bool = False):
        if force or self.format in ("json", "both"):
            self.text(name, dumps(obj))

    def csv(self, name: str, header, rows, force: bool = False):
        if force or self.format in ("csv", "both"):
            self.text(name, to_csv(header, rows))


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# configuration -----------------------------------------------------------

def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def resolve_seed(flag: int | None, config: dict[str, Any]) -> int:
    """--seed wins, then a "seed" key in the config, then $TCS_SEED, then the default."""
    if flag is not None:
        seed = flag
    elif "seed" in config:
        seed = config["seed"]
    elif os.environ.get(SEED_ENV):
        seed = os.environ[SEED_ENV]
    else:
        seed = DEFAULT_SEED
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    return seed


def _take(config: dict[str, Any], allowed: set[str], where: str) -> dict[str, Any]:
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where} config: {sorted(unknown)}")
    return dict(config)


def _setup(config: dict[str, Any]) -> params.SetupConfig:
    return params.SetupConfig.from_dict(config.get("setup", {}))


def _plan(config: dict[str, Any], seed: int, defaults: dict[str, Any] | None = None) -> ExperimentPlan:
    """ExperimentPlan from the "plan" block; a missing epsilon comes from the setup."""
    data = {**(defaults or {}), **config.get("plan", {})}
    if "epsilon" not in data:
        data["epsilon"] = params.derived_quantities(_setup(config))["epsilon_rad_per_s"]
    data["seed"] = seed
    return ExperimentPlan.from_dict(data)


# commands ----------------------------------------------------------------

def cmd_params(config, seed, out: Output, jobs):
    _take(config, {"setup", "seed"}, "params")
    derived = params.derived_quantities(_setup(config))
    out.json("params.json", derived, force=out.format != "csv")
    out.csv("params.csv", ("quantity", "value"), sorted(derived.items()))
    return {"derived": derived}


def cmd_sequence(config, seed, out: Output, jobs):
    _take(config, {"T", "drive_detuning", "lower_detuning", "epsilon", "omega", "seed"}, "sequence")
    data = {k: v for k, v in config.items() if k != "seed"}
    if "T" not in data:
        raise ConfigError("sequence config needs T")
    try:
        p = sequence.SequenceParams(**{k: float(v) for k, v in data.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    state = sequence.final_state(p)
    amps = state.amplitudes
    result = {
        "inputs": asdict(p),
        "amplitudes": {lab: [float(a.real), float(a.imag)] for lab, a in zip(sequence.BASIS_LABELS, amps)},
        "p_upper_port": sequence.p_upper_port(state),
        "p_lower_port": sequence.p_lower_port(state),
        "p_ground": sequence.p_ground(state),
        "p_excited": sequence.p_excited(state),
        "closed_form_p1": sequence.closed_form_p1(p),
        "closed_form_pg": sequence.closed_form_pg(p),
        "sign_convention": sequence.MATRIX_CONVENTION,
        "visibility": sequence.visibility(p.T, p.epsilon),
    }
    out.json("sequence.json", result, force=out.format != "csv")
    out.csv("sequence.csv", ("state", "re_amplitude", "im_amplitude", "probability"),
            [(lab, float(a.real), float(a.imag), float(abs(a) ** 2)) for lab, a in zip(sequence.BASIS_LABELS, amps)])
    return result


FRINGE_PLAN = {"n_atoms": 20, "n_durations": 8, "n_reps": 5000, "t0": 10.0}


def cmd_ensemble(config, seed, out: Output, jobs):
    _take(config, {"plan", "setup", "seed", "ensemble"}, "ensemble")
    plan = _plan(config, seed)
    k = int(config.get("ensemble", 0))
    table = montecarlo.simulate_ensemble(plan, ensemble=k)
    summary = table.summary()
    if out.format in ("csv", "both"):
        out.text("ensemble.csv", table.to_csv())
    out.json("ensemble_summary.json", {"plan": plan.to_dict(), "ensemble": k, **summary})
    return {"plan": plan.to_dict(), "ensemble": k}


def cmd_fringe(config, seed, out: Output, jobs):
    _take(config, {"plan", "setup", "seed", "table_csv", "ensemble"}, "fringe")
    plan = _plan(config, seed, FRINGE_PLAN)
    if "table_csv" in config:
        table = montecarlo.EnsembleTable.from_csv(config["table_csv"])
    else:
        table = montecarlo.simulate_ensemble(plan, ensemble=int(config.get("ensemble", 0)))
    s = table.summary()
    fit = analysis.fit_fringe(s["T_s"], s["pg_mean"], s["pg_stderr"], plan.drive_detuning)
    T = np.asarray(s["T_s"])
    grid = np.linspace(T[0], T[0] + plan.period, CURVE_SAMPLES)
    curve = fit.model(grid, plan.drive_detuning)
    expected = 0.5 * sequence.visibility(fit.t_ref, plan.epsilon) if plan.epsilon else float("nan")
    result = {
        "plan": plan.to_dict(),
        "fit": fit.to_dict(),
        "expected_amplitude": expected,
        "amplitude_z": (fit.amplitude - expected) / fit.amplitude_stderr if plan.epsilon else float("nan"),
        "chart": {
            "x": "T [s]", "y": "P_g",
            "series": {"fringe_points.csv": "simulated mean +- standard error",
                       "fringe_curve.csv": "fitted curve"},
        },
    }
    out.csv("fringe_points.csv", ("T[s]", "pg_mean", "pg_stderr", "p1_mean", "p1_stderr"),
            zip(s["T_s"], s["pg_mean"], s["pg_stderr"], s["p1_mean"], s["p1_stderr"]))
    out.csv("fringe_curve.csv", ("T[s]", "pg_fit"), zip(grid.tolist(), curve.tolist()))
    out.json("fringe_fit.json", result)
    return result


def cmd_accuracy(config, seed, out: Output, jobs):
    _take(config, {"plan", "setup", "seed", "n_ensembles"}, "accuracy")
    plan = _plan(config, seed)
    n = int(config.get("n_ensembles", 1000))
    eps, sat, failed = analysis.epsilon_estimates(plan, n, jobs)
    good = eps[~np.isnan(eps)]
    if good.size < 2:
        raise FitError("fewer than 2 ensembles produced a fit")
    report = analysis.AccuracyReport(
        epsilon_true=plan.epsilon,
        mean_epsilon_hat=float(good.mean()),
        std_epsilon_hat=float(good.std(ddof=1)),
        relative_accuracy=float(good.std(ddof=1) / plan.epsilon),
        n_ensembles=n,
        n_saturated=int(sat.sum()),
        n_failed=failed,
    )
    result = {"plan": plan.to_dict(), "report": report.to_dict(),
              "runtime_days": plan.total_runtime() / 86400}
    out.json("accuracy.json", result, force=out.format != "csv")
    out.csv("accuracy_estimates.csv", ("ensemble", "epsilon_hat[rad/s]", "saturated"),
            [(k, float(e), int(s)) for k, (e, s) in enumerate(zip(eps, sat))])
    return result


HISTOGRAM_PLAN = {"n_atoms": 10, "n_durations": 1, "n_reps": 5000, "t0": 10.00025}


def cmd_histogram(config, seed, out: Output, jobs):
    _take(config, {"plan", "setup", "seed", "ks_threshold"}, "histogram")
    plan = _plan(config, seed, HISTOGRAM_PLAN)
    if plan.n_durations != 1:
        raise ConfigError("histogram uses a single duration (n_durations = 1)")
    coh = montecarlo.simulate_ensemble(plan, ensemble=0)
    inc = montecarlo.simulate_ensemble(replace(plan, coherent=False), ensemble=1)
    A = sequence.fringe_amplitude(plan.t0, plan.drive_detuning, plan.epsilon)
    rep = analysis.coherence_test(coh, inc, A, float(config.get("ks_threshold", 1e-3)), seed=seed)
    edges = np.asarray(rep.edges)
    out.csv("histogram.csv", ("bin_left", "bin_right", "coherent_fraction", "incoherent_fraction", "expected_fraction"),
            zip(edges[:-1].tolist(), edges[1:].tolist(), rep.histogram_coherent,
                rep.histogram_incoherent, rep.expected_coherent))
    x = np.linspace(0.5 - A, 0.5 + A, CURVE_SAMPLES + 2)[1:-1]
    out.csv("arcsine_density.csv", ("p1", "density"), zip(x.tolist(), analysis.arcsine_pdf(x, A).tolist()))
    result = {
        "plan": plan.to_dict(), "amplitude": A, "report": rep.to_dict(),
        "chart": {"x": "P1 estimator", "y": "fraction of runs",
                  "series": {"histogram.csv": "coherent, incoherent and expected histograms",
                             "arcsine_density.csv": "arcsine density"}},
    }
    out.json("coherence.json", result)
    return result


def cmd_tdse(config, seed, out: Output, jobs):
    _take(config, {"protocol", "n_points", "n_snapshots", "combiner", "adiabaticity", "seed"}, "tdse")
    p = tdse.TrapProtocol.from_dict(config.get("protocol", {}))
    grid = tdse.Grid1D.for_protocol(p, n_points=int(config.get("n_points", 2048)))
    t0 = time.perf_counter()
    psi0 = tdse.ground_state(p, grid)
    traj = tdse.evolve(psi0, p, grid, n_snapshots=int(config.get("n_snapshots", 21)))
    runtime = time.perf_counter() - t0
    pops = traj.populations()
    adiab = config.get("adiabaticity", True)
    weights = tdse.snapshot_weights(traj, p, grid) if adiab else [float("nan")] * len(traj.times)
    summary = {
        "protocol": asdict(p),
        "grid": asdict(grid),
        "final_p_upper": float(pops[-1, 0]),
        "final_p_lower": float(pops[-1, 1]),
        "max_norm_error": traj.max_norm_error,
        "adiabaticity": float(min(weights)) if adiab else None,
    }
    if config.get("combiner", False):
        back = tdse.evolve(traj.final, p, grid, n_snapshots=2, reverse=True)
        summary["combiner_overlap"] = back.final.overlap(psi0)
        summary["max_norm_error"] = max(summary["max_norm_error"], back.max_norm_error)
    out.csv("tdse_snapshots.csv", ("t[s]", "d[m]", "detuning", "p_upper", "p_lower", "adiabaticity"),
            [(float(t), float(tdse.separation_schedule(t, p)), float(tdse.detuning_schedule(t, p)),
              float(u), float(l), float(w)) for t, (u, l), w in zip(traj.times, pops, weights)])
    out.json("tdse_summary.json", summary, force=out.format != "csv")
    # wall time varies between runs, so it stays out of the written summary
    return summary | {"trajectory_runtime_s": runtime}


def parse_rows(spec: str | None) -> list[int]:
    """Row filter: "all", or comma-separated 1-based indices and ranges ("1,6-8")."""
    n = len(analysis.TABLE1_ROWS)
    if spec is None or spec.strip().lower() == "all":
        return list(range(n))
    rows: list[int] = []
    try:
        for part in spec.split(","):
            lo, dash, hi = part.strip().partition("-")
            rows.extend(range(int(lo), int(hi if dash else lo) + 1))
    except ValueError as exc:
        raise ConfigError(f"bad --rows filter {spec!r}") from exc
    if not rows or any(not 1 <= r <= n for r in rows):
        raise ConfigError(f"--rows entries must lie in 1..{n}")
    return sorted({r - 1 for r in rows})


def cmd_table1(config, seed, out: Output, jobs, rows=None):
    _take(config, {"plan", "setup", "seed", "n_ensembles"}, "table1")
    base = _plan(config, seed)
    n = int(config.get("n_ensembles", 1000))
    records = []
    for idx in parse_rows(rows):
        na, n2, T, days, reference = analysis.TABLE1_ROWS[idx]
        plan = analysis.table1_plan(na, n2, T, base.epsilon, seed, base)
        rec = {"row": idx + 1, "n_atoms": na, "n_reps": n2, "T_s": T, "runtime_reference_days": days,
               "runtime_model_days": plan.total_runtime() / 86400, "accuracy_reference": reference}
        try:
            eps, _, failed = analysis.epsilon_estimates(plan, n, jobs)
            good = eps[~np.isnan(eps)]
            if good.size < 2:
                raise FitError("fewer than 2 ensembles produced a fit")
            acc = float(good.std(ddof=1) / plan.epsilon)
            rec.update(accuracy_sim=acc, relative_deviation=acc / reference - 1, n_failed=failed, error="")
        except (FitError, SolverError) as exc:
            rec.update(accuracy_sim=float("nan"), relative_deviation=float("nan"), n_failed=n, error=str(exc))
        records.append(rec)
    cols = ("row", "n_atoms", "n_reps", "T_s", "runtime_reference_days", "runtime_model_days",
            "accuracy_reference", "accuracy_sim", "relative_deviation", "n_failed", "error")
    header = ("row", "N_a", "N_2", "T[s]", "runtime_reference[days]", "runtime_model[days]",
              "accuracy_reference", "accuracy_simulated", "relative_deviation", "n_failed", "error")
    out.csv("table1.csv", header, [[r[c] for c in cols] for r in records])
    result = {"n_ensembles": n, "epsilon": base.epsilon, "rows": records}
    out.json("table1.json", result)
    return result


HANDLERS: dict[str, Callable] = {
    "params": cmd_params, "sequence": cmd_sequence, "fringe": cmd_fringe,
    "ensemble": cmd_ensemble, "accuracy": cmd_accuracy, "histogram": cmd_histogram,
    "tdse": cmd_tdse, "table1": cmd_table1,
}


def _versions() -> dict[str, str]:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"tweezer_clock": pkg, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tcsim", description="Tweezer clock interferometer simulator.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, help=f"top-level seed (default ${SEED_ENV} or {DEFAULT_SEED})")
    ap.add_argument("--format", choices=("csv", "json", "both"), default="both")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    ap.add_argument("--rows", help="table1 row filter, e.g. 'all' or '6,8,10' (1-based)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    started = time.perf_counter()
    try:
        config = load_config(args.config)
        seed = resolve_seed(args.seed, config)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.rows is not None and args.command != "table1":
            raise ConfigError("--rows only applies to table1")
        out_dir.mkdir(parents=True, exist_ok=True)
        out = Output(out_dir, args.format)
        handler = HANDLERS[args.command]
        if args.command == "table1":
            result = handler(config, seed, out, args.jobs, rows=args.rows)
        else:
            result = handler(config, seed, out, args.jobs)
    except (ConfigError, InvalidInputError, OSError) as exc:
        print(f"tcsim: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FitError, SolverError) as exc:
        error = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(dumps(error), encoding="utf-8", newline="\n")
        except OSError:
            pass
        print(dumps(error), file=sys.stderr, end="")
        return 1
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if argv is None else list(argv),
        "config_path": args.config,
        "config": config,
        "seed": seed,
        "rng_scheme": RNG_SCHEME,
        "format": args.format,
        "jobs": args.jobs,
        "rows": args.rows,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - started,
        "outputs": out.files,
    }
    if isinstance(result, dict) and "trajectory_runtime_s" in result:
        manifest["trajectory_runtime_s"] = result["trajectory_runtime_s"]
    (out_dir / "manifest.json").write_text(dumps(manifest), encoding="utf-8", newline="\n")
    if args.command in ("params", "sequence"):
        print(dumps(result), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
