"""Command-line interface: simulate, check, flatnorm, sweep.

Exit codes: 0 success, 2 validation/configuration, 3 numerical failure,
4 I/O. Failures emit a machine-readable JSON object on stdout. All outputs
embed the scenario content hash and the package version; reruns with the
same inputs are byte-for-byte identical.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

import crflow
from crflow.analysis import diagnostics, mass_balance_residual
from crflow.dynamics import StepControl, Trajectory, integrate, picard_solve
from crflow.errors import ConfigError, CrflowError, NumericalError, ValidationError
from crflow.measure import flat_distance
from crflow.scenario import (
    Scenario,
    build_scenario,
    load_config,
    load_measure_file,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def run_scenario(sc: Scenario) -> Trajectory:
    if sc.method == "picard":
        traj = picard_solve(
            sc.state0,
            sc.control.t_end,
            sc.rates,
            sc.kernel,
            lam=sc.picard_options["lam"],
            tol=sc.picard_options["tol"],
            max_iter=sc.picard_options["max_iter"],
            nodes=sc.picard_options["nodes"],
        )
    else:
        traj = integrate(sc.state0, sc.control.t_end, sc.control, sc.rates, sc.kernel)
    traj.metadata["scenario_hash"] = sc.hash
    traj.metadata["version"] = crflow.__version__
    return traj


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    n = traj.space.size
    header = ["t", "S", "mass"] + [f"w_{i}" for i in range(n)]
    mass = traj.mass()
    lines = ["# scenario_hash=%s version=%s" % (
        traj.metadata.get("scenario_hash", ""), traj.metadata.get("version", ""))]
    lines.append(",".join(header))
    for k in range(len(traj)):
        row = [traj.times[k], traj.S[k], mass[k]] + list(traj.weights[k])
        lines.append(",".join(_fmt17(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def cmd_simulate(args) -> int:
    sc = build_scenario(load_config(args.scenario), seed_override=args.seed)
    traj = run_scenario(sc)
    report = diagnostics(traj, sc.rates, sc.space, S_max=sc.truncation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", traj)
    endpoint = traj.endpoint()
    write_json(out / "diagnostics.json", {
        "scenario_hash": sc.hash,
        "version": crflow.__version__,
        "endpoint": {
            "t": float(traj.times[-1]),
            "S": endpoint.S,
            "weights": endpoint.mu.weights.tolist(),
            "mass": endpoint.total_mass(),
        },
        "diagnostics": report.to_dict(),
        "metadata": {
            k: v for k, v in traj.metadata.items() if not isinstance(v, np.ndarray)
        },
    })
    return EXIT_OK


def run_checks(sc: Scenario, tol: float = 1e-6):
    """Invariant checks for one scenario: (name, ok, residual) triples."""
    control = StepControl(
        method="rk4",
        dt=sc.control.dt,
        t_end=sc.control.t_end,
        record_every=1,
    )
    traj = integrate(sc.state0, control.t_end, control, sc.rates, sc.kernel)
    results = []

    worst_neg = -min(float(traj.weights.min()), float(traj.S.min()), 0.0)
    results.append(("positivity", worst_neg <= 1e-9, worst_neg))

    try:
        mb = mass_balance_residual(traj, sc.rates)
        results.append(("mass_balance", mb <= tol, mb))
    except ConfigError:
        pass  # non-uniform grid: dt does not divide t_end

    rep = diagnostics(traj, sc.rates, sc.space, S_max=sc.truncation)
    over = rep.max_mass_observed - rep.mass_bound
    results.append(("dissipativity", over <= 1e-6, over))

    n_steps = len(traj) - 1
    if n_steps >= 2:
        split = (n_steps // 2) * sc.control.dt
        mid = integrate(sc.state0, split, control, sc.rates, sc.kernel).endpoint()
        composed = integrate(
            mid, control.t_end - split, control, sc.rates, sc.kernel
        ).endpoint()
        direct = traj.endpoint()
        res = abs(direct.S - composed.S) + flat_distance(direct.mu, composed.mu)
        results.append(("semiflow_law", res <= tol, res))

    fine = StepControl(method="rk4", dt=0.5 * sc.control.dt, t_end=control.t_end)
    refined = integrate(sc.state0, control.t_end, fine, sc.rates, sc.kernel).endpoint()
    direct = traj.endpoint()
    acc = abs(direct.S - refined.S) + flat_distance(direct.mu, refined.mu)
    results.append(("step_accuracy", acc <= tol, acc))

    T = min(1.0, control.t_end)
    pic_control = StepControl(method="rk4", dt=1e-3, t_end=T)
    rk_end = integrate(sc.state0, T, pic_control, sc.rates, sc.kernel).endpoint()
    pic = picard_solve(sc.state0, T, sc.rates, sc.kernel)
    pic_end = pic.endpoint()
    gap = abs(rk_end.S - pic_end.S) + flat_distance(rk_end.mu, pic_end.mu)
    ratio = pic.metadata["contraction_ratio"]
    results.append(("picard_vs_rk", gap <= 1e-5 and ratio < 1.0, gap))

    return results


def cmd_check(args) -> int:
    target = Path(args.scenario)
    if target.is_dir():
        paths = sorted(target.glob("*.json"))
        if not paths:
            print("0 scenarios")
            return EXIT_OK
    else:
        paths = [target]
    failures = 0
    report = {}
    for path in paths:
        sc = build_scenario(load_config(path), seed_override=args.seed)
        rows = run_checks(sc, tol=args.tolerance)
        report[str(path)] = [
            {"check": name, "ok": ok, "residual": res} for name, ok, res in rows
        ]
        for name, ok, res in rows:
            status = "PASS" if ok else "FAIL"
            print(f"{status} {path.name} {name} residual={res:.3e}")
            if not ok:
                failures += 1
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "check_report.json", {
            "version": crflow.__version__,
            "results": report,
        })
    return EXIT_OK if failures == 0 else 1


def cmd_flatnorm(args) -> int:
    mu = load_measure_file(args.measure_a)
    nu = load_measure_file(args.measure_b)
    if not mu.space.same_as(nu.space):
        raise ValidationError("measure files declare different spaces")
    print(f"{flat_distance(mu, nu):.12f}")
    return EXIT_OK


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _sweep_child(task):
    index, cfg, out_dir = task
    row = {"run": index, "status": "ok", "error": "", "exit_code": EXIT_OK}
    try:
        sc = build_scenario(cfg)
        traj = run_scenario(sc)
        rep = diagnostics(traj, sc.rates, sc.space, S_max=sc.truncation)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(out / "trajectory.csv", traj)
        write_json(out / "diagnostics.json", {
            "scenario_hash": sc.hash,
            "version": crflow.__version__,
            "diagnostics": rep.to_dict(),
        })
        endpoint_mass = traj.endpoint().total_mass()
        row.update({
            "endpoint_mass": endpoint_mass,
            "winner_atom": rep.winner_atom if rep.winner_atom is not None else "",
            "concentration_distance": (
                rep.concentration_distance
                if rep.concentration_distance is not None else ""
            ),
            "bound_margin": rep.mass_bound - rep.max_mass_observed,
        })
    except (ConfigError, ValidationError) as exc:
        row.update({"status": "validation-error", "error": str(exc),
                    "exit_code": EXIT_VALIDATION})
    except NumericalError as exc:
        row.update({"status": "numerical-error", "error": str(exc),
                    "exit_code": EXIT_NUMERICAL})
    return row


def cmd_sweep(args) -> int:
    template = load_config(args.scenario)
    sweep_spec = template.pop("sweep", None)
    if not sweep_spec:
        raise ConfigError("sweep template needs a 'sweep' section")
    names = sorted(sweep_spec)
    grids = [sweep_spec[name] for name in names]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    combos = list(itertools.product(*grids))
    for index, values in enumerate(combos):
        cfg = json.loads(json.dumps(template))
        for name, value in zip(names, values):
            _set_path(cfg, name, value)
        tasks.append((index, cfg, str(out / f"run_{index:04d}")))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_child, tasks))
    else:
        rows = [_sweep_child(task) for task in tasks]

    columns = (
        ["run"] + names
        + ["status", "endpoint_mass", "winner_atom",
           "concentration_distance", "bound_margin", "error"]
    )
    lines = [",".join(columns)]
    for row, values in zip(rows, combos):
        cells = [str(row["run"])]
        cells += [_fmt17(v) if isinstance(v, float) else str(v) for v in values]
        cells.append(row["status"])
        for key in ("endpoint_mass", "winner_atom", "concentration_distance",
                    "bound_margin"):
            v = row.get(key, "")
            cells.append(_fmt17(v) if isinstance(v, float) else str(v))
        cells.append('"%s"' % row.get("error", "").replace('"', "'"))
        lines.append(",".join(cells))
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    worst = max((row["exit_code"] for row in rows), default=EXIT_OK)
    return worst


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crflow",
        description="Consumer-resource dynamics on discrete measures",
    )
    parser.add_argument("--version", action="version", version=crflow.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and write outputs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="run the invariant suite on scenarios")
    p.add_argument("--scenario", required=True, help="scenario file or directory")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("flatnorm", help="flat distance between two measure files")
    p.add_argument("measure_a")
    p.add_argument("measure_b")
    p.set_defaults(func=cmd_flatnorm)

    p = sub.add_parser("sweep", help="run a parameter sweep from a template")
    p.add_argument("--scenario", required=True, help="template with a 'sweep' section")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    return parser


def _emit_error(kind: str, message: str, code: int) -> None:
    print(json.dumps({
        "error": {"type": kind, "message": message, "exit_code": code}
    }, sort_keys=True))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        _emit_error(type(exc).__name__, str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        _emit_error("JSONDecodeError", str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except NumericalError as exc:
        _emit_error(type(exc).__name__, str(exc), EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except CrflowError as exc:
        _emit_error(type(exc).__name__, str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except OSError as exc:
        _emit_error("IOError", str(exc), EXIT_IO)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
