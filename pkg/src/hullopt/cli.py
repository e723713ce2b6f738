"""Command-line front end: experiment orchestration and file emission.

Subcommands: optimize, sweep, spectrum, blayer, wigley, validate.
Exit codes: 0 success, 1 usage/config error, 2 non-convergence, 3 internal.

Output files are written atomically with fixed float formatting and fixed
orderings, so identical configurations reproduce byte-identical files; each
output directory gets a config.json sidecar with the fully resolved
configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, solver, wave
from .config import ConfigError, RunConfig, default_config, parse_config
from .geometry import build_grid, hull_volume, wigley_hull, normalize_volume, write_hull_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_INTERNAL = 3

_F = lambda x: format(float(x), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_config_sidecar(out: Path, config: RunConfig) -> None:
    _write_json(out / "config.json", config.resolved())


def _fr_tag(froude: float) -> str:
    return format(float(froude), "g").replace(".", "p").replace("-", "m")


def _report_payload(config: RunConfig, froude: float, eps: float,
                    report: solver.SolveReport, volume: float) -> dict:
    grid = config.grid
    phys = config.physical
    return {
        "objective": report.objective,
        "wave_part": report.wave_part,
        "viscous_part": report.viscous_part,
        "iterations": report.iterations,
        "converged": report.converged,
        "residuals": {key: report.residuals[key]
                      for key in ("stationarity", "feasibility", "complementarity")},
        "residuals_raw": {
            "stationarity": report.kkt.stationarity,
            "volume": report.kkt.volume,
            "negativity": report.kkt.negativity,
            "complementarity": report.kkt.complementarity,
        },
        "steps": {"dr1": report.steps[0], "dr2": report.steps[1]},
        "fr": froude,
        "eps": eps,
        "volume": volume,
        "grid": {"nx": grid.nx, "nz": grid.nz, "L": phys.length, "T": phys.draft},
        "config": config.resolved(),
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _config_with_overrides(args) -> RunConfig:
    config = parse_config(args.config) if args.config else default_config()
    solver_cfg = config.solver
    quad_cfg = config.quadrature
    solver_updates = {}
    for key, attr in (("dr1", "dr1"), ("dr2", "dr2"), ("tol", "tol"),
                      ("max_iter", "max_iter"), ("init", "init")):
        value = getattr(args, key, None)
        if value is not None:
            solver_updates[attr] = value
    quad_updates = {}
    for key, attr in (("n_octave", "n_per_octave"), ("k_lambda_max", "k_lambda_max"),
                      ("quad_tol", "tol")):
        value = getattr(args, key, None)
        if value is not None:
            quad_updates[attr] = value
    if solver_updates:
        solver_cfg = dataclasses.replace(solver_cfg, **solver_updates)
    if quad_updates:
        quad_cfg = dataclasses.replace(quad_cfg, **quad_updates)
    config = dataclasses.replace(config, solver=solver_cfg, quadrature=quad_cfg)
    config.validate()
    return config


def cmd_optimize(args) -> int:
    config = _config_with_overrides(args)
    flow = config.flow_params(froude=args.fr, speed=args.speed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    study = analysis.HullStudy(config)
    report = study.solve(flow.froude)
    write_hull_csv(out / "hull.csv", study.grid, report.f)
    _write_json(out / "report.json",
                _report_payload(config, flow.froude, flow.eps, report,
                                hull_volume(study.grid, report.f)))
    _write_config_sidecar(out, config)
    if not report.converged:
        print(f"optimize: no convergence after {report.iterations} iterations "
              f"(residual {report.residual_history[-1]:.3g})", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"optimize: Fr={flow.froude:g} converged in {report.iterations} iterations; "
          f"objective {report.objective:.6g} N -> {out / 'hull.csv'}")
    return EXIT_OK


def _sweep_point(payload):
    config_dict, froude = payload
    config = _rebuild_config(config_dict)
    study = analysis.HullStudy(config)
    eps = study.flow(froude).eps
    try:
        report = study.solve(froude)
        record = study.record(froude, eps, report)
    except solver.UzawaStepError:
        record = None
    return froude, record


def _rebuild_config(d: dict) -> RunConfig:
    from .config import (PhysicalConfig, GridConfig, QuadratureConfig,
                         SolverConfig, ExperimentConfig)
    sections = {"physical": PhysicalConfig, "grid": GridConfig,
                "quadrature": QuadratureConfig, "solver": SolverConfig,
                "experiment": ExperimentConfig}
    kwargs = {}
    for name, cls in sections.items():
        vals = dict(d[name])
        for key, value in vals.items():
            if isinstance(value, list):
                vals[key] = tuple(value)
        kwargs[name] = cls(**vals)
    return RunConfig(**kwargs)


def _record_rows(records, hull_files):
    rows = []
    for rec, hull_file in zip(records, hull_files):
        rows.append((format(rec.froude, "g"), _F(rec.eps), _F(rec.objective),
                     _F(rec.wave), _F(rec.viscous), _F(rec.xbar), _F(rec.zbar),
                     hull_file))
    return rows


def cmd_sweep(args) -> int:
    config = _config_with_overrides(args)
    froude_list = [float(f) for f in (args.fr_list or config.experiment.froude_list)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point,
                                    [(config.resolved(), fr) for fr in froude_list]))
        records = []
        study = analysis.HullStudy(config)
        for froude, record in results:
            if record is None:
                records.append(analysis.SweepRecord(
                    froude=froude, eps=study.flow(froude).eps, objective=math.nan,
                    wave=math.nan, viscous=math.nan, xbar=math.nan, zbar=math.nan,
                    hull=np.zeros(study.grid.n_free), converged=False, iterations=0))
            else:
                records.append(record)
        grid = study.grid
    else:
        records = analysis.froude_sweep(config, froude_list)
        grid = build_grid(config.physical.length, config.physical.draft,
                          config.grid.nx, config.grid.nz)
    hull_files = []
    for rec in records:
        name = f"hull_fr{_fr_tag(rec.froude)}.csv"
        write_hull_csv(out / name, grid, rec.hull)
        hull_files.append(name)
    _write_csv(out / "sweep.csv", "fr,eps,objective,wave,viscous,xbar,zbar,hull_file",
               _record_rows(records, hull_files))
    _write_config_sidecar(out, config)
    failures = [rec.froude for rec in records if not rec.converged]
    if failures:
        print(f"sweep: non-converged points at Fr={failures}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"sweep: {len(records)} points -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    config = _config_with_overrides(args)
    froude = args.fr if args.fr is not None else (config.experiment.froude or 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    study = analysis.HullStudy(config)
    report = analysis.spectrum(study.wave_matrix(froude),
                               thresholds=config.experiment.thresholds)
    _write_csv(out / "spectrum.csv", "index,abs_eigenvalue",
               ((str(i), _F(val)) for i, val in enumerate(report.abs_eigenvalues)))
    _write_json(out / "spectrum.json", {
        "fr": froude,
        "nx": report.nx, "nz": report.nz,
        "n": int(report.abs_eigenvalues.size),
        "min_eigenvalue": report.min_eigenvalue,
        "max_eigenvalue": report.max_eigenvalue,
        "counts": {format(t, "g"): c for t, c in report.counts.items()},
        "config": config.resolved(),
    })
    counts = ", ".join(f">{t:g}*max: {c}" for t, c in sorted(report.counts.items()))
    print(f"spectrum: N={report.abs_eigenvalues.size} ({counts}) -> {out / 'spectrum.csv'}")
    return EXIT_OK


def cmd_blayer(args) -> int:
    config = _config_with_overrides(args)
    froude = args.fr if args.fr is not None else 1.0
    eps_ref = config.flow_params(froude=froude).eps
    factors = args.eps_factors or config.experiment.eps_factors
    eps_list = [eps_ref * float(f) for f in factors]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = analysis.boundary_layer_sweep(config, eps_list, froude=froude)
    grid = build_grid(config.physical.length, config.physical.draft,
                      config.grid.nx, config.grid.nz)
    hull_files = []
    for k, rec in enumerate(result.records):
        name = f"hull_eps{k}.csv"
        write_hull_csv(out / name, grid, rec.hull)
        hull_files.append(name)
    _write_csv(out / "blayer.csv", "fr,eps,objective,wave,viscous,xbar,zbar,hull_file",
               _record_rows(result.records, hull_files))
    _write_json(out / "blayer.json", {
        "fr": froude,
        "eps": [rec.eps for rec in result.records],
        "widths": list(result.widths),
        "exponent": result.exponent,
        "exponent_stderr": result.exponent_stderr,
        "completed": result.completed,
        "config": config.resolved(),
    })
    _write_config_sidecar(out, config)
    if not result.completed:
        print("blayer: sweep aborted on a non-converged point", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"blayer: width ~ eps^{result.exponent:.3f} "
          f"(stderr {result.exponent_stderr:.3f}) -> {out / 'blayer.csv'}")
    return EXIT_OK


def cmd_wigley(args) -> int:
    config = _config_with_overrides(args)
    froude_list = [float(f) for f in (args.fr_list or config.experiment.froude_list)]
    fr_design = args.fr_design if args.fr_design is not None else config.experiment.fr_design
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = analysis.wigley_compare(config, froude_list, fr_design=fr_design)
    _write_csv(out / "wigley.csv", "fr,r_optimized,r_design_hull,r_wigley",
               ((format(r.froude, "g"), _F(r.r_optimized), _F(r.r_design_hull),
                 _F(r.r_wigley)) for r in rows))
    _write_json(out / "wigley.json", {
        "fr_design": fr_design,
        "rows": [dataclasses.asdict(r) for r in rows],
        "config": config.resolved(),
    })
    _write_config_sidecar(out, config)
    print(f"wigley: {len(rows)} points (design Fr={fr_design:g}) -> {out / 'wigley.csv'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    """Oracle cross-checks on randomized inputs; failures exit nonzero."""
    from scipy.integrate import quad

    rng = np.random.default_rng(args.seed)
    failures = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        print(f"  {'PASS' if ok else 'FAIL'}  {name}{(' ' + detail) if detail else ''}")
        if not ok:
            failures.append(name)

    # closed forms vs adaptive quadrature
    worst = 0.0
    for _ in range(200):
        lam = float(np.exp(rng.uniform(0.0, np.log(64.0))))
        v = float(np.exp(rng.uniform(np.log(0.1), np.log(30.0))))
        dx = float(np.exp(rng.uniform(np.log(1e-3), np.log(0.3))))
        x = float(rng.uniform(-1.0, 1.0))
        ref = quad(lambda t: np.cos(lam * v * t) * (x + dx - t), x, x + dx,
                   epsabs=1e-16, epsrel=1e-13, limit=400)[0]
        got = float(wave.a_plus(lam, v, x, dx))
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-30))
    check("a_plus vs quadrature", worst < 1e-9, f"worst rel {worst:.2e}")

    worst = 0.0
    for _ in range(200):
        lam = float(np.exp(rng.uniform(0.0, np.log(64.0))))
        v = float(np.exp(rng.uniform(np.log(0.1), np.log(30.0))))
        dz = float(np.exp(rng.uniform(np.log(1e-3), np.log(0.1))))
        s = lam * lam * v
        z = float(rng.uniform(dz, dz + min(0.3, 60.0 / s)))
        hi = min(z, z - dz + 60.0 / s)
        ref = quad(lambda t: np.exp(-s * t) * (t - (z - dz)), z - dz, hi,
                   epsabs=1e-300, epsrel=1e-13, limit=400)[0]
        got = float(wave.b_minus(lam, v, z, dz))
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    check("b_minus vs quadrature", worst < 1e-9, f"worst rel {worst:.2e}")

    # PSD + rank census on a small grid
    grid = build_grid(2.0, 0.2, 24, 8)
    wm = wave.assemble_Mw(grid, 0.5, n_per_octave=40)
    eig = np.linalg.eigvalsh(wm.matrix)
    check("wave matrix PSD", eig[0] >= -1e-10 * eig[-1], f"min/max {eig[0] / eig[-1]:.2e}")
    check("wave matrix rank bound", int(np.sum(eig > 1e-12 * eig[-1])) >= 23,
          f"count {int(np.sum(eig > 1e-12 * eig[-1]))}")

    # matrix path vs direct quadrature on the benchmark hull
    from .geometry import eval_hull
    quad_rule = wave.build_quadrature(12, 6)
    wm_small = wave.assemble_Mw(grid, 0.5, quadrature=quad_rule)
    wig = wigley_hull(grid, 0.03)
    r_matrix = wave.wave_resistance(wig, wm_small, 1000.0, 9.81)
    r_direct = wave.wave_resistance_direct(
        lambda x, z: eval_hull(grid, wig, x, z), grid, 0.5, 1000.0, 9.81, quad_rule)
    rel = abs(r_matrix - r_direct) / r_direct
    check("matrix vs direct resistance", rel < 1e-6, f"rel {rel:.2e}")

    # solver cross-validation on a small fixture
    from .viscous import assemble_Md
    md = assemble_Md(grid)
    problem = solver.combine_objective(wm, md, 1000.0, 9.81, 50.0, 0.03)
    report = solver.uzawa_solve(problem, tol=1e-10)
    oracle = solver.reference_qp_oracle(problem, tol=1e-11)
    diff = float(np.max(np.abs(report.f - oracle))) / float(report.f.max())
    check("uzawa vs projected gradient", report.converged and diff < 1e-6,
          f"rel diff {diff:.2e}")

    if failures:
        print(f"validate: {len(failures)} check(s) failed: {', '.join(failures)}")
        return EXIT_INTERNAL
    print("validate: all checks passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="configuration file (INI sections)")
    p.add_argument("--out", type=str, default="runs", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers (default 1, reproducible)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized validation fixtures")
    p.add_argument("--n-octave", dest="n_octave", type=int, default=None)
    p.add_argument("--k-lambda-max", dest="k_lambda_max", type=int, default=None)
    p.add_argument("--quad-tol", dest="quad_tol", type=float, default=None)
    p.add_argument("--dr1", type=float, default=None)
    p.add_argument("--dr2", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--init", choices=("flat", "wigley", "file"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hullopt",
                     description="Minimize total water resistance over fixed-volume hulls.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="solve one operating point")
    _add_common(p)
    p.add_argument("--fr", type=float, default=None, help="length Froude number")
    p.add_argument("--speed", type=float, default=None, help="speed U (m/s); alternative to --fr")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="optimize across a list of Froude numbers")
    _add_common(p)
    p.add_argument("--fr-list", dest="fr_list", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrum", help="eigenvalue census of the wave matrix")
    _add_common(p)
    p.add_argument("--fr", type=float, default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("blayer", help="boundary-layer width as eps decreases")
    _add_common(p)
    p.add_argument("--fr", type=float, default=None)
    p.add_argument("--eps-factors", dest="eps_factors", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_blayer)

    p = sub.add_parser("wigley", help="compare optimized hulls against the benchmark hull")
    _add_common(p)
    p.add_argument("--fr-list", dest="fr_list", type=float, nargs="+", default=None)
    p.add_argument("--fr-design", dest="fr_design", type=float, default=None)
    p.set_defaults(func=cmd_wigley)

    p = sub.add_parser("validate", help="run oracle cross-checks")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except solver.UzawaStepError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
