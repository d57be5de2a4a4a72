"""Batch front-end: configured runs, convergence sweeps, reference comparisons.

A run writes into its output directory:

* ``errors_E.csv`` / ``errors_H.csv`` with columns step, t, err_raw, err_post
  (curl-seminorm errors against the exact solution at the recorded steps),
* ``summary.json`` with the final-time errors and run parameters,
* ``state_final.npz`` with the final coefficient arrays,
* for sweeps, ``eoc.csv`` with per-mesh errors and estimated orders.

Configuration is a plain ``key=value`` text file; every key can be overridden
on the command line.  Numbers in CSV output use the shortest round-trip
decimal representation, so re-reading a file reproduces the run bit for bit.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from maxwelldg import analysis
from maxwelldg.constants import Z0
from maxwelldg.dg_operator import DGOperator, FieldState
from maxwelldg.mesh import load_mesh
from maxwelldg.postprocess import postprocess_state
from maxwelldg.scenarios import Scenario, builtin_scenarios
from maxwelldg.time_integration import cfl_time_step, run_simulation


@dataclass
class RunConfig:
    """Everything needed to execute one scenario end to end."""

    scenario: str = "cavity"
    degree: int | None = None
    n: int | None = None
    mesh_file: str | None = None
    dt: float | None = None
    out_dir: str = "out"
    series_stride: int | None = 0        # 0 = auto (~30 rows), None = final only
    postprocess_steps: tuple = ()
    sweep: tuple = ()
    reference_degree: int | None = None  # compare mode; default degree + 2

    def validate(self, scenario: Scenario) -> None:
        degree = self.degree if self.degree is not None else scenario.default_degree
        if degree not in (1, 2, 3, 4):
            raise ValueError("degree must be one of 1, 2, 3, 4")
        if scenario.needs_mesh_file and not self.mesh_file:
            raise ValueError(f"scenario '{scenario.name}' requires a mesh file")
        if not scenario.needs_mesh_file and self.n is None and not self.sweep and not self.mesh_file:
            raise ValueError("a mesh resolution (n) or mesh file is required")
        if self.sweep and list(self.sweep) != sorted(set(self.sweep)):
            raise ValueError("sweep list must be strictly increasing")
        if self.sweep and self.mesh_file:
            raise ValueError("sweeps refine the structured mesh; drop the mesh file")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt override must be positive")


@dataclass
class RunResult:
    """In-memory outcome of one simulation."""

    config: RunConfig
    mesh: object
    op: DGOperator
    final_state: FieldState
    final_post: object
    report: analysis.ErrorReport
    dt: float
    n_steps: int
    h: float


def _resolve(config: RunConfig):
    scenarios = builtin_scenarios()
    if config.scenario not in scenarios:
        raise ValueError(f"unknown scenario '{config.scenario}'; "
                         f"choose from {sorted(scenarios)}")
    scenario = scenarios[config.scenario]
    config.validate(scenario)
    degree = config.degree if config.degree is not None else scenario.default_degree
    return scenario, degree


def _build_mesh(scenario: Scenario, config: RunConfig, n: int | None):
    if config.mesh_file:
        mesh = load_mesh(config.mesh_file)
        h = (6.0 * float(np.min(mesh.volumes))) ** (1.0 / 3.0)
        return mesh, h
    return scenario.build_mesh(n), scenario.length / n


def _initial_state(op: DGOperator, scenario: Scenario) -> FieldState:
    if scenario.exact is not None:
        sol = scenario.exact
        return op.project_initial_conditions(
            lambda x: sol.e(0.0, x), lambda x: sol.h(0.0, x))
    zero = lambda x: np.zeros_like(x)
    return op.project_initial_conditions(zero, zero)


def _series_steps(n_steps: int, stride: int | None, extra=()) -> set:
    steps = {n_steps}
    if stride is not None:
        if stride == 0:
            stride = max(1, n_steps // 30)
        steps.update(range(stride, n_steps + 1, stride))
    steps.update(s for s in extra if 1 <= s <= n_steps)
    return steps


def simulate(config: RunConfig, n: int | None = None) -> RunResult:
    """Run one configuration (resolution from `n` unless a file is given)."""
    scenario, degree = _resolve(config)
    mesh, h = _build_mesh(scenario, config, n if n is not None else config.n)
    op = DGOperator(mesh, degree, scenario.source)
    dt = config.dt if config.dt is not None else cfl_time_step(mesh, degree)
    n_steps = max(1, math.ceil(scenario.final_time / dt - 1e-12))

    report = analysis.ErrorReport(h=h, degree=degree)
    record_at = _series_steps(n_steps, config.series_stride, config.postprocess_steps)

    def observer(nstep, t, state):
        if nstep not in record_at or scenario.exact is None:
            return
        post = postprocess_state(state, op)
        report.steps.append(nstep)
        report.times.append(t)
        report.e_curl_raw.append(analysis.hcurl_error(state, scenario.exact, mesh, "E"))
        report.h_curl_raw.append(analysis.hcurl_error(state, scenario.exact, mesh, "H"))
        report.e_curl_post.append(analysis.hcurl_error(post, scenario.exact, mesh, "E"))
        report.h_curl_post.append(analysis.hcurl_error(post, scenario.exact, mesh, "H"))

    initial = _initial_state(op, scenario)
    final = run_simulation(initial, scenario.final_time, dt, op.rhs, observers=[observer])
    final_post = postprocess_state(final, op)

    if scenario.exact is not None:
        report.final = {
            "E_curl_raw": analysis.hcurl_error(final, scenario.exact, mesh, "E"),
            "E_curl_post": analysis.hcurl_error(final_post, scenario.exact, mesh, "E"),
            "H_curl_raw": analysis.hcurl_error(final, scenario.exact, mesh, "H"),
            "H_curl_post": analysis.hcurl_error(final_post, scenario.exact, mesh, "H"),
            "E_l2": analysis.l2_error(final, scenario.exact, mesh, "E"),
            "H_l2": analysis.l2_error(final, scenario.exact, mesh, "H"),
        }
    report.final["energy"] = analysis.discrete_energy(final, mesh)
    report.validate()
    return RunResult(config=config, mesh=mesh, op=op, final_state=final,
                     final_post=final_post, report=report, dt=dt,
                     n_steps=n_steps, h=h)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v
                             for v in row])


def write_run_outputs(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rep = result.report
    for which, raw, post in (("E", rep.e_curl_raw, rep.e_curl_post),
                             ("H", rep.h_curl_raw, rep.h_curl_post)):
        rows = [(s, float(t), float(r), float(p))
                for s, t, r, p in zip(rep.steps, rep.times, raw, post)]
        _write_csv(out_dir / f"errors_{which}.csv",
                   ["step", "t", "err_raw", "err_post"], rows)

    summary = {
        "scenario": result.config.scenario,
        "degree": rep.degree,
        "h": rep.h,
        "dt": result.dt,
        "n_steps": result.n_steps,
        "num_elements": result.mesh.num_elements,
        "final": rep.final,
        "impedance_scale": Z0,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    np.savez_compressed(out_dir / "state_final.npz",
                        t=result.final_state.t, data=result.final_state.data,
                        e_star=result.final_post.e_star,
                        h_star=result.final_post.h_star)


def run(config: RunConfig) -> list:
    """Execute a single run or a sweep; returns the RunResults."""
    scenario, _degree = _resolve(config)
    out_root = Path(config.out_dir)
    results = []
    if config.sweep:
        for n in config.sweep:
            result = simulate(config, n=n)
            write_run_outputs(result, out_root / f"n{n}")
            results.append(result)
        _write_eoc(results, out_root / "eoc.csv")
    else:
        result = simulate(config)
        write_run_outputs(result, out_root)
        results.append(result)
    return results


def _write_eoc(results: list, path: Path) -> None:
    hs = [r.h for r in results]
    cols = ["E_curl_raw", "E_curl_post", "H_curl_raw", "H_curl_post"]
    tables = {c: analysis.eoc([r.report.final[c] for r in results], hs)
              for c in cols}
    header = ["h"]
    for c in cols:
        header += [c, f"eoc_{c}"]
    rows = []
    for i, h in enumerate(hs):
        row = [float(h)]
        for c in cols:
            row.append(float(tables[c].errors[i]))
            row.append(float(tables[c].eocs[i - 1]) if i > 0 else "")
        rows.append(row)
    _write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Reference-run comparison (probe workflow)
# ---------------------------------------------------------------------------


def compare_with_reference(config: RunConfig, reference: RunConfig | None = None,
                           probes=None) -> dict:
    """Run a primary and a higher-order reference simulation on one mesh and
    report per-probe relative curl errors, raw and postprocessed.

    The primary step is the CFL step rounded down so it divides the final
    time; the reference runs the same mesh at that step divided by an
    integer (3 by default, so the CFL bound of a degree+2 run holds) and is
    sampled at the primary step times.  An explicit `reference` config may
    set the reference degree and time step; a step that does not divide the
    primary step is rejected as a time-grid misalignment.
    """
    scenario, degree = _resolve(config)
    if reference is None:
        ref_degree = (config.reference_degree
                      if config.reference_degree is not None else degree + 2)
        ref_dt = None
    else:
        if (reference.scenario != config.scenario
                or reference.n != config.n
                or reference.mesh_file != config.mesh_file):
            raise ValueError("reference run must share the primary mesh")
        ref_degree = (reference.degree if reference.degree is not None
                      else degree + 2)
        ref_dt = reference.dt
    if ref_degree not in (1, 2, 3, 4):
        raise ValueError("reference degree must be in 1..4")

    mesh, _h = _build_mesh(scenario, config, config.n)
    if probes is None:
        probes = scenario.probes
    if probes is None:
        raise ValueError("no probe points configured for this scenario")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    probe_elems = analysis.locate_points(mesh, probes)

    op = DGOperator(mesh, degree, scenario.source)
    dt_cfl = config.dt if config.dt is not None else cfl_time_step(mesh, degree)
    n_steps = max(1, math.ceil(scenario.final_time / dt_cfl - 1e-12))
    dt = scenario.final_time / n_steps
    if ref_dt is None:
        divisor = 3 if ref_degree > degree else 1
    else:
        ratio = dt / ref_dt
        divisor = int(round(ratio))
        if divisor < 1 or abs(ratio - divisor) > 1e-9 * max(1.0, divisor):
            raise ValueError(
                "reference time step must be an integral division of the "
                "primary step (time grids misaligned)")
    dt_ref = dt / divisor

    sel = np.unique(probe_elems)
    raw = {"E": [], "H": []}
    post = {"E": [], "H": []}
    times = []

    def primary_observer(nstep, t, state):
        times.append(t)
        ps = postprocess_state(state, op, selection=sel)
        for which in ("E", "H"):
            raw[which].append(analysis.point_curls(state, mesh, probes,
                                                   probe_elems, which))
            post[which].append(analysis.point_curls(ps, mesh, probes,
                                                    probe_elems, which))

    run_simulation(_initial_state(op, scenario), scenario.final_time,
                   dt, op.rhs, observers=[primary_observer])

    ref_op = DGOperator(mesh, ref_degree, scenario.source)
    ref = {"E": [], "H": []}
    ref_times = []

    def reference_observer(nstep, t, state):
        if nstep % divisor != 0:
            return
        ref_times.append(t)
        for which in ("E", "H"):
            ref[which].append(analysis.point_curls(state, mesh, probes,
                                                   probe_elems, which))

    run_simulation(_initial_state(ref_op, scenario), scenario.final_time,
                   dt_ref, ref_op.rhs, observers=[reference_observer])

    times = np.asarray(times)
    ref_times = np.asarray(ref_times)
    if (ref_times.size != times.size
            or np.max(np.abs(ref_times - times)) > 1e-12 * scenario.final_time):
        raise RuntimeError("reference and primary time grids are misaligned")

    out = {"probes": probes, "dt": dt, "n_steps": n_steps,
           "degree": degree, "reference_degree": ref_degree,
           "dt_divisor": divisor, "fields": {}}
    for which in ("E", "H"):
        err, err_star = analysis.probe_relative_errors(
            np.asarray(ref[which]), np.asarray(raw[which]), np.asarray(post[which]))
        out["fields"][which] = {"err": err, "err_star": err_star}
    return out


def write_probe_outputs(result: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for p, probe in enumerate(result["probes"]):
        for which in ("E", "H"):
            rows.append([
                p + 1, float(probe[0]), float(probe[1]), float(probe[2]), which,
                float(result["fields"][which]["err"][p]),
                float(result["fields"][which]["err_star"][p]),
            ])
    _write_csv(out_dir / "probe_errors.csv",
               ["point", "x", "y", "z", "field", "err", "err_star"], rows)


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


_CONFIG_KEYS = ("scenario", "degree", "n", "mesh", "dt", "out",
                "series_stride", "sweep", "reference_degree")


def load_config_file(path) -> dict:
    """Read `key=value` lines; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}; "
                             f"expected one of {', '.join(_CONFIG_KEYS)}")
        values[key] = val
    return values


def _config_from(values: dict, args) -> RunConfig:
    config = RunConfig()

    def pick(key, cast, current):
        if getattr(args, key, None) is not None:
            return cast(getattr(args, key))
        if key in values:
            return cast(values[key])
        return current

    config.scenario = pick("scenario", str, config.scenario)
    config.degree = pick("degree", int, config.degree)
    config.n = pick("n", int, config.n)
    config.mesh_file = pick("mesh", str, config.mesh_file)
    config.dt = pick("dt", float, config.dt)
    config.out_dir = pick("out", str, config.out_dir)
    config.reference_degree = pick("reference_degree", int, config.reference_degree)
    stride = pick("series_stride", str, None)
    if stride is not None:
        config.series_stride = None if stride in ("none", "None") else int(stride)
    sweep = pick("sweep", str, None)
    if sweep:
        config.sweep = tuple(int(s) for s in str(sweep).replace(",", " ").split())
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="maxwelldg",
        description="Time-domain Maxwell DG solver with curl-superconvergent "
                    "postprocessing")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", nargs="?", help="key=value configuration file")
        p.add_argument("--scenario", help="cavity, planewave, or scattering")
        p.add_argument("--degree", type=int, help="polynomial degree 1..4")
        p.add_argument("--n", type=int, help="structured mesh resolution")
        p.add_argument("--mesh", help="mesh file path")
        p.add_argument("--dt", type=float, help="time step override (s)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--series-stride", dest="series_stride",
                       help="error-series stride (integer, 0=auto, none=final only)")

    p_run = sub.add_parser("run", help="single run or convergence sweep")
    add_common(p_run)
    p_run.add_argument("--sweep", help="comma-separated n values")

    p_cmp = sub.add_parser("compare", help="reference-solution probe comparison")
    add_common(p_cmp)
    p_cmp.add_argument("--reference-degree", dest="reference_degree", type=int,
                       help="degree of the reference run (default: degree + 2)")

    args = parser.parse_args(argv)
    values = load_config_file(args.config) if args.config else {}
    config = _config_from(values, args)

    try:
        if args.command == "run":
            results = run(config)
            for r in results:
                final = r.report.final
                msg = (f"[{config.scenario}] degree={r.report.degree} h={r.h:.6g} "
                       f"dt={r.dt:.6g} steps={r.n_steps}")
                if "E_curl_raw" in final:
                    msg += (f" curlE: raw={final['E_curl_raw']:.6g}"
                            f" post={final['E_curl_post']:.6g}")
                print(msg)
        else:
            result = compare_with_reference(config)
            write_probe_outputs(result, Path(config.out_dir))
            for p in range(result["probes"].shape[0]):
                e = result["fields"]["E"]
                h = result["fields"]["H"]
                print(f"probe {p + 1}: err(E)={e['err'][p]:.4f} "
                      f"err*(E)={e['err_star'][p]:.4f} err(H)={h['err'][p]:.4f} "
                      f"err*(H)={h['err_star'][p]:.4f}")
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
