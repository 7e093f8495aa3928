"""Command-line front end: solve, simulate, verify, sweep.

Every run materializes into its own artifact directory named
<command>-<config_hash>, containing CSV/JSON outputs plus a manifest that
records the resolved config, seeds, tool versions, and file hashes. Exit
codes: 0 success, 1 verification failure, 2 usage or config error,
3 flagged non-convergence (artifacts still written).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

import click
import numpy as np

from . import __version__, backend
from .config import ConfigError, RunConfig, config_hash, parse_config
from .simulate import (
    ConstantPolicy,
    TablePolicy,
    estimate_objective,
    path_seeds,
    simulate_path,
)
from .solver import Grid, PolicyField, build_grid, howard_solve
from .verify import _field_at, run_suite

_OUT_ENV = "HWMRUIN_OUT"


def _fmt(v: float) -> str:
    return repr(float(v))


def _echo(ctx, msg: str):
    if not ctx.obj.get("quiet"):
        click.echo(msg)


def _fail(msg: str, code: int):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_config(path: str) -> RunConfig:
    try:
        return parse_config(path)
    except ConfigError as e:
        text = None
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError:
            pass
        _fail(e.render(path, text), 2)


def _out_dir(cfg: RunConfig, out_flag: str | None, command: str) -> str:
    base = os.environ.get(_OUT_ENV) or out_flag or cfg["run"]["out_dir"] or "runs"
    d = os.path.join(base, f"{command}-{config_hash(cfg)}")
    os.makedirs(d, exist_ok=True)
    return d


def _effective_threads(cfg: RunConfig, threads_flag: int | None) -> int:
    n = threads_flag if threads_flag is not None else cfg["run"]["threads"]
    if n < 1:
        _fail("option --threads must be >= 1", 2)
    return backend.set_worker_threads(n)


def _write_json(path: str, obj: dict):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _write_manifest(outdir: str, cfg: RunConfig, command: str, t0_iso: str,
                    wall: float, threads: int):
    files = []
    for name in sorted(os.listdir(outdir)):
        if name == "manifest.json":
            continue
        full = os.path.join(outdir, name)
        h = hashlib.sha256(open(full, "rb").read()).hexdigest()
        files.append({"name": name, "sha256": h, "bytes": os.path.getsize(full)})
    manifest = {
        "schema_version": 1,
        "command": command,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "numba_version": backend.numba_version(),
        "backend": backend.backend_name(),
        "threads": threads,
        "config_hash": config_hash(cfg),
        "config": cfg.canonical(),
        "seeds": {"master": cfg["sim"]["seed"]},
        "created_utc": t0_iso,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "wall_seconds": wall,
        "files": files,
    }
    _write_json(os.path.join(outdir, "manifest.json"), manifest)


def _write_field_csv(path: str, grid: Grid, field_arr: np.ndarray, pol: PolicyField):
    with open(path, "w") as fh:
        fh.write("x,y1,y2,value,pi1,pi2,theta1,theta2\n")
        for i, xv in enumerate(grid.x):
            for j1, y1v in enumerate(grid.y1):
                for j2, y2v in enumerate(grid.y2):
                    fh.write(",".join((
                        _fmt(xv), _fmt(y1v), _fmt(y2v),
                        _fmt(field_arr[i, j1, j2]),
                        _fmt(pol.pi[i, j1, j2, 0]), _fmt(pol.pi[i, j1, j2, 1]),
                        _fmt(pol.theta[i, j1, j2, 0]), _fmt(pol.theta[i, j1, j2, 1]),
                    )) + "\n")


def _write_slice_csv(path: str, grid: Grid, field_arr: np.ndarray, j2: int = 0):
    with open(path, "w") as fh:
        fh.write("x,y1,value\n")
        for i, xv in enumerate(grid.x):
            for j1, y1v in enumerate(grid.y1):
                fh.write(f"{_fmt(xv)},{_fmt(y1v)},{_fmt(field_arr[i, j1, j2])}\n")


def _read_policy_csv(path: str, cfg: RunConfig) -> PolicyField:
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "x,y1,y2,value,pi1,pi2,theta1,theta2":
                raise ValueError(f"unexpected header {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as e:
        _fail(f"cannot read policy file: {e}", 2)
    except ValueError as e:
        _fail(f"corrupt policy file {path}: {e}", 2)
    if data.shape[1] != 8:
        _fail(f"corrupt policy file {path}: {data.shape[1]} columns, expected 8", 2)
    x = np.unique(data[:, 0])
    y1 = np.unique(data[:, 1])
    y2 = np.unique(data[:, 2])
    if data.shape[0] != x.size * y1.size * y2.size:
        _fail(
            f"corrupt policy file {path}: {data.shape[0]} rows, expected "
            f"{x.size}*{y1.size}*{y2.size} grid", 2,
        )
    order = np.lexsort((data[:, 2], data[:, 1], data[:, 0]))
    data = data[order]
    shape = (x.size, y1.size, y2.size)
    pi = np.stack(
        [data[:, 4].reshape(shape), data[:, 5].reshape(shape)], axis=-1
    )
    theta = np.stack(
        [data[:, 6].reshape(shape), data[:, 7].reshape(shape)], axis=-1
    )
    return PolicyField(
        grid=Grid(x=x, y1=y1, y2=y2), pi=pi, theta=theta,
        pi_set=cfg.pi_set(), theta_set=cfg.theta_set(),
    )


@click.group()
@click.option("--quiet", is_flag=True, help="Suppress progress output.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, quiet):
    """Robust ruin-minimization solver and simulator."""
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet


_config_opt = click.option(
    "--config", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="INI run configuration.",
)
_out_opt = click.option("--out", "out_flag", default=None, help="Artifact base directory.")
_threads_opt = click.option("--threads", type=int, default=None, help="Worker cap.")


@main.command()
@_config_opt
@_out_opt
@_threads_opt
@click.pass_context
def solve(ctx, config_path, out_flag, threads):
    """Solve the HJB system and dump field, policy, and report."""
    cfg = _load_config(config_path)
    nthreads = _effective_threads(cfg, threads)
    outdir = _out_dir(cfg, out_flag, "solve")
    t0_iso = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    p = cfg.model_params()
    sol = howard_solve(p, cfg.solver_config())
    _write_field_csv(os.path.join(outdir, "field.csv"), sol.grid, sol.field, sol.policy)
    _write_slice_csv(os.path.join(outdir, "slice.csv"), sol.grid, sol.field)
    _write_json(os.path.join(outdir, "report.json"), sol.report.to_json_dict())
    _write_manifest(outdir, cfg, "solve", t0_iso, time.perf_counter() - t0, nthreads)
    rep = sol.report
    _echo(ctx, f"solve: converged={rep.converged} iterations={rep.iterations} "
               f"residual={rep.residual_interior:.3g} -> {outdir}")
    if not rep.converged:
        _echo(ctx, "solve: flagged non-convergence, artifacts written")
        sys.exit(3)


@main.command()
@_config_opt
@_out_opt
@_threads_opt
@click.pass_context
def simulate(ctx, config_path, out_flag, threads):
    """Monte Carlo objective estimate under a constant or solved policy."""
    cfg = _load_config(config_path)
    nthreads = _effective_threads(cfg, threads)
    sim = cfg["sim"]
    if sim["x0"] is None:
        _fail(f"{config_path}: missing required key 'x0' in section [sim] "
              "(needed by simulate)", 2)
    p = cfg.model_params()
    if sim["policy"] == "table":
        if not sim["policy_csv"]:
            _fail(f"{config_path}: key 'policy_csv' in section [sim] is required "
                  "when policy = table", 2)
        policy = TablePolicy.from_solution(_read_policy_csv(sim["policy_csv"], cfg))
    else:
        policy = ConstantPolicy(sim["pi_const"], sim["theta_const"])
    outdir = _out_dir(cfg, out_flag, "simulate")
    t0_iso = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    simcfg = cfg.sim_config(threads=nthreads)
    est = estimate_objective(sim["x0"], sim["y0"], policy, p, simcfg)
    _write_json(os.path.join(outdir, "estimate.json"), {
        "mean": est.value,
        "stderr": est.stderr,
        "n": est.n_paths,
        "truncation_fraction": est.n_truncated / est.n_paths,
        "ruin_fraction": est.n_ruined / est.n_paths,
        "default_fraction": est.n_defaulted / est.n_paths,
        "mean_penalty": est.mean_penalty,
        "backend": est.backend,
    })
    if sim["store_trajectories"]:
        seeds = path_seeds(simcfg.seed, simcfg.n_paths)[: sim["n_store"]]
        for k, s in enumerate(seeds):
            tr = simulate_path(sim["x0"], sim["y0"], policy, p, simcfg, int(s))
            with open(os.path.join(outdir, f"trajectory_{k:03d}.csv"), "w") as fh:
                fh.write("t,x,y1,y2,m1,m2,penalty,status\n")
                for t, x, y1, y2, m1, m2, pen, st in tr.rows():
                    fh.write(f"{_fmt(t)},{_fmt(x)},{_fmt(y1)},{_fmt(y2)},"
                             f"{_fmt(m1)},{_fmt(m2)},{_fmt(pen)},{st}\n")
    _write_manifest(outdir, cfg, "simulate", t0_iso, time.perf_counter() - t0, nthreads)
    _echo(ctx, f"simulate: mean={est.value:.6f} stderr={est.stderr:.2g} "
               f"n={est.n_paths} -> {outdir}")


@main.command()
@_config_opt
@_out_opt
@_threads_opt
@click.pass_context
def verify(ctx, config_path, out_flag, threads):
    """Run the check suite; exit 1 if any check fails."""
    cfg = _load_config(config_path)
    nthreads = _effective_threads(cfg, threads)
    outdir = _out_dir(cfg, out_flag, "verify")
    t0_iso = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    v = cfg["verify"]
    try:
        rep = run_suite(
            cfg.model_params(), cfg.solver_config(), cfg.sim_config(threads=nthreads),
            suite=v["suite"], c_disc=v["c_disc"], tol_scale=v["tol"],
            probes=v["probes"],
        )
    except ValueError as e:
        _fail(f"{config_path}: {e}", 2)
    _write_json(os.path.join(outdir, "verify.json"), rep.to_json_dict())
    table = rep.text_table()
    with open(os.path.join(outdir, "verify.txt"), "w") as fh:
        fh.write(table + "\n")
    _write_manifest(outdir, cfg, "verify", t0_iso, time.perf_counter() - t0, nthreads)
    _echo(ctx, table)
    if not rep.all_passed:
        click.echo("verify: FAILED " + ", ".join(rep.failing()), err=True)
        sys.exit(1)


@main.command()
@_config_opt
@_out_opt
@_threads_opt
@click.pass_context
def sweep(ctx, config_path, out_flag, threads):
    """Solve along a parameter axis and tabulate probe values."""
    cfg = _load_config(config_path)
    nthreads = _effective_threads(cfg, threads)
    sw = cfg["sweep"]
    raw = sw["values"].strip()
    if not raw:
        _fail(f"{config_path}: key 'values' in section [sweep] is empty", 2)
    try:
        values = [float(s) for s in raw.replace(",", " ").split()]
    except ValueError:
        _fail(f"{config_path}: key 'values' in section [sweep] must be numbers", 2)
    param = sw["parameter"]
    outdir = _out_dir(cfg, out_flag, "sweep")
    t0_iso = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    p0 = cfg.model_params()
    scfg = cfg.solver_config()

    probes = list(sw["probes"])
    if not probes:
        g = build_grid(p0, scfg.nx, scfg.ny1, scfg.ny2, scfg.resolve_y_max(p0))
        j1, j2 = g.y1.size // 4, g.y2.size // 4
        probes = [
            (float(g.x[g.x.size // 4]), float(g.y1[j1]), float(g.y2[j2])),
            (float(g.x[g.x.size // 2]), float(g.y1[j1]), float(g.y2[j2])),
            (float(g.x[3 * g.x.size // 4]), float(g.y1[j1]), float(g.y2[j2])),
        ]

    rows = []
    flagged = False
    prev = None
    for v in values:
        if param == "epsilon":
            pv = dataclasses.replace(p0, eps=v)
        else:
            pv = dataclasses.replace(p0, q=np.array([v, v]))
        sol = howard_solve(pv, scfg)
        vals = [_field_at(sol, *pr) for pr in probes]
        rep = sol.report
        bmax = max(rep.residual_b1, rep.residual_b2, rep.residual_corner,
                   rep.residual_ymax, rep.residual_dirichlet)
        monotone = prev is None or all(a >= b - 1e-3 for a, b in zip(vals, prev))
        rows.append((v, vals, rep.iterations, rep.residual_interior, bmax, monotone))
        flagged = flagged or not rep.converged
        prev = vals

    with open(os.path.join(outdir, "sweep.csv"), "w") as fh:
        fh.write("parameter,value,probe1,probe2,probe3,iterations,"
                 "residual_interior,residual_boundary,monotone\n")
        for v, vals, iters, ri, rb, mono in rows:
            fh.write(",".join((
                param, _fmt(v), _fmt(vals[0]), _fmt(vals[1]), _fmt(vals[2]),
                str(iters), _fmt(ri), _fmt(rb), "true" if mono else "false",
            )) + "\n")
    _write_manifest(outdir, cfg, "sweep", t0_iso, time.perf_counter() - t0, nthreads)
    _echo(ctx, f"sweep: {param} over {len(values)} values -> {outdir}")
    if flagged:
        _echo(ctx, "sweep: flagged non-convergence in at least one solve")
        sys.exit(3)


if __name__ == "__main__":
    main()
