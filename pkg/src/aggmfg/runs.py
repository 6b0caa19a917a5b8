"""Command-level runs: single solve, phase sweep, long-time series,
certificates, and the heat-kernel exponent table.

Every command writes deterministic artifacts: CSV numbers at 17 significant
digits, JSON with sorted keys, and no wall-clock content inside any file
(directory names may carry a timestamp; file bytes never do).
"""

from __future__ import annotations

import copy
import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .diagnostics import (
    check_moment_identity,
    compute_apriori,
    compute_energy,
    compute_nonexistence_certificate,
    compute_planning_certificate,
    e0_terms,
)
from .discretization import Grid, write_field_csv, write_grid_json
from .errors import ConfigError, KernelNormDivergenceError
from .parabolic import (
    HeatKernelQuery,
    heat_kernel_spacetime_norm,
)
from .problem import check_structural_conditions
from .solver import solve

DEFAULT_KERNEL_QUERIES = (
    {"dim": 1, "exponent": 2.0, "t": 1.0, "kind": "kernel"},
    {"dim": 1, "exponent": 3.0, "t": 1.0, "kind": "kernel"},
    {"dim": 2, "exponent": 3.0, "t": 1.0, "kind": "kernel"},
    {"dim": 1, "exponent": 1.0, "t": 1.0, "kind": "gradient"},
    {"dim": 1, "exponent": 1.2, "t": 1.0, "kind": "gradient"},
)


def _g17(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _clean(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to text."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def prepare_out_dir(cfg: dict, command: str, out_dir=None) -> str:
    """Timestamped directory under output.directory unless one is given."""
    if out_dir is None:
        section = cfg.get("output", {})
        root = section.get("directory", "runs") if isinstance(section, dict) else "runs"
        label = section.get("label", "") if isinstance(section, dict) else ""
        stem = f"{command}-{label}" if label else command
        stamp = time.strftime("%Y%m%d-%H%M%S")
        candidate = os.path.join(root, f"{stem}-{stamp}")
        k = 1
        out_dir = candidate
        while os.path.exists(out_dir):
            out_dir = f"{candidate}-{k}"
            k += 1
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _snapshot_indices(cfg: dict, nt: int) -> list[int]:
    section = cfg.get("output", {})
    count = section.get("snapshots", 5) if isinstance(section, dict) else 5
    if isinstance(count, bool) or not isinstance(count, int) or count < 2:
        raise ConfigError(["output.snapshots"])
    return sorted(set(np.linspace(0, nt, min(count, nt + 1)).round().astype(int).tolist()))


def run_single(cfg: dict, out_dir=None) -> dict:
    """Solve one problem and write the full diagnostic record."""
    problem, grid, solver_cfg = cfgmod.build_run(cfg)
    out_dir = prepare_out_dir(cfg, "solve", out_dir)
    snap = _snapshot_indices(cfg, grid.nt)

    conditions = check_structural_conditions(problem, grid)
    certificate = compute_nonexistence_certificate(problem, grid)
    outcome = solve(problem, grid, solver_cfg)

    reports_dir = os.path.join(out_dir, "reports")
    fields_dir = os.path.join(out_dir, "fields")
    os.makedirs(reports_dir, exist_ok=True)
    os.makedirs(fields_dir, exist_ok=True)

    write_grid_json(os.path.join(fields_dir, "grid.json"), grid)
    _write_csv(
        os.path.join(reports_dir, "residuals.csv"),
        ["iteration", "residual", "d_value"],
        [
            [str(i + 1), _g17(r), _g17(d)]
            for i, (r, d) in enumerate(zip(outcome.residual_history, outcome.d_history))
        ],
    )

    energy = moments = apriori = None
    if outcome.converged:
        for idx in snap:
            tag = f"{idx:05d}"
            write_field_csv(os.path.join(fields_dir, f"m_{tag}.csv"), grid, outcome.m.values[idx])
            write_field_csv(os.path.join(fields_dir, f"u_{tag}.csv"), grid, outcome.u.values[idx])
            write_field_csv(os.path.join(fields_dir, f"w_{tag}.csv"), grid, outcome.w.values[idx])
        energy = compute_energy(outcome.u, outcome.m, problem, grid)
        moments = check_moment_identity(outcome.u, outcome.m, problem, grid, energy=energy)
        apriori = compute_apriori(outcome.m, problem, grid)
        _write_csv(
            os.path.join(reports_dir, "energy.csv"),
            ["time", "total", "cross", "kinetic", "coupling", "potential"],
            [
                [_g17(energy.times[j]), _g17(energy.total[j]), _g17(energy.cross[j]),
                 _g17(energy.kinetic[j]), _g17(energy.coupling[j]), _g17(energy.potential[j])]
                for j in range(len(energy.times))
            ],
        )
        _write_csv(
            os.path.join(reports_dir, "moments.csv"),
            ["time", "mass", "tail_mass", "abs_moment", "h"],
            [
                [_g17(moments.times[j]), _g17(moments.mass[j]), _g17(moments.tail_mass[j]),
                 _g17(moments.abs_moment[j]), _g17(moments.h[j])]
                for j in range(len(moments.times))
            ],
        )
        _write_csv(
            os.path.join(reports_dir, "moment_residuals.csv"),
            ["time", "hprime", "rhs_first", "hsecond", "rhs_second"],
            [
                [_g17(moments.times[j + 1]), _g17(moments.hprime[j]), _g17(moments.rhs_first[j]),
                 _g17(moments.hsecond[j]), _g17(moments.rhs_second[j])]
                for j in range(len(moments.hprime))
            ],
        )

    metadata = {
        "command": "solve",
        "config": cfg,
        "verdict": outcome.verdict,
        "iterations": outcome.iterations,
        "note": outcome.note,
        "residual_final": outcome.residual_history[-1] if outcome.residual_history else None,
        "d_final": outcome.d_final,
        "conditions": conditions.as_dict(),
        "certificate": certificate.as_dict(),
        "certificate_applies": certificate.applies_at(problem.horizon),
        "consistency": None,
        "energy": None,
        "moments": None,
        "apriori": None,
        "snapshot_indices": snap,
        "snapshot_times": [grid.times[i] for i in snap],
    }
    if outcome.converged:
        metadata["consistency"] = {
            "hjb_residual": outcome.hjb_residual,
            "fp_residual": outcome.fp_residual,
            "resolve_residual": outcome.resolve_residual,
        }
        metadata["energy"] = {
            "initial": energy.total[0],
            "final": energy.total[-1],
            "drift": energy.drift,
        }
        metadata["moments"] = {
            "r1": moments.r1,
            "r2": moments.r2,
            "mass_step_drift": moments.mass_step_drift,
            "tail_mass_max": float(np.max(moments.tail_mass)),
            "min_hsecond": moments.min_hsecond,
        }
        metadata["apriori"] = {
            "d_value": apriori.d_value,
            "exponent_q": apriori.exponent_q,
            "exponent_delta": apriori.exponent_delta,
            "beta": apriori.beta,
            "growth_a": apriori.growth_a,
        }
    _write_json(os.path.join(out_dir, "metadata.json"), metadata)

    return {
        "out_dir": out_dir,
        "verdict": outcome.verdict,
        "iterations": outcome.iterations,
        "d_final": outcome.d_final,
    }


# --- phase sweep -----------------------------------------------------------

def _sweep_sections(cfg: dict):
    chk = cfgmod._Checker(cfg)
    sigma_grid = chk.number_list("sweep.sigma_grid", required=True, minimum=0.0, ascending=True)
    horizon_grid = chk.number_list("sweep.horizon_grid", required=True, ascending=True)
    if horizon_grid is not None and any(t <= 0 for t in horizon_grid):
        chk.bad.append("sweep.horizon_grid")
    nx = chk.integer("sweep.nx", default=65, minimum=3)
    if nx is not None and nx % 2 == 0:
        chk.bad.append("sweep.nx")
    nt_per_unit = chk.number("sweep.nt_per_unit", default=60.0, strict_min=0.0)
    confirm_rounds = chk.integer("sweep.confirm_rounds", default=2, minimum=0)
    workers = chk.integer("sweep.workers", default=1, minimum=1)
    half_width = chk.number("grid.half_width", default=12.0, strict_min=0.0)
    chk.raise_if_bad()
    return sigma_grid, horizon_grid, nx, nt_per_unit, confirm_rounds, workers, half_width


def _cell_grid(dim, half_width, nx, nt_per_unit, horizon, level) -> Grid:
    factor = 2 ** level
    nt = max(1, math.ceil(nt_per_unit * horizon))
    return Grid(
        dim=dim,
        half_width=half_width,
        nx=factor * (nx - 1) + 1,
        nt=factor * nt,
        horizon=horizon,
    )


def _sweep_cell(job: dict) -> dict:
    """One (sigma, horizon) cell, including refinement confirmation.

    A diverged base run is only labeled non-convergent after it stays
    diverged on refined grids; the converse contradiction (converged where
    a certificate rules solutions out) is confirmed the same way before
    the flag is written.
    """
    cfg = copy.deepcopy(job["config"])
    cfg.setdefault("problem", {})
    cfg["problem"]["sigma"] = job["sigma"]
    cfg["problem"]["horizon"] = job["horizon"]
    problem = cfgmod.build_problem(cfg)
    solver_cfg = cfgmod.build_solver(cfg)

    grid0 = _cell_grid(problem.dim, job["half_width"], job["nx"],
                       job["nt_per_unit"], job["horizon"], 0)
    certificate = compute_nonexistence_certificate(problem, grid0)
    applies = certificate.applies_at(job["horizon"])

    runs = []
    outcome = solve(problem, grid0, solver_cfg)
    runs.append({
        "level": 0, "nx": grid0.nx, "nt": grid0.nt,
        "verdict": outcome.verdict, "iterations": outcome.iterations,
        "d_final": outcome.d_final,
    })
    needs_confirmation = (
        (not outcome.converged and not applies)
        or (outcome.converged and applies)
    )
    if needs_confirmation:
        first_converged = outcome.converged
        for level in range(1, job["confirm_rounds"] + 1):
            grid_l = _cell_grid(problem.dim, job["half_width"], job["nx"],
                                job["nt_per_unit"], job["horizon"], level)
            outcome = solve(problem, grid_l, solver_cfg)
            runs.append({
                "level": level, "nx": grid_l.nx, "nt": grid_l.nt,
                "verdict": outcome.verdict, "iterations": outcome.iterations,
                "d_final": outcome.d_final,
            })
            if outcome.converged != first_converged:
                break

    deciding = runs[-1]
    empirical = deciding["verdict"] == "converged"
    if applies and empirical:
        verdict = "certified_nonexistent_but_converged"
    elif applies:
        verdict = "certified_nonexistent_and_non_convergent"
    elif empirical:
        verdict = "converged"
    else:
        verdict = "non_convergent"
    return {
        "sigma": job["sigma"],
        "horizon": job["horizon"],
        "verdict": verdict,
        "t_star": certificate.t_star,
        "e0": certificate.e0,
        "d_final": deciding["d_final"],
        "iterations": deciding["iterations"],
        "refine_level": deciding["level"],
        "runs": runs,
    }


def run_sweep(cfg: dict, out_dir=None) -> dict:
    """Phase table over a (sigma, horizon) grid, cells independent."""
    sigma_grid, horizon_grid, nx, nt_per_unit, confirm_rounds, workers, half_width = (
        _sweep_sections(cfg)
    )
    # validate the problem template once before paying for any cell
    template = copy.deepcopy(cfg)
    template.setdefault("problem", {})
    template["problem"]["sigma"] = sigma_grid[0]
    template["problem"]["horizon"] = horizon_grid[0]
    cfgmod.build_problem(template)
    cfgmod.build_solver(template)
    out_dir = prepare_out_dir(cfg, "sweep", out_dir)

    jobs = [
        {
            "config": cfg, "sigma": s, "horizon": t, "nx": nx,
            "nt_per_unit": nt_per_unit, "confirm_rounds": confirm_rounds,
            "half_width": half_width,
        }
        for s in sigma_grid
        for t in horizon_grid
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_sweep_cell, jobs))
    else:
        cells = [_sweep_cell(job) for job in jobs]
    cells.sort(key=lambda c: (c["sigma"], c["horizon"]))

    _write_csv(
        os.path.join(out_dir, "table.csv"),
        ["sigma", "T", "verdict", "T_star", "D_final", "iterations"],
        [
            [_g17(c["sigma"]), _g17(c["horizon"]), c["verdict"],
             _g17(c["t_star"]), _g17(c["d_final"]), str(c["iterations"])]
            for c in cells
        ],
    )

    by_sigma = {}
    for c in cells:
        by_sigma.setdefault(c["sigma"], []).append(c)
    _write_csv(
        os.path.join(out_dir, "boundary.csv"),
        ["sigma", "e0", "T_star"],
        [
            [_g17(s), _g17(group[0]["e0"]), _g17(group[0]["t_star"])]
            for s, group in sorted(by_sigma.items())
        ],
    )

    converged_columns = [
        s for s, group in sorted(by_sigma.items())
        if all(c["verdict"] == "converged" for c in group)
    ]
    threshold = max(converged_columns) if converged_columns else 0.0
    certified_horizons = [
        c["horizon"] for c in cells if c["verdict"].startswith("certified")
    ]
    metadata = {
        "command": "sweep",
        "config": cfg,
        "empirical_sigma_threshold": threshold,
        "smallest_certified_horizon": min(certified_horizons) if certified_horizons else None,
        "confirm_rounds": confirm_rounds,
        "cells": cells,
    }
    _write_json(os.path.join(out_dir, "metadata.json"), metadata)
    return {"out_dir": out_dir, "cells": cells, "empirical_sigma_threshold": threshold}


# --- long-time series ------------------------------------------------------

def run_longtime(cfg: dict, out_dir=None) -> dict:
    """D(T) series for growing horizons with the rescaled diagnostic D(T)/T."""
    chk = cfgmod._Checker(cfg)
    horizons = chk.number_list("longtime.horizons", required=True, ascending=True)
    if horizons is not None and any(t <= 0 for t in horizons):
        chk.bad.append("longtime.horizons")
    nx = chk.integer("longtime.nx", default=129, minimum=3)
    if nx is not None and nx % 2 == 0:
        chk.bad.append("longtime.nx")
    nt_per_unit = chk.number("longtime.nt_per_unit", default=100.0, strict_min=0.0)
    half_width = chk.number("grid.half_width", default=12.0, strict_min=0.0)
    family = chk.get("problem.potential.family", "zero")
    if family != "zero":
        chk.bad.append("problem.potential.family")
    chk.raise_if_bad()

    rows = []
    for horizon in horizons:
        cell_cfg = copy.deepcopy(cfg)
        cell_cfg.setdefault("problem", {})
        cell_cfg["problem"]["horizon"] = horizon
        problem = cfgmod.build_problem(cell_cfg)
        solver_cfg = cfgmod.build_solver(cell_cfg)
        grid = Grid(
            dim=problem.dim,
            half_width=half_width,
            nx=nx,
            nt=max(1, math.ceil(nt_per_unit * horizon)),
            horizon=horizon,
        )
        outcome = solve(problem, grid, solver_cfg)
        rows.append({
            "horizon": horizon,
            "verdict": outcome.verdict,
            "d_final": outcome.d_final,
            "rescaled": outcome.d_final / horizon,
            "iterations": outcome.iterations,
        })

    out_dir = prepare_out_dir(cfg, "longtime", out_dir)
    _write_csv(
        os.path.join(out_dir, "series.csv"),
        ["T", "verdict", "D_final", "rescaled", "iterations"],
        [
            [_g17(r["horizon"]), r["verdict"], _g17(r["d_final"]),
             _g17(r["rescaled"]), str(r["iterations"])]
            for r in rows
        ],
    )
    converged = [r["d_final"] for r in rows if r["verdict"] == "converged"]
    metadata = {
        "command": "longtime",
        "config": cfg,
        "converged_count": len(converged),
        "d_ratio": (max(converged) / min(converged)) if converged and min(converged) > 0 else None,
        "series": rows,
    }
    _write_json(os.path.join(out_dir, "metadata.json"), metadata)
    return {"out_dir": out_dir, "series": rows}


# --- certificates only -----------------------------------------------------

def run_certify(cfg: dict, out_dir=None) -> dict:
    """Certificates from quadratures alone; no PDE is solved."""
    problem, grid, _ = cfgmod.build_run(cfg)
    chk = cfgmod._Checker(cfg)
    optimize_shift = chk.get("certify.optimize_shift", False)
    if not isinstance(optimize_shift, bool):
        chk.bad.append("certify.optimize_shift")
    has_terminal = chk.get("certify.terminal_density") is not None
    chk.raise_if_bad()

    certificate = compute_nonexistence_certificate(problem, grid, optimize_shift=optimize_shift)
    conditions = check_structural_conditions(problem, grid)
    fisher, coupling_term, potential_term = e0_terms(problem, grid)
    planning = None
    if has_terminal:
        terminal = cfgmod.build_mixture(cfg, "certify.terminal_density", problem.dim)
        planning = compute_planning_certificate(problem, grid, terminal)

    out_dir = prepare_out_dir(cfg, "certify", out_dir)
    payload = {
        "command": "certify",
        "config": cfg,
        "conditions": conditions.as_dict(),
        "certificate": certificate.as_dict(),
        "certificate_applies": certificate.applies_at(problem.horizon),
        "e0_terms": {
            "fisher": fisher,
            "coupling": coupling_term,
            "potential": potential_term,
        },
        "planning": planning.as_dict() if planning is not None else None,
    }
    _write_json(os.path.join(out_dir, "certificate.json"), payload)
    result = dict(payload)
    result["out_dir"] = out_dir
    return result


# --- heat-kernel exponent table --------------------------------------------

def _kernel_queries(cfg: dict) -> list[HeatKernelQuery]:
    section = cfg.get("kernel", {}) if isinstance(cfg, dict) else {}
    raw = section.get("queries") if isinstance(section, dict) else None
    if raw is None:
        raw = [dict(q) for q in DEFAULT_KERNEL_QUERIES]
    if not isinstance(raw, list) or not raw:
        raise ConfigError(["kernel.queries"])
    queries = []
    bad = []
    for i, item in enumerate(raw):
        try:
            queries.append(HeatKernelQuery(
                dim=item["dim"],
                exponent=float(item["exponent"]),
                t=float(item.get("t", 1.0)),
                kind=item.get("kind", "kernel"),
            ))
        except (KeyError, TypeError, ValueError):
            bad.append(f"kernel.queries[{i}]")
    if bad:
        raise ConfigError(bad)
    return queries


def run_kernelcheck(cfg: dict, out_dir=None) -> dict:
    """Fitted versus analytic space-time integrability exponents."""
    queries = _kernel_queries(cfg)
    rows = []
    for q in queries:
        try:
            result = heat_kernel_spacetime_norm(q)
            rows.append({
                "dim": q.dim, "exponent": q.exponent, "kind": q.kind, "t": q.t,
                "status": "fit",
                "analytic_exponent": result.analytic_exponent,
                "fitted_exponent": result.fitted_exponent,
                "value": result.value,
            })
        except KernelNormDivergenceError as exc:
            rows.append({
                "dim": q.dim, "exponent": q.exponent, "kind": q.kind, "t": q.t,
                "status": "boundary" if exc.boundary else "divergent",
                "analytic_exponent": exc.analytic_exponent,
                "fitted_exponent": None,
                "value": None,
            })

    out_dir = prepare_out_dir(cfg, "kernelcheck", out_dir)
    _write_csv(
        os.path.join(out_dir, "exponents.csv"),
        ["dim", "exponent", "kind", "t", "status",
         "analytic_exponent", "fitted_exponent", "value"],
        [
            [str(r["dim"]), _g17(r["exponent"]), r["kind"], _g17(r["t"]), r["status"],
             _g17(r["analytic_exponent"]), _g17(r["fitted_exponent"]), _g17(r["value"])]
            for r in rows
        ],
    )
    _write_json(os.path.join(out_dir, "metadata.json"), {
        "command": "kernelcheck",
        "config": cfg,
        "rows": rows,
    })
    return {"out_dir": out_dir, "rows": rows}
