"""Declarative JSON run configuration.

One file describes a run: a `problem` section (model data), a `grid` section
(discretization), a `solver` section (iteration knobs), and per-command
sections (`output`, `sweep`, `longtime`, `certify`, `kernel`). Validation
collects every offending key path and reports them in a single error.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .discretization import Grid
from .errors import ConfigError
from .problem import (
    CouplingSpec,
    DataSpec,
    GaussianMixture,
    PotentialSpec,
    ProblemSpec,
    TerminalCostSpec,
)
from .solver import SolverConfig

_SOLVER_DEFAULTS = dict(
    damping=0.5,
    tol=1e-8,
    max_iter=200,
    d_cap=1e6,
    time_scheme="implicit_euler",
    initial_guess="heat_flow",
)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError([str(path)], f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError([str(path)], f"config file is not valid JSON: {exc}")


class _Checker:
    """Accumulates offending key paths while reading a nested dict."""

    def __init__(self, root: dict):
        self.root = root
        self.bad: list[str] = []

    def get(self, path: str, default=None, required: bool = False):
        node: Any = self.root
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if required:
                    self.bad.append(path)
                return default
            node = node[part]
        return node

    def number(self, path: str, default=None, minimum=None, strict_min=None, required=False):
        val = self.get(path, default, required)
        if val is None:
            return default
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            self.bad.append(path)
            return default
        if minimum is not None and val < minimum:
            self.bad.append(path)
            return default
        if strict_min is not None and val <= strict_min:
            self.bad.append(path)
            return default
        return float(val)

    def integer(self, path: str, default=None, minimum=None, required=False):
        val = self.get(path, default, required)
        if val is None:
            return default
        if isinstance(val, bool) or not isinstance(val, int):
            self.bad.append(path)
            return default
        if minimum is not None and val < minimum:
            self.bad.append(path)
            return default
        return int(val)

    def choice(self, path: str, options, default=None, required=False):
        val = self.get(path, default, required)
        if val is None:
            return default
        if val not in options:
            self.bad.append(path)
            return default
        return val

    def number_list(self, path: str, required=False, minimum=None, ascending=False):
        val = self.get(path, None, required)
        if val is None:
            return None
        ok = isinstance(val, list) and len(val) > 0
        if ok:
            for x in val:
                if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                    ok = False
                    break
                if minimum is not None and x < minimum:
                    ok = False
                    break
        if ok and ascending and any(b <= a for a, b in zip(val, val[1:])):
            ok = False
        if not ok:
            self.bad.append(path)
            return None
        return [float(x) for x in val]

    def raise_if_bad(self):
        if self.bad:
            raise ConfigError(sorted(set(self.bad)))


def _mixture_from(chk: _Checker, base: str, dim: int) -> GaussianMixture | None:
    weights = chk.number_list(f"{base}.weights", required=True, minimum=0.0)
    stds = chk.number_list(f"{base}.stds", required=True)
    means_raw = chk.get(f"{base}.means", required=True)
    means = None
    if isinstance(means_raw, list) and means_raw:
        try:
            means = [
                tuple(float(c) for c in (m if isinstance(m, list) else [m]))
                for m in means_raw
            ]
        except (TypeError, ValueError):
            means = None
        if means is not None and any(len(m) != dim for m in means):
            means = None
    if means is None:
        chk.bad.append(f"{base}.means")
    if weights is None or stds is None or means is None:
        return None
    if not (len(weights) == len(stds) == len(means)):
        chk.bad.append(base)
        return None
    if any(w <= 0 for w in weights) or any(s <= 0 for s in stds):
        chk.bad.append(base)
        return None
    return GaussianMixture(weights=tuple(weights), means=tuple(means), stds=tuple(stds))


def _potential_from(chk: _Checker, dim: int) -> PotentialSpec:
    family = chk.choice(
        "problem.potential.family", PotentialSpec._FAMILIES, default="zero"
    )
    if family in (None, "zero"):
        return PotentialSpec()
    if family == "user_table":
        table = chk.get("problem.potential.table", required=True)
        if not isinstance(table, dict) or not {"values", "gradient", "laplacian"} <= set(table):
            chk.bad.append("problem.potential.table")
            return PotentialSpec()
        return PotentialSpec(family="user_table", table=table)
    amplitude = chk.number("problem.potential.amplitude", default=0.0)
    width = chk.number("problem.potential.width", default=1.0, strict_min=0.0)
    center = chk.get("problem.potential.center", [0.0] * dim)
    if not isinstance(center, list) or len(center) != dim:
        chk.bad.append("problem.potential.center")
        center = [0.0] * dim
    return PotentialSpec(
        family=family,
        amplitude=amplitude if amplitude is not None else 0.0,
        width=width if width is not None else 1.0,
        center=tuple(float(c) for c in center),
    )


def _terminal_from(chk: _Checker, dim: int) -> TerminalCostSpec:
    family = chk.choice(
        "problem.terminal_cost.family", TerminalCostSpec._FAMILIES, default="zero"
    )
    if family in (None, "zero"):
        return TerminalCostSpec()
    amplitude = chk.number("problem.terminal_cost.amplitude", default=0.0)
    width = chk.number("problem.terminal_cost.width", default=1.0, strict_min=0.0)
    center = chk.get("problem.terminal_cost.center", [0.0] * dim)
    if not isinstance(center, list) or len(center) != dim:
        chk.bad.append("problem.terminal_cost.center")
        center = [0.0] * dim
    return TerminalCostSpec(
        family=family,
        amplitude=amplitude if amplitude is not None else 0.0,
        width=width if width is not None else 1.0,
        center=tuple(float(c) for c in center),
    )


def build_problem(cfg: dict, chk: _Checker | None = None) -> ProblemSpec | None:
    own = chk is None
    if own:
        chk = _Checker(cfg)
    dim = chk.choice("problem.dim", (1, 2), default=1)
    horizon = chk.number("problem.horizon", required=True, strict_min=0.0)
    sigma = chk.number("problem.sigma", required=True, minimum=0.0)
    alpha = chk.number("problem.alpha", required=True, strict_min=0.0)
    mixture = _mixture_from(chk, "problem.initial_density", dim or 1)
    potential = _potential_from(chk, dim or 1)
    terminal = _terminal_from(chk, dim or 1)
    if own:
        chk.raise_if_bad()
    if chk.bad or mixture is None or horizon is None:
        return None
    return ProblemSpec(
        dim=dim,
        horizon=horizon,
        coupling=CouplingSpec(sigma=sigma, alpha=alpha),
        potential=potential,
        data=DataSpec(m0=mixture, terminal_cost=terminal),
    )


def build_grid(cfg: dict, horizon: float, chk: _Checker | None = None) -> Grid | None:
    own = chk is None
    if own:
        chk = _Checker(cfg)
    dim = chk.choice("problem.dim", (1, 2), default=1)
    half_width = chk.number("grid.half_width", default=12.0, strict_min=0.0)
    nx = chk.integer("grid.nx", required=True, minimum=3)
    nt = chk.integer("grid.nt", required=True, minimum=1)
    if nx is not None and nx % 2 == 0:
        chk.bad.append("grid.nx")
        nx = None
    if own:
        chk.raise_if_bad()
    if chk.bad or nx is None or nt is None:
        return None
    return Grid(dim=dim, half_width=half_width, nx=nx, nt=nt, horizon=horizon)


def build_solver(cfg: dict, chk: _Checker | None = None) -> SolverConfig | None:
    own = chk is None
    if own:
        chk = _Checker(cfg)
    damping = chk.number("solver.damping", default=_SOLVER_DEFAULTS["damping"], strict_min=0.0)
    if damping is not None and damping > 1.0:
        chk.bad.append("solver.damping")
        damping = None
    tol = chk.number("solver.tol", default=_SOLVER_DEFAULTS["tol"], strict_min=0.0)
    max_iter = chk.integer("solver.max_iter", default=_SOLVER_DEFAULTS["max_iter"], minimum=1)
    d_cap = chk.number("solver.d_cap", default=_SOLVER_DEFAULTS["d_cap"], strict_min=0.0)
    scheme = chk.choice(
        "solver.time_scheme",
        ("implicit_euler", "crank_nicolson"),
        default=_SOLVER_DEFAULTS["time_scheme"],
    )
    guess = chk.choice(
        "solver.initial_guess",
        ("heat_flow", "frozen"),
        default=_SOLVER_DEFAULTS["initial_guess"],
    )
    if own:
        chk.raise_if_bad()
    if chk.bad or damping is None:
        return None
    return SolverConfig(
        damping=damping,
        tol=tol,
        max_iter=max_iter,
        d_cap=d_cap,
        time_scheme=scheme,
        initial_guess=guess,
    )


def build_mixture(cfg: dict, base: str, dim: int) -> GaussianMixture:
    """Parse a Gaussian mixture out of an arbitrary config path."""
    chk = _Checker(cfg)
    mixture = _mixture_from(chk, base, dim)
    chk.raise_if_bad()
    return mixture


def build_run(cfg: dict) -> tuple[ProblemSpec, Grid, SolverConfig]:
    """Validate and build everything a single solve needs, in one pass."""
    chk = _Checker(cfg)
    problem = build_problem(cfg, chk)
    horizon = problem.horizon if problem is not None else 1.0
    grid = build_grid(cfg, horizon, chk)
    solver = build_solver(cfg, chk)
    chk.raise_if_bad()
    return problem, grid, solver
