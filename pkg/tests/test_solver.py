import numpy as np
import pytest

from aggmfg import (
    SolverConfig,
    hopf_cole,
    inverse_hopf_cole,
    nonexistence_horizon,
    picard_map,
    self_consistency_residual,
    solve,
)
from aggmfg.diagnostics import compute_e0
from aggmfg.discretization import Grid, integrate
from aggmfg.problem import sample_on_grid
from tests.conftest import gaussian_problem


def test_hopf_cole_roundtrip(rng):
    u = rng.standard_normal((4, 33))
    assert np.allclose(inverse_hopf_cole(hopf_cole(u)), u, atol=1e-12)


def test_inverse_hopf_cole_rejects_nonpositive():
    with pytest.raises(ValueError):
        inverse_hopf_cole(np.array([1.0, 0.0, 2.0]))


def test_picard_map_is_identity_when_decoupled(grid_1d):
    # sigma = 0 severs the feedback: the map output cannot depend on the
    # density that was fed in, so two sweeps agree bitwise
    p = gaussian_problem(sigma=0.0)
    fields = sample_on_grid(p, grid_1d)
    guess = np.tile(fields.m0, (grid_1d.nt + 1, 1))
    w1, mu1 = picard_map(guess, p, grid_1d, fields=fields)
    w2, mu2 = picard_map(mu1.values, p, grid_1d, fields=fields)
    assert np.array_equal(w1.values, w2.values)
    assert np.array_equal(mu1.values, mu2.values)


def test_solve_decoupled_single_iteration(grid_1d):
    out = solve(gaussian_problem(sigma=0.0), grid_1d, SolverConfig(damping=1.0))
    assert out.converged
    assert out.iterations <= 2
    # feedback severed: the residual is pure roundoff, not discretization
    assert out.residual_history[-1] < 1e-20


def test_solve_decoupled_self_consistency(grid_1d):
    out = solve(gaussian_problem(sigma=0.0), grid_1d, SolverConfig(damping=1.0))
    assert out.resolve_residual <= 1e-10


def test_solve_small_coupling_converges(grid_1d):
    out = solve(gaussian_problem(sigma=0.05), grid_1d, SolverConfig(damping=0.5))
    assert out.converged
    assert out.verdict == "converged"
    assert out.u is not None and out.m is not None and out.w is not None
    assert out.m.values.min() >= 0.0
    assert out.w.values.min() > 0.0
    # frozen regression: this configuration has always taken 15 sweeps
    assert out.iterations == 15


def test_solve_damping_independent_fixed_point(grid_1d):
    p = gaussian_problem(sigma=0.05)
    full = solve(p, grid_1d, SolverConfig(damping=1.0, tol=1e-10))
    half = solve(p, grid_1d, SolverConfig(damping=0.5, tol=1e-10))
    assert full.converged and half.converged
    gap = integrate(np.abs(full.m.values[-1] - half.m.values[-1]), grid_1d)
    assert gap < 1e-8


def test_solve_residuals_eventually_monotone(grid_1d):
    out = solve(gaussian_problem(sigma=0.05), grid_1d, SolverConfig(damping=0.5))
    tail = out.residual_history[3:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


def test_solve_initial_guess_policies_agree(grid_1d):
    p = gaussian_problem(sigma=0.05)
    heat = solve(p, grid_1d, SolverConfig(damping=0.5, initial_guess="heat_flow"))
    frozen = solve(p, grid_1d, SolverConfig(damping=0.5, initial_guess="frozen"))
    assert heat.converged and frozen.converged
    gap = integrate(np.abs(heat.m.values[-1] - frozen.m.values[-1]), grid_1d)
    assert gap < 1e-6


def test_solve_pde_residuals_shrink_under_refinement():
    p = gaussian_problem(sigma=0.05)
    res = []
    for nx in (65, 129, 257):
        g = Grid(dim=1, half_width=12.0, nx=nx, nt=nx - 1, horizon=1.0)
        out = solve(p, g, SolverConfig(damping=0.5, tol=1e-10))
        assert out.converged
        res.append(max(out.hjb_residual, out.fp_residual))
    assert res[2] < res[0]
    slope = np.polyfit(np.log([65, 129, 257]), np.log(res), 1)[0]
    assert slope < -0.8


def test_solve_detects_blowup():
    # far past the certified horizon: the coupling mass must run away
    sigma = 49.0
    p = gaussian_problem(sigma=sigma, alpha=2.0, horizon=1.0)
    g = Grid(dim=1, half_width=12.0, nx=129, nt=128, horizon=1.0)
    e0 = compute_e0(p, g)
    t_star = nonexistence_horizon(e0, 1.0, dim=1)
    horizon = 2.0 * t_star
    p2 = gaussian_problem(sigma=sigma, alpha=2.0, horizon=horizon)
    g2 = Grid(dim=1, half_width=12.0, nx=129, nt=max(128, int(128 * horizon)), horizon=horizon)
    out = solve(p2, g2, SolverConfig(damping=0.8, max_iter=150, d_cap=1e6))
    assert not out.converged
    assert out.verdict in ("diverged", "max_iterations")
    if out.verdict == "diverged":
        assert out.d_final > 1e6 or not np.isfinite(out.d_final)


def test_solve_iteration_budget_verdict(grid_1d):
    out = solve(gaussian_problem(sigma=0.05), grid_1d, SolverConfig(damping=0.5, tol=1e-15, max_iter=3))
    assert out.verdict == "max_iterations"
    assert out.note == "iteration budget exhausted"
    assert out.u is None


def test_solve_horizon_mismatch_raises(grid_1d):
    with pytest.raises(ValueError):
        solve(gaussian_problem(horizon=2.0), grid_1d)


def test_self_consistency_residual_matches_outcome(grid_1d):
    p = gaussian_problem(sigma=0.05)
    out = solve(p, grid_1d, SolverConfig(damping=0.5))
    hjb, fp = self_consistency_residual(out.u, out.m, p, grid_1d)
    assert hjb == out.hjb_residual
    assert fp == out.fp_residual
    assert fp < 1e-6  # damped iterate: the march residual sits near tol


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(damping=0.0)
    with pytest.raises(ValueError):
        SolverConfig(damping=1.5)
    with pytest.raises(ValueError):
        SolverConfig(tol=-1e-8)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(initial_guess="random")


def test_solve_2d_decoupled():
    g = Grid(dim=2, half_width=8.0, nx=65, nt=32, horizon=0.5)
    p = gaussian_problem(sigma=0.0, dim=2, horizon=0.5)
    out = solve(p, g, SolverConfig(damping=1.0))
    assert out.converged
    assert out.iterations <= 2
    masses = [integrate(out.m.values[n], g) for n in range(g.nt + 1)]
    assert np.abs(np.diff(masses)).max() < 1e-13


def test_solve_2d_coupled_with_potential():
    from aggmfg import PotentialSpec

    g = Grid(dim=2, half_width=8.0, nx=49, nt=24, horizon=0.5)
    well = PotentialSpec(family="gaussian_well", amplitude=-1.0, width=1.5, center=(0.0, 0.0))
    p = gaussian_problem(sigma=0.5, dim=2, horizon=0.5, potential=well)
    out = solve(p, g, SolverConfig(damping=0.5))
    assert out.converged
    assert out.m.values.min() >= 0.0
    assert out.w.values.min() > 0.0
