"""Linear parabolic marches and heat kernel reference tools.

Both PDE marches are implicit by default. The value-side equation
-w_t - Lap w = c w is stepped backward from t = T; the density-side equation
mu_t = Lap mu - div(b mu) is stepped forward in flux form with exponentially
fitted faces, which makes every step conserve the trapezoid mass exactly and
keeps the iteration matrix an M-matrix, hence mu >= 0 unconditionally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .discretization import Grid, SpaceTimeField, face_transport_coefficients
from .errors import (
    KernelNormDivergenceError,
    PositivityError,
    SchemeViolationError,
    SolverError,
)

SCHEMES = ("implicit_euler", "crank_nicolson")


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown time scheme {scheme!r}, expected one of {SCHEMES}")


# ---------------------------------------------------------------------------
# backward heat equation with zeroth order coefficient


def _diffusion_banded(nx: int, r: float) -> np.ndarray:
    """Banded form of I - r*dx^2*Lap with ghost-node Neumann rows."""
    ab = np.zeros((3, nx))
    ab[1] = 1.0 + 2.0 * r
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[0, 1] = -2.0 * r  # reflected ghost at the left boundary
    ab[2, -2] = -2.0 * r
    return ab


def _apply_diffusion(f: np.ndarray, r: float) -> np.ndarray:
    """(r*dx^2*Lap) f along axis 0, Neumann reflection, any trailing shape."""
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * (f[1] - f[0])
    out[-1] = 2.0 * (f[-2] - f[-1])
    return r * out


def solve_backward_heat(
    terminal: np.ndarray,
    coefficient: np.ndarray,
    grid: Grid,
    scheme: str = "implicit_euler",
) -> SpaceTimeField:
    """March -w_t - Lap w = c(x,t) w backward from w(T) = terminal.

    coefficient has shape (nt+1, n_nodes); the step onto time level j uses
    the coefficient slice at level j. No-flux boundaries. The result is
    strictly positive whenever the terminal slice is; a sign crossing raises
    PositivityError, which signals that dt is too large for the coefficient.
    """
    _check_scheme(scheme)
    w_T = np.asarray(terminal, dtype=float)
    c = np.asarray(coefficient, dtype=float)
    if c.shape != (grid.nt + 1, grid.n_nodes):
        raise ValueError(f"coefficient shape {c.shape} != {(grid.nt + 1, grid.n_nodes)}")
    if w_T.shape != (grid.n_nodes,):
        raise ValueError("terminal slice does not match the grid")
    dt = grid.dt
    limit = 1.0 if scheme == "implicit_euler" else 2.0
    if dt * float(c.max(initial=0.0)) >= limit:
        raise SolverError(
            "dt * max(c) >= %g: time step too large for the coefficient" % limit
        )

    w = np.empty((grid.nt + 1, grid.n_nodes))
    w[-1] = w_T
    if grid.dim == 1:
        _backward_heat_1d(w, c, grid, scheme)
    else:
        _backward_heat_2d(w, c, grid, scheme)
    return SpaceTimeField(w, grid)


def _backward_heat_1d(w: np.ndarray, c: np.ndarray, grid: Grid, scheme: str) -> None:
    dt, nx = grid.dt, grid.nx
    if scheme == "implicit_euler":
        r = dt / grid.dx**2
        base = _diffusion_banded(nx, r)
        for j in range(grid.nt - 1, -1, -1):
            ab = base.copy()
            ab[1] -= dt * c[j]
            w[j] = solve_banded((1, 1), ab, w[j + 1], check_finite=False)
            _check_positive(w[j], j)
    else:
        r = 0.5 * dt / grid.dx**2
        base = _diffusion_banded(nx, r)
        for j in range(grid.nt - 1, -1, -1):
            rhs = w[j + 1] + _apply_diffusion(w[j + 1], r) + 0.5 * dt * c[j + 1] * w[j + 1]
            ab = base.copy()
            ab[1] -= 0.5 * dt * c[j]
            w[j] = solve_banded((1, 1), ab, rhs, check_finite=False)
            _check_positive(w[j], j)


def _backward_heat_2d(w: np.ndarray, c: np.ndarray, grid: Grid, scheme: str) -> None:
    # Lie splitting: x sweep carries the zeroth order coefficient, y sweep is
    # pure diffusion. Each sweep is an M-matrix solve.
    dt, nx = grid.dt, grid.nx
    half = scheme == "crank_nicolson"
    r = (0.5 if half else 1.0) * dt / grid.dx**2
    base = _diffusion_banded(nx, r)
    for j in range(grid.nt - 1, -1, -1):
        prev = w[j + 1].reshape(nx, nx)
        cj = c[j].reshape(nx, nx)
        if half:
            cj1 = c[j + 1].reshape(nx, nx)
            rhs = prev + _apply_diffusion(prev, r) + 0.5 * dt * cj1 * prev
        else:
            rhs = prev
        star = np.empty_like(rhs)
        for k in range(nx):  # x sweep, one tridiagonal system per y column
            ab = base.copy()
            ab[1] -= (0.5 if half else 1.0) * dt * cj[:, k]
            star[:, k] = solve_banded((1, 1), ab, rhs[:, k], check_finite=False)
        if half:
            star = star + _apply_diffusion(star.T, r).T
        out = solve_banded((1, 1), base, star.T, check_finite=False).T
        w[j] = out.ravel()
        _check_positive(w[j], j)


def _check_positive(slice_: np.ndarray, level: int) -> None:
    m = float(slice_.min())
    if not m > 0.0:
        raise PositivityError(f"value field lost positivity at time level {level} (min {m:.3e})")


# ---------------------------------------------------------------------------
# forward Fokker-Planck march


def _fp_banded(b_nodes: np.ndarray, grid: Grid, dt: float) -> np.ndarray:
    """Banded form of I + dt*L where L is the fitted flux divergence."""
    dx = grid.dx
    b_face = 0.5 * (b_nodes[1:] + b_nodes[:-1])
    A, B = face_transport_coefficients(b_face * dx)
    scale = dt / (grid.axis_weights * dx)
    ab = np.zeros((3, grid.nx))
    ab[1] = 1.0
    ab[1, :-1] += scale[:-1] * A
    ab[1, 1:] += scale[1:] * B
    ab[0, 1:] = -scale[:-1] * B
    ab[2, :-1] = -scale[1:] * A
    return ab


def _apply_flux_operator(mu: np.ndarray, b_nodes: np.ndarray, grid: Grid) -> np.ndarray:
    """L mu for the same fitted flux divergence, explicit application."""
    dx = grid.dx
    b_face = 0.5 * (b_nodes[1:] + b_nodes[:-1])
    A, B = face_transport_coefficients(b_face * dx)
    flux = A * mu[:-1] - B * mu[1:]
    out = np.zeros_like(mu)
    out[:-1] += flux
    out[1:] -= flux
    return out / (grid.axis_weights * dx)


def solve_fokker_planck(
    initial: np.ndarray,
    drift: np.ndarray,
    grid: Grid,
    scheme: str = "implicit_euler",
) -> SpaceTimeField:
    """March mu_t = Lap mu - div(b mu) forward from mu(0) = initial.

    drift has shape (nt+1, dim, n_nodes); the step onto level n uses the
    drift at level n (the implicit side). Zero-flux boundaries: each step
    preserves the trapezoid mass to roundoff. Densities stay nonnegative for
    the default scheme; anything below -1e-12 raises SchemeViolationError and
    smaller undershoots are clamped to zero.
    """
    _check_scheme(scheme)
    mu0 = np.asarray(initial, dtype=float)
    b = np.asarray(drift, dtype=float)
    if b.shape != (grid.nt + 1, grid.dim, grid.n_nodes):
        raise ValueError(
            f"drift shape {b.shape} != {(grid.nt + 1, grid.dim, grid.n_nodes)}"
        )
    if mu0.shape != (grid.n_nodes,):
        raise ValueError("initial slice does not match the grid")
    if float(mu0.min()) < 0.0:
        raise ValueError("initial density must be nonnegative")

    mu = np.empty((grid.nt + 1, grid.n_nodes))
    mu[0] = mu0
    step = _fp_step_1d if grid.dim == 1 else _fp_step_2d
    for n in range(1, grid.nt + 1):
        nxt = step(mu[n - 1], b[n], b[n - 1], grid, scheme)
        low = float(nxt.min())
        if low < -1e-12:
            raise SchemeViolationError(
                f"density undershoot {low:.3e} at time level {n}"
            )
        if low < 0.0:
            np.clip(nxt, 0.0, None, out=nxt)
        mu[n] = nxt
    return SpaceTimeField(mu, grid)


def _fp_step_1d(prev, b_new, b_old, grid: Grid, scheme: str) -> np.ndarray:
    dt = grid.dt
    if scheme == "implicit_euler":
        ab = _fp_banded(b_new[0], grid, dt)
        return solve_banded((1, 1), ab, prev, check_finite=False)
    rhs = prev - 0.5 * dt * _apply_flux_operator(prev, b_old[0], grid)
    ab = _fp_banded(b_new[0], grid, 0.5 * dt)
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _fp_step_2d(prev, b_new, b_old, grid: Grid, scheme: str) -> np.ndarray:
    # Lie splitting, x sweep then y sweep; each sweep conserves the weighted
    # row mass, so the tensor trapezoid mass telescopes exactly.
    nx = grid.nx
    dt = 0.5 * grid.dt if scheme == "crank_nicolson" else grid.dt
    cur = prev.reshape(nx, nx)
    bx = b_new[0].reshape(nx, nx)
    by = b_new[1].reshape(nx, nx)
    if scheme == "crank_nicolson":
        ox = b_old[0].reshape(nx, nx)
        oy = b_old[1].reshape(nx, nx)
        expl = np.empty_like(cur)
        for k in range(nx):
            expl[:, k] = cur[:, k] - dt * _apply_flux_operator(cur[:, k], ox[:, k], grid)
        cur = expl
    star = np.empty_like(cur)
    for k in range(nx):
        ab = _fp_banded(bx[:, k], grid, dt)
        star[:, k] = solve_banded((1, 1), ab, cur[:, k], check_finite=False)
    if scheme == "crank_nicolson":
        expl = np.empty_like(star)
        for k in range(nx):
            expl[k, :] = star[k, :] - dt * _apply_flux_operator(star[k, :], oy[k, :], grid)
        star = expl
    out = np.empty_like(star)
    for k in range(nx):
        ab = _fp_banded(by[k, :], grid, dt)
        out[k, :] = solve_banded((1, 1), ab, star[k, :], check_finite=False)
    return out.ravel()


# ---------------------------------------------------------------------------
# heat kernel tools


def heat_kernel_convolve(initial: np.ndarray, t: float, grid: Grid) -> np.ndarray:
    """Convolve a node field with the heat kernel at time t > 0.

    The sampled kernel matrix is column normalized against the quadrature
    weights, so the discrete mass is preserved to machine precision.
    """
    if not t > 0:
        raise ValueError(f"kernel time must be positive, got {t}")
    f = np.asarray(initial, dtype=float)
    x = grid.axis
    K = np.exp(-((x[:, None] - x[None, :]) ** 2) / (4.0 * t))
    K /= grid.axis_weights @ K  # unit discrete mass per column
    w = grid.axis_weights
    if grid.dim == 1:
        return K @ (w * f)
    g = f.reshape(grid.nx, grid.nx)
    tmp = K @ (w[:, None] * g)
    return ((w * tmp) @ K.T).ravel()


@dataclass(frozen=True)
class HeatKernelQuery:
    """Space-time norm query for the heat kernel or its gradient."""

    dim: int
    exponent: float
    t: float
    kind: str = "kernel"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.exponent >= 1.0:
            raise ValueError(f"exponent must be >= 1, got {self.exponent}")
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")
        if self.kind not in ("kernel", "gradient"):
            raise ValueError(f"kind must be 'kernel' or 'gradient', got {self.kind!r}")


@dataclass(frozen=True)
class KernelNormResult:
    value: float
    fitted_exponent: float
    analytic_exponent: float


def analytic_kernel_exponent(dim: int, exponent: float, kind: str = "kernel") -> float:
    """Growth exponent in t of the space-time norm on R^dim x (0, t)."""
    n, q = float(dim), float(exponent)
    if kind == "kernel":
        return n / (2.0 * q) - n / 2.0 + 1.0 / q
    return n / (2.0 * q) - (n + 1.0) / 2.0 + 1.0 / q


def _radial_norm_power(s: np.ndarray, query: HeatKernelQuery) -> np.ndarray:
    """Spatial L^q norm to the q-th power at each time in s, by quadrature."""
    n, q = query.dim, query.exponent
    surface = 2.0 if n == 1 else 2.0 * np.pi
    nodes, gl_w = np.polynomial.legendre.leggauss(160)
    cutoff = 9.0 * np.sqrt(4.0 * s / q)
    rho = 0.5 * cutoff[:, None] * (nodes[None, :] + 1.0)
    wq = 0.5 * cutoff[:, None] * gl_w[None, :]
    s_ = s[:, None]
    prefactor = (4.0 * np.pi * s_) ** (-0.5 * n * q)
    core = np.exp(-q * rho**2 / (4.0 * s_))
    if query.kind == "gradient":
        core = core * (rho / (2.0 * s_)) ** q
    vals = prefactor * core * rho ** (n - 1)
    return surface * np.sum(vals * wq, axis=1)


def _time_integral(tau: float, query: HeatKernelQuery) -> float:
    """Integral over (0, tau) of the spatial norm power, log-mesh trapezoid.

    The integrand is a pure power of s, so the unresolved piece below the
    smallest mesh point is added back by power-law extrapolation from the
    first two mesh values.
    """
    y = np.log(tau) + np.linspace(np.log(1e-8), 0.0, 1200)
    s = np.exp(y)
    g = _radial_norm_power(s, query)
    integral = float(np.trapezoid(g * s, y))
    gamma = -np.log(g[1] / g[0]) / (y[1] - y[0])
    if gamma < 1.0:
        integral += float(g[0] * s[0] / (1.0 - gamma))
    return integral


def heat_kernel_spacetime_norm(query: HeatKernelQuery) -> KernelNormResult:
    """Space-time L^q norm of the heat kernel (or its gradient) on (0, t).

    The time integral is done on a log-spaced mesh and the growth exponent is
    fitted by log-log regression over a decade of horizons. Non-integrable
    queries raise KernelNormDivergenceError carrying the analytic exponent;
    the borderline log-divergent case is flagged as such.
    """
    beta = analytic_kernel_exponent(query.dim, query.exponent, query.kind)
    if beta <= 1e-14:
        raise KernelNormDivergenceError(beta, boundary=abs(beta) <= 1e-14)
    taus = query.t * np.logspace(-1.0, 0.0, 9)
    vals = np.array([_time_integral(tau, query) for tau in taus])
    norms = vals ** (1.0 / query.exponent)
    slope = np.polyfit(np.log(taus), np.log(norms), 1)[0]
    return KernelNormResult(
        value=float(norms[-1]),
        fitted_exponent=float(slope),
        analytic_exponent=float(beta),
    )
