"""Uniform truncated grids and the discrete operators built on them.

Fields live on the nodes of a uniform grid over [-L, L]^dim with an odd
number of nodes per axis, so x = 0 is always a node. Space-time fields are
stored as (nt+1, n_nodes) arrays; in two dimensions the node axis unflattens
C-style to (nx, nx) with axis 0 along x and axis 1 along y.

Quadrature is the trapezoid rule. Its weights are exactly the finite-volume
cell widths (half cells at the boundary nodes), which is what makes the
flux-form updates below conserve the trapezoid mass to roundoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [-L, L]^dim coupled to a uniform time mesh."""

    dim: int
    half_width: float
    nx: int
    nt: int
    horizon: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.nx < 3 or self.nx % 2 == 0:
            raise ValueError(f"nx must be odd and >= 3, got {self.nx}")
        if self.nt < 1:
            raise ValueError(f"nt must be >= 1, got {self.nt}")
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def n_nodes(self) -> int:
        return self.nx**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.nx)

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.nt + 1)

    @cached_property
    def axis_weights(self) -> np.ndarray:
        # trapezoid weights = cell widths, half cells at the ends
        w = np.full(self.nx, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    @cached_property
    def weights(self) -> np.ndarray:
        """Flattened tensor quadrature weights, shape (n_nodes,)."""
        if self.dim == 1:
            return self.axis_weights.copy()
        return np.outer(self.axis_weights, self.axis_weights).ravel()

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (dim, n_nodes)."""
        if self.dim == 1:
            return self.axis[None, :].copy()
        xx, yy = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()])

    @cached_property
    def radius_sq(self) -> np.ndarray:
        return np.sum(self.coordinates**2, axis=0)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(self.radius_sq)

    def refined(self, factor: int = 2) -> "Grid":
        """Grid with factor times more cells per axis and time steps."""
        return Grid(
            dim=self.dim,
            half_width=self.half_width,
            nx=factor * (self.nx - 1) + 1,
            nt=factor * self.nt,
            horizon=self.horizon,
        )


@dataclass
class SpaceTimeField:
    """Values on every (time node, space node) pair of a grid."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.nt + 1, self.grid.n_nodes)
        if self.values.shape != expected:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {expected}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "SpaceTimeField":
        return cls(np.zeros((grid.nt + 1, grid.n_nodes)), grid)

    def slice(self, j: int) -> np.ndarray:
        return self.values[j]


def _values(field) -> np.ndarray:
    return np.asarray(getattr(field, "values", field), dtype=float)


def integrate(field_slice: np.ndarray, grid: Grid, weight: np.ndarray | None = None) -> float:
    """Trapezoid integral of a node field, optionally against a node weight."""
    f = np.asarray(field_slice, dtype=float)
    if weight is not None:
        f = f * weight
    return float(np.dot(grid.weights, f))


def integrate_space_time(values: np.ndarray, grid: Grid) -> float:
    """Trapezoid integral over space and time of a (nt+1, n_nodes) array."""
    spatial = _values(values) @ grid.weights
    tw = np.full(grid.nt + 1, grid.dt)
    tw[0] = tw[-1] = 0.5 * grid.dt
    return float(np.dot(tw, spatial))


def laplacian(field_slice: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order Laplacian with ghost-node reflection at the boundary.

    The reflected ghost value enforces a homogeneous Neumann condition, so
    constants are annihilated exactly at every node including the boundary.
    """
    f = np.asarray(field_slice, dtype=float)
    if grid.dim == 1:
        return _laplacian_axis(f, grid.dx)
    g = f.reshape(grid.nx, grid.nx)
    out = _laplacian_axis(g, grid.dx, axis=0) + _laplacian_axis(g, grid.dx, axis=1)
    return out.ravel()


def _laplacian_axis(f: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * (f[1] - f[0])
    out[-1] = 2.0 * (f[-2] - f[-1])
    return np.moveaxis(out, 0, axis) / dx**2


def gradient(field_slice: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order gradient, one-sided at the boundary. Shape (dim, n_nodes)."""
    f = np.asarray(field_slice, dtype=float)
    if grid.dim == 1:
        return _gradient_axis(f, grid.dx)[None, :]
    g = f.reshape(grid.nx, grid.nx)
    gx = _gradient_axis(g, grid.dx, axis=0).ravel()
    gy = _gradient_axis(g, grid.dx, axis=1).ravel()
    return np.stack([gx, gy])


def _gradient_axis(f: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = 0.5 * (f[2:] - f[:-2])
    out[0] = -1.5 * f[0] + 2.0 * f[1] - 0.5 * f[2]
    out[-1] = 1.5 * f[-1] - 2.0 * f[-2] + 0.5 * f[-3]
    return np.moveaxis(out, 0, axis) / dx


def face_transport_coefficients(peclet: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially fitted face coefficients for drift plus unit diffusion.

    For a face with Peclet number p = b*dx the combined flux times dx is
    A(p)*mu_left - B(p)*mu_right with B(p) = p/(e^p - 1) and A = B + p.
    Both are positive for every real p, A - B = p holds exactly, and
    A(0) = B(0) = 1 recovers plain central diffusion. The scheme is exact on
    the local equilibrium mu_right = mu_left * e^p.
    """
    p = np.asarray(peclet, dtype=float)
    small = np.abs(p) < 1e-8
    # series B = 1 - p/2 + p^2/12 + O(p^4) avoids 0/0
    safe = np.where(small, 1.0, p)
    B = np.where(small, 1.0 - 0.5 * p + p * p / 12.0, safe / np.expm1(safe))
    A = B + p
    return A, B


def flux_divergence(b: np.ndarray, density: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence of the fitted advective flux b*mu, flux form, no-flux boundary.

    b has shape (dim, n_nodes); face drifts are the means of the adjacent node
    values. Only the transport part of the fitted flux is returned; the unit
    diffusion that fixes the fitting weights is handled by the time steppers.
    The quadrature-weighted sum of the output telescopes to zero exactly.
    """
    b = np.asarray(b, dtype=float)
    mu = np.asarray(density, dtype=float)
    if b.shape != (grid.dim, grid.n_nodes):
        raise ValueError(f"drift shape {b.shape} != {(grid.dim, grid.n_nodes)}")
    if grid.dim == 1:
        return _flux_divergence_axis(b[0], mu, grid)
    bg = b.reshape(2, grid.nx, grid.nx)
    mg = mu.reshape(grid.nx, grid.nx)
    out = np.zeros_like(mg)
    out += _flux_divergence_axis(bg[0], mg, grid, axis=0)
    out += _flux_divergence_axis(bg[1], mg, grid, axis=1)
    return out.ravel()


def _flux_divergence_axis(b: np.ndarray, mu: np.ndarray, grid: Grid, axis: int = 0) -> np.ndarray:
    dx = grid.dx
    b = np.moveaxis(b, axis, 0)
    mu = np.moveaxis(mu, axis, 0)
    b_face = 0.5 * (b[1:] + b[:-1])
    A, B = face_transport_coefficients(b_face * dx)
    # transport-only part of the fitted flux, times dx
    flux = (A - 1.0) * mu[:-1] - (B - 1.0) * mu[1:]
    out = np.zeros_like(mu)
    out[:-1] += flux
    out[1:] -= flux
    w = grid.axis_weights.reshape((-1,) + (1,) * (mu.ndim - 1))
    out /= w * dx
    return np.moveaxis(out, 0, axis)


def write_grid_json(path, grid: Grid) -> None:
    meta = {
        "dim": grid.dim,
        "half_width": grid.half_width,
        "nx": grid.nx,
        "nt": grid.nt,
        "horizon": grid.horizon,
        "dx": grid.dx,
        "dt": grid.dt,
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_field_csv(path, grid: Grid, field_slice: np.ndarray) -> None:
    """One node per row: x,value in 1D and x,y,value in 2D."""
    f = np.asarray(field_slice, dtype=float)
    coords = grid.coordinates
    with open(path, "w") as fh:
        if grid.dim == 1:
            fh.write("x,value\n")
            for x, v in zip(coords[0], f):
                fh.write(f"{x:.17g},{v:.17g}\n")
        else:
            fh.write("x,y,value\n")
            for x, y, v in zip(coords[0], coords[1], f):
                fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def read_field_csv(path) -> np.ndarray:
    """Read back the value column written by write_field_csv."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data[None, :]
    return data[:, -1].copy()
