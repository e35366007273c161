"""Mesh density functions and grid interpolation kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sddmesh.grid import ComputationalGrid, GridError, PhysicalMesh


@dataclass(frozen=True)
class DensityConfig:
    """How the arc-length weight is chosen.

    Exactly one of ``alpha`` (fixed weight) or ``adaptive_c`` (weight
    ``c / max|grad u|^2``, re-evaluated whenever the density is rebuilt)
    must be given.
    """

    alpha: float | None = None
    adaptive_c: float | None = None
    smoothing_passes: int = 0

    def __post_init__(self):
        if (self.alpha is None) == (self.adaptive_c is None):
            raise ValueError("give exactly one of alpha or adaptive_c")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.adaptive_c is not None and not self.adaptive_c > 0:
            raise ValueError("adaptive_c must be positive")
        if self.smoothing_passes < 0:
            raise ValueError("smoothing_passes must be non-negative")

    def resolve(self, grad_sq: np.ndarray) -> float:
        if self.alpha is not None:
            return float(self.alpha)
        peak = float(np.max(grad_sq))
        return self.adaptive_c / peak if peak > 0 else float(self.adaptive_c)


@dataclass(frozen=True)
class DensityField:
    """Nodal density with its centered computational gradient, frozen in time."""

    rho: np.ndarray
    grad_xi: np.ndarray
    grad_eta: np.ndarray
    grid: ComputationalGrid
    frozen_time: float = 0.0

    @property
    def drift_xi(self) -> np.ndarray:
        return self.grad_xi / self.rho

    @property
    def drift_eta(self) -> np.ndarray:
        return self.grad_eta / self.rho


def _diff(f: np.ndarray, h: float, axis: int, periodic: bool, offset: float, edge_order: int = 2) -> np.ndarray:
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    if periodic:
        fp = np.roll(f, -1, axis=0)
        fm = np.roll(f, 1, axis=0)
        if offset:
            fp[-1] += offset
            fm[0] -= offset
        out[:] = (fp - fm) / (2 * h)
    else:
        out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
        if edge_order == 1:
            out[0] = (f[1] - f[0]) / h
            out[-1] = (f[-1] - f[-2]) / h
        else:
            out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
            out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def computational_gradient(f: np.ndarray, grid: ComputationalGrid, offset: tuple[float, float] = (0.0, 0.0),
                           edge_order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """``(f_xi, f_eta)`` on the grid nodes.

    Centered in the interior and across periodic seams (where ``offset`` is the
    jump per period, e.g. ``(Lx, 0)`` for x-coordinates). At non-periodic
    edges the difference is one-sided, second order by default; ``edge_order=1``
    uses the adjacent node only, which keeps the sign of a monotone
    coordinate however strongly the first cells are stretched.
    """
    if edge_order not in (1, 2):
        raise ValueError("edge_order must be 1 or 2")
    return (
        _diff(f, grid.dxi, 0, grid.periodic_x, offset[0], edge_order),
        _diff(f, grid.deta, 1, grid.periodic_y, offset[1], edge_order),
    )


def smooth(values: np.ndarray, grid: ComputationalGrid, passes: int = 1) -> np.ndarray:
    """Apply ``passes`` rounds of the 1-2-1 tensor (9-point) average."""
    out = np.asarray(values, dtype=float)
    modes = ("wrap" if grid.periodic_x else "edge", "wrap" if grid.periodic_y else "edge")
    for _ in range(passes):
        p = np.pad(out, ((1, 1), (0, 0)), mode=modes[0])
        p = np.pad(p, ((0, 0), (1, 1)), mode=modes[1])
        a = 0.25 * p[:-2] + 0.5 * p[1:-1] + 0.25 * p[2:]
        out = 0.25 * a[:, :-2] + 0.5 * a[:, 1:-1] + 0.25 * a[:, 2:]
    return out


def density_from_values(rho: np.ndarray, grid: ComputationalGrid, time: float = 0.0) -> DensityField:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != grid.shape:
        raise GridError(f"density must have shape {grid.shape}")
    if not np.all(np.isfinite(rho)) or not np.all(rho > 0):
        raise ValueError("density must be finite and positive")
    gx, ge = computational_gradient(rho, grid)
    return DensityField(rho, gx, ge, grid, time)


def build_arclength_density(u: np.ndarray, mesh: PhysicalMesh, cfg: DensityConfig) -> DensityField:
    """``rho = sqrt(1 + alpha |grad u|^2)`` with ``grad u`` taken on ``mesh``."""
    from sddmesh.physics import metric_terms, physical_gradient

    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite values in u")
    m = metric_terms(mesh)
    ux, uy = physical_gradient(u, m, mesh.grid)
    grad_sq = ux**2 + uy**2
    rho = np.sqrt(1.0 + cfg.resolve(grad_sq) * grad_sq)
    if cfg.smoothing_passes:
        rho = smooth(rho, mesh.grid, cfg.smoothing_passes)
    return density_from_values(rho, mesh.grid, mesh.time)


# -- interpolation ------------------------------------------------------------


def _locate(s: np.ndarray, n: int, h: float, periodic: bool, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Map coordinates to (cell index, fractional offset) along one axis."""
    t = np.asarray(s, dtype=float) / h
    if periodic:
        t = np.mod(t, n)
        i = np.floor(t).astype(np.int64)
        i = np.minimum(i, n - 1)
        return i, t - i
    if np.any(t < -1e-9) or np.any(t > n - 1 + 1e-9):
        raise GridError(f"{what} coordinate outside [0, 1]")
    t = np.clip(t, 0.0, n - 1)
    i = np.minimum(np.floor(t).astype(np.int64), n - 2)
    return i, t - i


def _lerp(a, b, t):
    return a + t * (b - a)


def sample_bilinear(values: np.ndarray, grid: ComputationalGrid, xi, eta) -> np.ndarray:
    """Tensor-product linear interpolation of a nodal field at ``(xi, eta)``."""
    xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
    i, a = _locate(xi, grid.nx, grid.dxi, grid.periodic_x, "xi")
    j, b = _locate(eta, grid.ny, grid.deta, grid.periodic_y, "eta")
    i1 = (i + 1) % grid.nx if grid.periodic_x else i + 1
    j1 = (j + 1) % grid.ny if grid.periodic_y else j + 1
    v = values
    return _lerp(_lerp(v[i, j], v[i1, j], a), _lerp(v[i, j1], v[i1, j1], a), b)


def _cubic_stencil(s: np.ndarray, n: int, h: float, periodic: bool, what: str):
    i, frac = _locate(s, n, h, periodic, what)
    base = i - 1
    if not periodic:
        base = np.clip(base, 0, n - 4)
    t = (i - base) + frac
    w = np.stack([
        -(t - 1) * (t - 2) * (t - 3) / 6.0,
        t * (t - 2) * (t - 3) / 2.0,
        -t * (t - 1) * (t - 3) / 2.0,
        t * (t - 1) * (t - 2) / 6.0,
    ], axis=-1)
    idx = base[..., None] + np.arange(4)
    if periodic:
        idx = idx % n
    return idx, w


def _anchored(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    # sum_k w_k v_k written relative to v_1 so constant data is reproduced exactly
    ref = v[..., 1]
    return ref + np.sum(w * (v - ref[..., None]), axis=-1)


def sample_bicubic(values: np.ndarray, grid: ComputationalGrid, xi, eta) -> np.ndarray:
    """Tensor-product 4-point Lagrange interpolation.

    Exact for bicubic polynomials; near non-periodic edges the 4x4 stencil is
    shifted inward so it never leaves the grid.
    """
    if grid.nx < 4 or grid.ny < 4:
        raise GridError("bicubic sampling needs at least 4 nodes per direction")
    xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
    ii, wx = _cubic_stencil(xi, grid.nx, grid.dxi, grid.periodic_x, "xi")
    jj, wy = _cubic_stencil(eta, grid.ny, grid.deta, grid.periodic_y, "eta")
    block = values[ii[..., :, None], jj[..., None, :]]
    rows = _anchored(wy[..., None, :], block)
    return _anchored(wx, rows)


def drift_at(field: DensityField, xi, eta) -> tuple[np.ndarray, np.ndarray]:
    """``grad rho / rho`` at arbitrary points, each factor sampled bilinearly."""
    rho = sample_bilinear(field.rho, field.grid, xi, eta)
    return (
        sample_bilinear(field.grad_xi, field.grid, xi, eta) / rho,
        sample_bilinear(field.grad_eta, field.grid, xi, eta) / rho,
    )
