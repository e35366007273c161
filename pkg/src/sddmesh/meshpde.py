"""Deterministic solvers for the linear parabolic mesh generator.

With the density frozen, each coordinate obeys

    x_t = (grad rho / rho) . grad x + lap x

in computational coordinates. Everything here uses centered differences and
forward Euler, sub-stepped internally so that the explicit scheme stays
inside its diffusion and drift limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from sddmesh.density import DensityField
from sddmesh.grid import Box, PhysicalMesh, extract_box

SAFETY = 0.8
DEFAULT_MAX_SUBSTEPS = 200_000

EDGES = ("west", "east", "south", "north")


class StabilityError(RuntimeError):
    pass


@dataclass
class EdgeValues:
    x_old: np.ndarray
    y_old: np.ndarray
    x_new: np.ndarray
    y_new: np.ndarray

    def at(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Values at fraction ``theta`` of the step (linear in time)."""
        return (self.x_old + theta * (self.x_new - self.x_old),
                self.y_old + theta * (self.y_new - self.y_old))


@dataclass
class BoundaryData:
    """Dirichlet data on the four sides of a box, at ``t^n`` and ``t^{n+1}``.

    ``west``/``east`` run along ``j`` at ``i = 0``/``i = -1``; ``south``/
    ``north`` run along ``i`` at ``j = 0``/``j = -1``.
    """

    edges: dict[str, EdgeValues]
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        missing = [e for e in EDGES if e not in self.edges]
        if missing:
            raise ValueError(f"boundary data missing edges: {missing}")

    @classmethod
    def from_blocks(cls, x_old, y_old, x_new, y_new, provenance: str | dict = "physical-boundary") -> "BoundaryData":
        sl = {"west": (0, slice(None)), "east": (-1, slice(None)),
              "south": (slice(None), 0), "north": (slice(None), -1)}
        edges = {k: EdgeValues(x_old[s].copy(), y_old[s].copy(), x_new[s].copy(), y_new[s].copy())
                 for k, s in sl.items()}
        prov = provenance if isinstance(provenance, dict) else {k: provenance for k in EDGES}
        return cls(edges, prov)

    def fill_ring(self, x: np.ndarray, y: np.ndarray, theta: float) -> None:
        """Overwrite the boundary ring of block arrays at step fraction ``theta``."""
        for name, s in (("south", (slice(None), 0)), ("north", (slice(None), -1)),
                        ("west", (0, slice(None))), ("east", (-1, slice(None)))):
            ex, ey = self.edges[name].at(theta)
            x[s] = ex
            y[s] = ey

    def check_corners(self, atol: float = 1e-12) -> None:
        e = self.edges
        pairs = [("west", 0, "south", 0), ("west", -1, "north", 0),
                 ("east", 0, "south", -1), ("east", -1, "north", -1)]
        for a, ia, b, ib in pairs:
            for attr in ("x_old", "y_old", "x_new", "y_new"):
                va, vb = getattr(e[a], attr)[ia], getattr(e[b], attr)[ib]
                if abs(va - vb) > atol:
                    raise ValueError(f"corner mismatch between {a} and {b} ({attr}): {va} vs {vb}")

    def sample(self, edge: str, s, theta) -> tuple[np.ndarray, np.ndarray]:
        """Linear-in-space, linear-in-time values at edge parameter ``s`` in [0, 1]."""
        ev = self.edges[edge]
        n = ev.x_old.shape[0]
        t = np.clip(np.asarray(s, float), 0.0, 1.0) * (n - 1)
        k = np.minimum(np.floor(t).astype(np.int64), n - 2)
        a = t - k
        theta = np.asarray(theta, float)
        out = []
        for old, new in ((ev.x_old, ev.x_new), (ev.y_old, ev.y_new)):
            v0 = old[k] + a * (old[k + 1] - old[k])
            v1 = new[k] + a * (new[k + 1] - new[k])
            out.append(v0 + theta * (v1 - v0))
        return out[0], out[1]


def substep_count(dt: float, dxi: float, deta: float, drift_max: float = 0.0,
                  max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> int:
    """Equal forward-Euler sub-steps needed for ``dt`` (diffusion and drift limits)."""
    h = min(dxi, deta)
    limit = SAFETY * h * h / 4.0
    m = math.ceil(dt / limit - 1e-9)
    if drift_max > 0:
        m = max(m, math.ceil(dt * drift_max / (SAFETY * h) - 1e-9))
    m = max(m, 1)
    if m > max_substeps:
        raise StabilityError(f"{m} forward-Euler sub-steps needed, cap is {max_substeps}")
    return m


def _padded(f: np.ndarray, periodic: tuple[bool, bool], offset: tuple[float, float]) -> np.ndarray:
    p = np.pad(f, ((1, 1), (1, 1)), mode="edge")
    if periodic[0]:
        p[0, 1:-1] = f[-1] - offset[0]
        p[-1, 1:-1] = f[0] + offset[0]
    if periodic[1]:
        p[1:-1, 0] = f[:, -1] - offset[1]
        p[1:-1, -1] = f[:, 0] + offset[1]
    return p


def mesh_rhs(f: np.ndarray, ax: np.ndarray, ae: np.ndarray, dxi: float, deta: float,
             periodic: tuple[bool, bool] = (False, False), offset: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """``ax f_xi + ae f_eta + f_xixi + f_etaeta`` with centered stencils.

    Entries on non-periodic edges are meaningless; callers overwrite them.
    """
    p = _padded(f, periodic, offset)
    c = p[1:-1, 1:-1]
    e, w = p[2:, 1:-1], p[:-2, 1:-1]
    n, s = p[1:-1, 2:], p[1:-1, :-2]
    return (ax * (e - w) / (2 * dxi) + ae * (n - s) / (2 * deta)
            + (e - 2 * c + w) / (dxi * dxi) + (n - 2 * c + s) / (deta * deta))


def advance_block(
    x: np.ndarray,
    y: np.ndarray,
    ax: np.ndarray,
    ae: np.ndarray,
    dxi: float,
    deta: float,
    dt: float,
    bc: BoundaryData | None = None,
    periodic: tuple[bool, bool] = (False, False),
    period: tuple[float, float] = (0.0, 0.0),
    max_substeps: int = DEFAULT_MAX_SUBSTEPS,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward-Euler advance of a block of mesh coordinates over ``dt``.

    Non-periodic sides are Dirichlet: their values come from ``bc`` and are
    interpolated linearly in time across the internal sub-steps.
    """
    if not all(periodic) and bc is None:
        raise ValueError("Dirichlet sides need boundary data")
    drift_max = max(float(np.max(np.abs(ax))), float(np.max(np.abs(ae))))
    m = substep_count(dt, dxi, deta, drift_max, max_substeps)
    h = dt / m
    x = x.astype(float, copy=True)
    y = y.astype(float, copy=True)
    interior = np.ones(x.shape, dtype=bool)
    if not periodic[0]:
        interior[0, :] = interior[-1, :] = False
    if not periodic[1]:
        interior[:, 0] = interior[:, -1] = False
    xoff, yoff = (period[0], 0.0), (0.0, period[1])
    for k in range(1, m + 1):
        rx = mesh_rhs(x, ax, ae, dxi, deta, periodic, xoff)
        ry = mesh_rhs(y, ax, ae, dxi, deta, periodic, yoff)
        x[interior] += h * rx[interior]
        y[interior] += h * ry[interior]
        if not all(periodic):
            bx, by = x.copy(), y.copy()
            bc.fill_ring(bx, by, k / m)
            x[~interior] = bx[~interior]
            y[~interior] = by[~interior]
    return x, y


def step_mesh_2d(mesh_n: PhysicalMesh, field: DensityField, bc: BoundaryData, dt: float,
                 box: Box | None = None, max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> tuple[np.ndarray, np.ndarray]:
    """Advance the mesh over one box (default: the whole grid) with Dirichlet data."""
    grid = mesh_n.grid
    box = box or Box(0, grid.nx - 1, 0, grid.ny - 1)
    d = mesh_n.domain
    x = extract_box(mesh_n.x, grid, box, (d.Lx, 0.0))
    y = extract_box(mesh_n.y, grid, box, (0.0, d.Ly))
    ax = extract_box(field.drift_xi, grid, box)
    ae = extract_box(field.drift_eta, grid, box)
    return advance_block(x, y, ax, ae, grid.dxi, grid.deta, dt, bc, max_substeps=max_substeps)


def step_mesh_periodic(mesh_n: PhysicalMesh, field: DensityField, dt: float,
                       max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> PhysicalMesh:
    """Advance a fully periodic mesh using the periodically extended coordinates."""
    grid = mesh_n.grid
    if not grid.fully_periodic:
        raise ValueError("step_mesh_periodic needs a fully periodic grid")
    d = mesh_n.domain
    x, y = advance_block(mesh_n.x, mesh_n.y, field.drift_xi, field.drift_eta, grid.dxi, grid.deta, dt,
                         periodic=(True, True), period=(d.Lx, d.Ly), max_substeps=max_substeps)
    return PhysicalMesh(x, y, grid, d, mesh_n.time + dt)


def step_boundary_mesh_1d(line_n: np.ndarray, rho_line: np.ndarray, dt: float,
                          max_substeps: int = DEFAULT_MAX_SUBSTEPS) -> np.ndarray:
    """Advance ``x_t = (rho_xi / rho) x_xi + x_xixi`` along one boundary line.

    Both endpoints are held fixed.
    """
    line = np.asarray(line_n, dtype=float).copy()
    rho = np.asarray(rho_line, dtype=float)
    n = line.shape[0]
    h = 1.0 / (n - 1)
    a = np.zeros(n)
    a[1:-1] = (rho[2:] - rho[:-2]) / (2 * h) / rho[1:-1]
    m = substep_count(dt, h, h, float(np.max(np.abs(a))), max_substeps)
    k = dt / m
    ai = a[1:-1]
    for _ in range(m):
        line[1:-1] += k * (ai * (line[2:] - line[:-2]) / (2 * h)
                           + (line[2:] - 2 * line[1:-1] + line[:-2]) / (h * h))
    return line
