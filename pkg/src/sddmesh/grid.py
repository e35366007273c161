"""Computational grids, physical meshes and subdomain decompositions.

The computational domain is always the unit square. A non-periodic direction
with ``n`` nodes has nodes ``i / (n - 1)``; a periodic direction has nodes
``i / n`` with node ``n`` identified with node ``0``.

Mesh coordinates on periodic grids are stored *unwrapped*: the value seen at
index ``i + n`` is ``x[i] + Lx``. Helpers in this module translate between
global index boxes (which may run past ``n - 1`` on periodic grids) and
plain arrays carrying that offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Raised for invalid grid, mesh or decomposition parameters."""


class MeshTanglingError(RuntimeError):
    """Raised when a mesh has a non-positive cell or node Jacobian."""


@dataclass(frozen=True)
class ComputationalGrid:
    nx: int
    ny: int
    periodic_x: bool = False
    periodic_y: bool = False

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise GridError(f"grid needs at least 3 nodes per direction, got {self.nx}x{self.ny}")

    @property
    def dxi(self) -> float:
        return 1.0 / self.nx if self.periodic_x else 1.0 / (self.nx - 1)

    @property
    def deta(self) -> float:
        return 1.0 / self.ny if self.periodic_y else 1.0 / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def periodic(self) -> tuple[bool, bool]:
        return (self.periodic_x, self.periodic_y)

    @property
    def fully_periodic(self) -> bool:
        return self.periodic_x and self.periodic_y

    @property
    def xi(self) -> np.ndarray:
        return np.arange(self.nx) * self.dxi

    @property
    def eta(self) -> np.ndarray:
        return np.arange(self.ny) * self.deta

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(XI, ETA)`` node arrays indexed ``[i, j]``."""
        return np.meshgrid(self.xi, self.eta, indexing="ij")

    def wrap_index(self, i: int, j: int) -> tuple[int, int]:
        """Reduce an index pair modulo the periodic directions."""
        if self.periodic_x:
            i %= self.nx
        if self.periodic_y:
            j %= self.ny
        return i, j


def make_grid(nx: int, ny: int, periodic_x: bool = False, periodic_y: bool = False) -> ComputationalGrid:
    return ComputationalGrid(int(nx), int(ny), bool(periodic_x), bool(periodic_y))


@dataclass(frozen=True)
class PhysicalDomain:
    """Rectangle ``[x0, x0 + Lx] x [y0, y0 + Ly]`` (half-open if periodic)."""

    Lx: float
    Ly: float
    periodic_x: bool = False
    periodic_y: bool = False
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise GridError(f"domain extents must be positive, got Lx={self.Lx}, Ly={self.Ly}")

    def check_grid(self, grid: ComputationalGrid) -> None:
        if (self.periodic_x, self.periodic_y) != grid.periodic:
            raise GridError("domain and grid periodicity flags differ")


@dataclass
class PhysicalMesh:
    """Node coordinates ``x[i, j], y[i, j]`` over a computational grid."""

    x: np.ndarray
    y: np.ndarray
    grid: ComputationalGrid
    domain: PhysicalDomain
    time: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.grid.shape or self.y.shape != self.grid.shape:
            raise GridError(f"coordinate arrays must have shape {self.grid.shape}")
        self.domain.check_grid(self.grid)

    @classmethod
    def uniform(cls, grid: ComputationalGrid, domain: PhysicalDomain, time: float = 0.0) -> "PhysicalMesh":
        XI, ETA = grid.nodes()
        return cls(domain.x0 + domain.Lx * XI, domain.y0 + domain.Ly * ETA, grid, domain, time)

    def copy(self) -> "PhysicalMesh":
        return PhysicalMesh(self.x.copy(), self.y.copy(), self.grid, self.domain, self.time)

    def displacement(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates minus the uniform mesh; periodic on periodic grids."""
        XI, ETA = self.grid.nodes()
        d = self.domain
        return self.x - d.x0 - d.Lx * XI, self.y - d.y0 - d.Ly * ETA

    def check_boundary(self, atol: float = 1e-12) -> None:
        """Verify the fixed boundary conditions of non-periodic directions."""
        d = self.domain
        if not self.grid.periodic_x:
            if np.max(np.abs(self.x[0, :] - d.x0)) > atol or np.max(np.abs(self.x[-1, :] - d.x0 - d.Lx)) > atol:
                raise GridError("x boundary values violate x(0,.)=x0, x(1,.)=x0+Lx")
        if not self.grid.periodic_y:
            if np.max(np.abs(self.y[:, 0] - d.y0)) > atol or np.max(np.abs(self.y[:, -1] - d.y0 - d.Ly)) > atol:
                raise GridError("y boundary values violate y(.,0)=y0, y(.,1)=y0+Ly")

    def check_untangled(self) -> None:
        """Raise :class:`MeshTanglingError` if any cell has non-positive area."""
        from sddmesh.quality import cell_jacobians

        J = cell_jacobians(self)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if not np.all(det > 0):
            i, j = np.unravel_index(np.argmin(det), det.shape)
            raise MeshTanglingError(
                f"mesh tangled at t={self.time:.6g}: cell ({i},{j}) has Jacobian {det[i, j]:.3e}"
            )


# -- index boxes --------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Inclusive index range ``[i_lo..i_hi] x [j_lo..j_hi]``.

    On periodic grids ``i_hi`` may equal ``nx`` (the wrapped copy of node 0).
    """

    i_lo: int
    i_hi: int
    j_lo: int
    j_hi: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.i_hi - self.i_lo + 1, self.j_hi - self.j_lo + 1)

    def indices(self) -> set[tuple[int, int]]:
        return {(i, j) for i in range(self.i_lo, self.i_hi + 1) for j in range(self.j_lo, self.j_hi + 1)}

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask


def extract_box(values: np.ndarray, grid: ComputationalGrid, box: Box, offset: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Copy a box out of a nodal array, unwrapping periodic indices.

    ``offset`` is the jump added per period in x and y respectively (for
    x-coordinates on a periodic grid pass ``(Lx, 0)``).
    """
    ii = np.arange(box.i_lo, box.i_hi + 1)
    jj = np.arange(box.j_lo, box.j_hi + 1)
    wi, ki = (ii % grid.nx, ii // grid.nx) if grid.periodic_x else (ii, np.zeros_like(ii))
    wj, kj = (jj % grid.ny, jj // grid.ny) if grid.periodic_y else (jj, np.zeros_like(jj))
    out = values[np.ix_(wi, wj)].astype(float)
    if offset[0]:
        out = out + offset[0] * ki[:, None]
    if offset[1]:
        out = out + offset[1] * kj[None, :]
    return out


def insert_box(target: np.ndarray, block: np.ndarray, grid: ComputationalGrid, box: Box, mask: np.ndarray,
               offset: tuple[float, float] = (0.0, 0.0)) -> None:
    """Write ``block[mask]`` back into ``target`` (inverse of :func:`extract_box`)."""
    ii = np.arange(box.i_lo, box.i_hi + 1)
    jj = np.arange(box.j_lo, box.j_hi + 1)
    I, J = np.meshgrid(ii, jj, indexing="ij")
    I, J = I[mask], J[mask]
    vals = block[mask].copy()
    if grid.periodic_x:
        vals -= offset[0] * (I // grid.nx)
        I = I % grid.nx
    if grid.periodic_y:
        vals -= offset[1] * (J // grid.ny)
        J = J % grid.ny
    target[I, J] = vals


# -- decomposition ------------------------------------------------------------


@dataclass(frozen=True)
class Decomposition:
    grid: ComputationalGrid
    px: int
    py: int
    xlines: tuple[int, ...]
    ylines: tuple[int, ...]
    boxes: tuple[Box, ...]
    interface_nodes: tuple[tuple[int, int], ...] = field(default=())

    @property
    def trivial(self) -> bool:
        return self.px == 1 and self.py == 1

    def interface_lines(self) -> list[list[tuple[int, int]]]:
        """Ordered node lists for every interface line, end anchors included.

        Non-periodic lines start and end on the physical boundary; periodic
        lines close on themselves, so the last entry is the unwrapped copy of
        the first (index ``n`` in the running direction).
        """
        g = self.grid
        lines = []
        for i in self.xlines:
            n = g.ny + 1 if g.periodic_y else g.ny
            lines.append([(i, j) for j in range(n)])
        for j in self.ylines:
            n = g.nx + 1 if g.periodic_x else g.nx
            lines.append([(i, j) for i in range(n)])
        return lines


def _split_indices(n: int, p: int, periodic: bool) -> tuple[int, ...]:
    if p == 1:
        return ()
    if periodic:
        return tuple(int(round(k * n / p)) for k in range(p))
    return tuple(int(round(k * (n - 1) / p)) for k in range(1, p))


def _ranges(n: int, lines: tuple[int, ...], periodic: bool) -> list[tuple[int, int]]:
    if not lines:
        return [(0, n - 1)]
    if periodic:
        ends = list(lines) + [lines[0] + n]
        return [(ends[k], ends[k + 1]) for k in range(len(lines))]
    ends = [0, *lines, n - 1]
    return [(ends[k], ends[k + 1]) for k in range(len(ends) - 1)]


def decompose(grid: ComputationalGrid, px: int, py: int) -> Decomposition:
    """Split the grid into ``px x py`` index boxes sharing their interface lines."""
    if px < 1 or py < 1:
        raise GridError("subdomain counts must be positive")
    if px > grid.nx - 2 or py > grid.ny - 2:
        raise GridError(f"{px}x{py} subdomains is too many for a {grid.nx}x{grid.ny} grid")
    xlines = _split_indices(grid.nx, px, grid.periodic_x)
    ylines = _split_indices(grid.ny, py, grid.periodic_y)
    if len(set(xlines)) != len(xlines) or len(set(ylines)) != len(ylines):
        raise GridError("subdomains would be empty")
    boxes = tuple(
        Box(i0, i1, j0, j1)
        for (i0, i1) in _ranges(grid.nx, xlines, grid.periodic_x)
        for (j0, j1) in _ranges(grid.ny, ylines, grid.periodic_y)
    )
    nodes: set[tuple[int, int]] = set()
    jr = range(grid.ny) if grid.periodic_y else range(1, grid.ny - 1)
    ir = range(grid.nx) if grid.periodic_x else range(1, grid.nx - 1)
    for i in xlines:
        nodes.update((i, j) for j in jr)
    for j in ylines:
        nodes.update((i, j) for i in ir)
    return Decomposition(grid, px, py, xlines, ylines, boxes, tuple(sorted(nodes)))
