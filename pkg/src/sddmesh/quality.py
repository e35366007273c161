"""Geometric mesh quality and solution error measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sddmesh.grid import GridError, PhysicalMesh, extract_box, Box


@dataclass
class QualityReport:
    q: np.ndarray
    r_max: float | None = None
    r_mean: float | None = None
    l_inf: float | None = None
    metadata: dict = field(default_factory=dict)


def _cell_corners(mesh: PhysicalMesh) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates over the closed node lattice (wrapped copy appended on periodic axes)."""
    g, d = mesh.grid, mesh.domain
    box = Box(0, g.nx if g.periodic_x else g.nx - 1, 0, g.ny if g.periodic_y else g.ny - 1)
    return extract_box(mesh.x, g, box, (d.Lx, 0.0)), extract_box(mesh.y, g, box, (0.0, d.Ly))


def cell_jacobians(mesh: PhysicalMesh) -> np.ndarray:
    """Per-cell ``J = d(x, y)/d(xi, eta)`` from averaged opposite-edge differences.

    Shape ``(cells_x, cells_y, 2, 2)``; periodic grids include the seam cells.
    """
    x, y = _cell_corners(mesh)
    g = mesh.grid
    J = np.empty((x.shape[0] - 1, x.shape[1] - 1, 2, 2))
    for k, f in enumerate((x, y)):
        J[..., k, 0] = 0.5 * ((f[1:, :-1] - f[:-1, :-1]) + (f[1:, 1:] - f[:-1, 1:])) / g.dxi
        J[..., k, 1] = 0.5 * ((f[:-1, 1:] - f[:-1, :-1]) + (f[1:, 1:] - f[1:, :-1])) / g.deta
    return J


def quality_from_jacobian(J: np.ndarray) -> np.ndarray:
    """``Q = tr(J^T J) / (2 sqrt(det(J^T J)))``; equals 1 for conformal cells."""
    J = np.asarray(J, float)
    tr = np.sum(J * J, axis=(-2, -1))
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det == 0):
        raise GridError("degenerate cell: det(J^T J) <= 0")
    # det(J^T J) = det(J)^2
    return 0.5 * tr / np.abs(det)


def mesh_quality(mesh: PhysicalMesh) -> np.ndarray:
    """Q for every cell of the mesh."""
    J = cell_jacobians(mesh)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if not np.all(det > 0):
        raise GridError("mesh has cells with non-positive Jacobian")
    return quality_from_jacobian(J)


def cell_quality(mesh: PhysicalMesh, cell: tuple[int, int]) -> float:
    return float(mesh_quality(mesh)[cell])


def quality_ratio(reference: PhysicalMesh, candidate: PhysicalMesh) -> tuple[float, float]:
    """``(R_max, R_mean)`` comparing a decomposed mesh against the single-domain one.

    ``R_max = max Q_ref / max Q_cand`` and ``R_mean = mean Q_ref / mean Q_cand``:
    the ratio of the two meshes' worst-cell and average quality.
    """
    if reference.grid != candidate.grid:
        raise GridError("meshes live on different grids")
    q_ref = mesh_quality(reference)
    q_cand = mesh_quality(candidate)
    return float(np.max(q_ref) / np.max(q_cand)), float(np.mean(q_ref) / np.mean(q_cand))


def cellwise_ratio(reference: PhysicalMesh, candidate: PhysicalMesh) -> np.ndarray:
    """Per-cell ``Q_ref / Q_cand``."""
    if reference.grid != candidate.grid:
        raise GridError("meshes live on different grids")
    return mesh_quality(reference) / mesh_quality(candidate)


def linf_error(u: np.ndarray, mesh: PhysicalMesh, exact, t: float) -> float:
    return float(np.max(np.abs(np.asarray(u) - exact(mesh.x, mesh.y, t))))


def quality_report(candidate: PhysicalMesh, reference: PhysicalMesh | None = None, u: np.ndarray | None = None,
                   exact=None, **metadata) -> QualityReport:
    rep = QualityReport(mesh_quality(candidate), metadata=dict(metadata, time=candidate.time))
    if reference is not None:
        rep.r_max, rep.r_mean = quality_ratio(reference, candidate)
    if u is not None and exact is not None:
        rep.l_inf = linf_error(u, candidate, exact, candidate.time)
    return rep
