"""Quasi-Lagrangian physical solvers on moving meshes.

Both solvers discretise the PDE in computational coordinates with centered
differences and advance it with the trapezoidal rule. The implicit stage is
solved by fixed-point iteration. With mesh velocity ``xdot`` the time
derivative along a moving node is ``du/dt = u_t + xdot . grad u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from sddmesh.density import computational_gradient
from sddmesh.grid import ComputationalGrid, MeshTanglingError, PhysicalMesh

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricTerms:
    """Nodal derivatives of the mesh map, plus compact differences across cell faces.

    ``face_xi`` holds ``(x_{i+1} - x_i, y_{i+1} - y_i) / dxi`` and ``face_eta``
    the same along ``eta``; on periodic axes the seam face is included.
    """

    x_xi: np.ndarray
    x_eta: np.ndarray
    y_xi: np.ndarray
    y_eta: np.ndarray
    jac: np.ndarray
    face_xi: tuple[np.ndarray, np.ndarray] | None = None
    face_eta: tuple[np.ndarray, np.ndarray] | None = None


@dataclass
class PhysState:
    """Nodal physical unknowns. Burgers uses ``u``; shallow water ``u, v, h``."""

    time: float
    u: np.ndarray
    v: np.ndarray | None = None
    h: np.ndarray | None = None

    @property
    def is_shallow_water(self) -> bool:
        return self.h is not None

    def copy(self) -> "PhysState":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return PhysState(self.time, self.u.copy(), cp(self.v), cp(self.h))


def _half(a: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    # midpoint averages between node k and k+1; periodic axes also get the seam face
    if periodic:
        return 0.5 * (a + np.roll(a, -1, axis=axis))
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis], hi[axis] = slice(None, -1), slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def _forward(a: np.ndarray, axis: int, periodic: bool, h: float, offset: float = 0.0) -> np.ndarray:
    """``(a_{k+1} - a_k) / h``; ``offset`` is the jump across a periodic seam."""
    if periodic:
        nxt = np.roll(a, -1, axis=axis)
        if offset:
            seam = [slice(None)] * a.ndim
            seam[axis] = -1
            nxt[tuple(seam)] += offset
        return (nxt - a) / h
    return np.diff(a, axis=axis) / h


def metric_terms(mesh: PhysicalMesh) -> MetricTerms:
    d = mesh.domain
    # first-order normals at non-periodic edges: the second-order one-sided formula
    # turns negative once neighbouring cells differ in size by more than 3x
    x_xi, x_eta = computational_gradient(mesh.x, mesh.grid, (d.Lx, 0.0), edge_order=1)
    y_xi, y_eta = computational_gradient(mesh.y, mesh.grid, (0.0, d.Ly), edge_order=1)
    jac = x_xi * y_eta - x_eta * y_xi
    if not np.all(jac > 0):
        i, j = np.unravel_index(np.argmin(jac), jac.shape)
        raise MeshTanglingError(f"non-positive Jacobian {jac[i, j]:.3e} at node ({i},{j}), t={mesh.time:.6g}")
    g = mesh.grid
    face_xi = (_forward(mesh.x, 0, g.periodic_x, g.dxi, d.Lx), _forward(mesh.y, 0, g.periodic_x, g.dxi))
    face_eta = (_forward(mesh.x, 1, g.periodic_y, g.deta), _forward(mesh.y, 1, g.periodic_y, g.deta, d.Ly))
    return MetricTerms(x_xi, x_eta, y_xi, y_eta, jac, face_xi, face_eta)


def physical_gradient(f: np.ndarray, m: MetricTerms, grid: ComputationalGrid) -> tuple[np.ndarray, np.ndarray]:
    """Chain rule: ``f_x = (f_xi y_eta - f_eta y_xi)/J``, ``f_y = (x_xi f_eta - x_eta f_xi)/J``.

    Uses the same stencils as :func:`metric_terms`, so fields linear in
    ``(x, y)`` are differentiated exactly at every node.
    """
    f_xi, f_eta = computational_gradient(f, grid, edge_order=1)
    return (
        (f_xi * m.y_eta - f_eta * m.y_xi) / m.jac,
        (m.x_xi * f_eta - m.x_eta * f_xi) / m.jac,
    )


def nested_laplacian(f: np.ndarray, m: MetricTerms, grid: ComputationalGrid) -> np.ndarray:
    """``f_xx + f_yy`` by applying :func:`physical_gradient` twice (2h-wide stencil)."""
    fx, fy = physical_gradient(f, m, grid)
    fxx, _ = physical_gradient(fx, m, grid)
    _, fyy = physical_gradient(fy, m, grid)
    return fxx + fyy


def _faces_divergence(flux: np.ndarray, axis: int, periodic: bool, h: float, n: int) -> np.ndarray:
    """Node-centred difference of face fluxes; zero on non-periodic edge nodes."""
    if periodic:
        return (flux - np.roll(flux, 1, axis=axis)) / h
    out_shape = list(flux.shape)
    out_shape[axis] = n
    out = np.zeros(out_shape)
    inner = [slice(None)] * flux.ndim
    inner[axis] = slice(1, -1)
    out[tuple(inner)] = np.diff(flux, axis=axis) / h
    return out


def compact_laplacian(f: np.ndarray, m: MetricTerms, grid: ComputationalGrid) -> np.ndarray:
    """``f_xx + f_yy`` in conservative form on the 9-point computational stencil.

    ``J lap f = d_xi[(a f_xi - b f_eta)/J] + d_eta[(c f_eta - b f_xi)/J]`` with
    ``a = x_eta^2 + y_eta^2``, ``b = x_xi x_eta + y_xi y_eta``, ``c = x_xi^2 + y_xi^2``.
    Normal derivatives on cell faces use adjacent nodes only, so the operator
    damps the odd-even mode that the nested form cannot see. Values on
    non-periodic edge nodes are meaningless (returned as 0).
    """
    if m.face_xi is None or m.face_eta is None:
        raise ValueError("compact Laplacian needs face metrics (build MetricTerms with metric_terms)")
    f = np.asarray(f, dtype=float)
    px, py = grid.periodic_x, grid.periodic_y
    f_xi, f_eta = computational_gradient(f, grid, edge_order=1)

    # xi-faces: normal derivatives compact, tangential ones averaged from the nodes
    x_n, y_n = m.face_xi
    x_t, y_t = _half(m.x_eta, 0, px), _half(m.y_eta, 0, px)
    jac = x_n * y_t - x_t * y_n
    flux_xi = ((x_t**2 + y_t**2) * _forward(f, 0, px, grid.dxi) - (x_n * x_t + y_n * y_t) * _half(f_eta, 0, px)) / jac

    x_n, y_n = m.face_eta
    x_t, y_t = _half(m.x_xi, 1, py), _half(m.y_xi, 1, py)
    jac = x_t * y_n - x_n * y_t
    flux_eta = ((x_t**2 + y_t**2) * _forward(f, 1, py, grid.deta) - (x_n * x_t + y_n * y_t) * _half(f_xi, 1, py)) / jac
    div = (_faces_divergence(flux_xi, 0, px, grid.dxi, grid.nx)
           + _faces_divergence(flux_eta, 1, py, grid.deta, grid.ny))
    out = div / m.jac
    if not py:
        out[:, 0] = out[:, -1] = 0.0
    if not px:
        out[0, :] = out[-1, :] = 0.0
    return out


LAPLACIANS = {"compact": compact_laplacian, "nested": nested_laplacian}


def physical_laplacian(f: np.ndarray, m: MetricTerms, grid: ComputationalGrid, form: str = "compact") -> np.ndarray:
    try:
        op = LAPLACIANS[form]
    except KeyError:
        raise ValueError(f"unknown Laplacian form {form!r}; choose from {', '.join(LAPLACIANS)}") from None
    return op(f, m, grid)


def mesh_velocity(mesh_n: PhysicalMesh, mesh_np1: PhysicalMesh, dt: float) -> tuple[np.ndarray, np.ndarray]:
    return (mesh_np1.x - mesh_n.x) / dt, (mesh_np1.y - mesh_n.y) / dt


def burgers_exact(x, y, t, nu):
    """Traveling-front solution ``1 / (1 + exp((x + y - t) / (2 nu)))``."""
    arg = (np.asarray(x, float) + np.asarray(y, float) - t) / (2.0 * nu)
    # exp overflows past ~709; the front has long since saturated by then
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(np.minimum(arg, 700.0)))


def _trapezoidal(
    unknowns: list[np.ndarray],
    rhs: Callable[[list[np.ndarray], MetricTerms], list[np.ndarray]],
    m_n: MetricTerms,
    m_np1: MetricTerms,
    dt: float,
    fixed: np.ndarray | None,
    fixed_values: list[np.ndarray] | None,
    tol: float,
    max_iter: int,
) -> tuple[list[np.ndarray], list[float]]:
    """Solve ``w = w_n + dt/2 (F(w_n) + F(w))`` by damped fixed-point iteration."""
    f_n = rhs(unknowns, m_n)
    base = [w + 0.5 * dt * f for w, f in zip(unknowns, f_n)]
    scale = max(1.0, max(float(np.max(np.abs(w))) for w in unknowns))

    def apply(ws):
        out = [b + 0.5 * dt * f for b, f in zip(base, rhs(ws, m_np1))]
        if fixed is not None:
            for o, fv in zip(out, fixed_values):
                o[fixed] = fv[fixed]
        return out

    current = [w.copy() for w in unknowns]
    if fixed is not None:
        for c, fv in zip(current, fixed_values):
            c[fixed] = fv[fixed]
    damping = 1.0
    history: list[float] = []
    for _ in range(max_iter):
        target = apply(current)
        res = max(float(np.max(np.abs(t - c))) for t, c in zip(target, current))
        if not np.isfinite(res):
            raise ConvergenceError("trapezoidal iteration produced non-finite values")
        if history and res > history[-1] and damping == 1.0:
            damping = 0.5
        history.append(res)
        current = [c + damping * (t - c) for t, c in zip(target, current)]
        if res <= tol * scale:
            return current, history
    if history[-1] > 1e-6 * scale:
        raise ConvergenceError(f"trapezoidal iteration stalled at residual {history[-1]:.3e}")
    log.debug("trapezoidal iteration stopped at residual %.3e after %d sweeps", history[-1], max_iter)
    return current, history


def _dirichlet_mask(grid: ComputationalGrid) -> np.ndarray | None:
    if grid.fully_periodic:
        return None
    mask = np.zeros(grid.shape, dtype=bool)
    if not grid.periodic_x:
        mask[0, :] = mask[-1, :] = True
    if not grid.periodic_y:
        mask[:, 0] = mask[:, -1] = True
    return mask


def step_burgers(
    state: PhysState,
    mesh_n: PhysicalMesh,
    mesh_np1: PhysicalMesh,
    dt: float,
    nu: float,
    boundary: Callable | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    history: list | None = None,
    laplacian: str = "compact",
    convection: str = "flux",
) -> PhysState:
    """One step of ``u_t + (u^2/2)_x + (u^2/2)_y = nu (u_xx + u_yy)`` on a moving mesh.

    ``boundary(x, y, t)`` supplies Dirichlet values at non-periodic edges;
    ``laplacian`` selects the viscous stencil (see :data:`LAPLACIANS`).
    ``convection="flux"`` differences ``u^2/2`` (markedly less dispersive at an
    under-resolved front); ``"advective"`` differences ``u`` and multiplies by ``u``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if convection not in ("flux", "advective"):
        raise ValueError(f"unknown convection form {convection!r}")
    grid = mesh_n.grid
    xdot, ydot = mesh_velocity(mesh_n, mesh_np1, dt)

    def rhs(ws, m):
        (u,) = ws
        ux, uy = physical_gradient(u, m, grid)
        lap = physical_laplacian(u, m, grid, laplacian)
        if convection == "flux":
            fx, fy = physical_gradient(0.5 * u * u, m, grid)
            conv = fx + fy
        else:
            conv = u * (ux + uy)
        return [xdot * ux + ydot * uy - conv + nu * lap]

    mask = _dirichlet_mask(grid)
    fixed_values = None
    if mask is not None:
        if boundary is None:
            raise ValueError("non-periodic Burgers needs boundary values")
        fixed_values = [np.asarray(boundary(mesh_np1.x, mesh_np1.y, state.time + dt), dtype=float)]
    (u,), hist = _trapezoidal([state.u], rhs, metric_terms(mesh_n), metric_terms(mesh_np1), dt, mask,
                              fixed_values, tol, max_iter)
    if history is not None:
        history.extend(hist)
    return PhysState(state.time + dt, u)


def step_shallow_water(
    state: PhysState,
    mesh_n: PhysicalMesh,
    mesh_np1: PhysicalMesh,
    dt: float,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> PhysState:
    """One step of the nondimensional shallow-water equations (periodic meshes)."""
    if not state.is_shallow_water:
        raise ValueError("state has no (u, v, h) triple")
    grid = mesh_n.grid
    if not grid.fully_periodic:
        raise ValueError("shallow water solver needs a fully periodic mesh")
    xdot, ydot = mesh_velocity(mesh_n, mesh_np1, dt)

    def rhs(ws, m):
        u, v, h = ws
        ux, uy = physical_gradient(u, m, grid)
        vx, vy = physical_gradient(v, m, grid)
        hx, hy = physical_gradient(h, m, grid)
        return [
            xdot * ux + ydot * uy - (u * ux + v * uy + hx),
            xdot * vx + ydot * vy - (u * vx + v * vy + hy),
            xdot * hx + ydot * hy - (u * hx + v * hy + h * (ux + vy)),
        ]

    (u, v, h), _ = _trapezoidal([state.u, state.v, state.h], rhs, metric_terms(mesh_n),
                                metric_terms(mesh_np1), dt, None, None, tol, max_iter)
    if not np.all(h > 0):
        raise ValueError(f"water height became non-positive at t={state.time + dt:.6g}")
    return replace(state, time=state.time + dt, u=u, v=v, h=h)


def total_mass(h: np.ndarray, mesh: PhysicalMesh) -> float:
    """``sum h J dxi deta`` over the nodes of a periodic mesh."""
    m = metric_terms(mesh)
    return float(np.sum(h * m.jac) * mesh.grid.dxi * mesh.grid.deta)
