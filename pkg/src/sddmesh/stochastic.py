"""Monte-Carlo point solver for the frozen-density mesh generator.

The mesh coordinate at a node after one step is an expectation over walkers
obeying ``dPhi = (grad rho / rho) dt + sqrt(2) dW`` started at the node.
Survivors contribute the previous mesh at their final position; walkers
that leave the unit square contribute boundary data at the exit point,
evaluated at the time obtained by running the walker clock backwards from
``t^{n+1}``.

Random numbers come from a Philox stream keyed by
``(seed, step, i, j)``; within a stream draws are laid out replicate-major
and then by sub-step, so any schedule over nodes reproduces the same paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numba
import numpy as np

from sddmesh.density import DensityField
from sddmesh.grid import ComputationalGrid, GridError, PhysicalMesh
from sddmesh.meshpde import BoundaryData

SIDES = ("west", "east", "south", "north")
NO_EXIT = -1


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 10_000
    substeps: int = 1
    seed: int = 20150601
    stride: int = 1

    def __post_init__(self):
        if self.n_samples < 1 or self.substeps < 1 or self.stride < 1:
            raise ValueError("n_samples, substeps and stride must all be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def dt_s(self, dt: float) -> float:
        return dt / self.substeps


@dataclass(frozen=True)
class WalkerState:
    xi: float
    eta: float
    clock: float = 0.0
    winding: tuple[int, int] = (0, 0)
    alive: bool = True


@dataclass(frozen=True)
class ExitEvent:
    exit_time: float
    xi: float
    eta: float
    side: str


@dataclass(frozen=True)
class PointEstimate:
    mean_x: float
    mean_y: float
    stderr_x: float
    stderr_y: float
    n_samples: int
    exit_fraction: float = 0.0


def walker_stream(seed: int, step: int, node: tuple[int, int]) -> np.random.Generator:
    """Counter-based generator for one (time step, node) work item."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, step, node[0], node[1]])))


# -- jitted kernels -----------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _lerp(a, b, t):
    return a + t * (b - a)


@numba.njit(cache=True, nogil=True)
def _cell(s, n, h, periodic):
    t = s / h
    if periodic:
        t = t % n
        i = min(int(math.floor(t)), n - 1)
        return i, t - i, (i + 1) % n
    t = min(max(t, 0.0), n - 1.0)
    i = min(int(math.floor(t)), n - 2)
    return i, t - i, i + 1


@numba.njit(cache=True, nogil=True)
def _drift(p0, p1, rho, gxi, geta, nx, ny, dxi, deta, px, py):
    i, a, i1 = _cell(p0, nx, dxi, px)
    j, b, j1 = _cell(p1, ny, deta, py)
    r = _lerp(_lerp(rho[i, j], rho[i1, j], a), _lerp(rho[i, j1], rho[i1, j1], a), b)
    g0 = _lerp(_lerp(gxi[i, j], gxi[i1, j], a), _lerp(gxi[i, j1], gxi[i1, j1], a), b)
    g1 = _lerp(_lerp(geta[i, j], geta[i1, j], a), _lerp(geta[i, j1], geta[i1, j1], a), b)
    return g0 / r, g1 / r


@numba.njit(cache=True, nogil=True)
def _stencil(s, n, h, periodic, w):
    # 4-point Lagrange weights into w; returns the first stencil index
    t = s / h
    if periodic:
        t = t % n
        i = min(int(math.floor(t)), n - 1)
        base = i - 1
    else:
        t = min(max(t, 0.0), n - 1.0)
        i = min(int(math.floor(t)), n - 2)
        base = min(max(i - 1, 0), n - 4)
    u = t - base
    w[0] = -(u - 1) * (u - 2) * (u - 3) / 6.0
    w[1] = u * (u - 2) * (u - 3) / 2.0
    w[2] = -u * (u - 1) * (u - 3) / 2.0
    w[3] = u * (u - 1) * (u - 2) / 6.0
    return base


@numba.njit(cache=True, nogil=True)
def _bicubic(values, nx, ny, dxi, deta, px, py, pos):
    """Jitted twin of ``density.sample_bicubic`` at each row of ``pos``."""
    out = np.empty(pos.shape[0])
    wx = np.empty(4)
    wy = np.empty(4)
    rows = np.empty(4)
    for k in range(pos.shape[0]):
        bi = _stencil(pos[k, 0], nx, dxi, px, wx)
        bj = _stencil(pos[k, 1], ny, deta, py, wy)
        for a in range(4):
            ia = (bi + a) % nx
            ref = values[ia, (bj + 1) % ny]
            acc = 0.0
            for b in range(4):
                acc += wy[b] * (values[ia, (bj + b) % ny] - ref)
            rows[a] = ref + acc
        acc = 0.0
        for a in range(4):
            acc += wx[a] * (rows[a] - rows[1])
        out[k] = rows[1] + acc
    return out


@numba.njit(cache=True, nogil=True)
def _exit_check(p0, p1, q0, q1, dt_s, u0, u1):
    """Return (side, fraction of the sub-step, exit xi, exit eta); side -1 = none.

    Sides: 0 west (xi=0), 1 east (xi=1), 2 south (eta=0), 3 north (eta=1).
    """
    if q0 < 0.0 or q0 > 1.0 or q1 < 0.0 or q1 > 1.0:
        best = 2.0
        side = -1
        if q0 < 0.0:
            f = p0 / (p0 - q0)
            if f < best:
                best, side = f, 0
        elif q0 > 1.0:
            f = (1.0 - p0) / (q0 - p0)
            if f < best:
                best, side = f, 1
        if q1 < 0.0:
            f = p1 / (p1 - q1)
            if f < best:
                best, side = f, 2
        elif q1 > 1.0:
            f = (1.0 - p1) / (q1 - p1)
            if f < best:
                best, side = f, 3
        e0 = p0 + best * (q0 - p0)
        e1 = p1 + best * (q1 - p1)
        if side == 0:
            e0 = 0.0
        elif side == 1:
            e0 = 1.0
        elif side == 2:
            e1 = 0.0
        else:
            e1 = 1.0
        return side, best, min(max(e0, 0.0), 1.0), min(max(e1, 0.0), 1.0)
    # both ends inside: Brownian-bridge crossing test against the nearer edge per axis
    side = -1
    pbest = 0.0
    m0 = 0.5 * (p0 + q0)
    m1 = 0.5 * (p1 + q1)
    if m0 < 0.5:
        prob, s0 = math.exp(-p0 * q0 / dt_s), 0
    else:
        prob, s0 = math.exp(-(1.0 - p0) * (1.0 - q0) / dt_s), 1
    if u0 < prob:
        side, pbest = s0, prob
    if m1 < 0.5:
        prob, s1 = math.exp(-p1 * q1 / dt_s), 2
    else:
        prob, s1 = math.exp(-(1.0 - p1) * (1.0 - q1) / dt_s), 3
    if u1 < prob and prob > pbest:
        side = s1
    if side == -1:
        return -1, 1.0, q0, q1
    e0, e1 = m0, m1
    if side == 0:
        e0 = 0.0
    elif side == 1:
        e0 = 1.0
    elif side == 2:
        e1 = 0.0
    else:
        e1 = 1.0
    return side, 0.5, e0, e1


@numba.njit(cache=True, nogil=True)
def _walk(xi0, eta0, rho, gxi, geta, nx, ny, dxi, deta, px, py, dt_s, normals, uniforms, dirichlet):
    n, k_steps = normals.shape[0], normals.shape[1]
    pos = np.empty((n, 2))
    wind = np.zeros((n, 2), dtype=np.int64)
    side = np.full(n, -1, dtype=np.int64)
    tau = np.full(n, k_steps * dt_s)
    sig = math.sqrt(2.0 * dt_s)
    for r in range(n):
        p0, p1 = xi0, eta0
        w0, w1 = 0, 0
        for k in range(k_steps):
            d0, d1 = _drift(p0, p1, rho, gxi, geta, nx, ny, dxi, deta, px, py)
            q0 = p0 + d0 * dt_s + sig * normals[r, k, 0]
            q1 = p1 + d1 * dt_s + sig * normals[r, k, 1]
            if not (math.isfinite(q0) and math.isfinite(q1)):
                raise FloatingPointError("walker position became non-finite")
            if px:
                s = math.floor(q0)
                q0 -= s
                w0 += int(s)
            if py:
                s = math.floor(q1)
                q1 -= s
                w1 += int(s)
            if dirichlet:
                sd, frac, e0, e1 = _exit_check(p0, p1, q0, q1, dt_s, uniforms[r, k, 0], uniforms[r, k, 1])
                if sd >= 0:
                    side[r] = sd
                    tau[r] = (k + frac) * dt_s
                    p0, p1 = e0, e1
                    break
            p0, p1 = q0, q1
        pos[r, 0] = p0
        pos[r, 1] = p1
        wind[r, 0] = w0
        wind[r, 1] = w1
    return pos, wind, side, tau


# -- single-walker API ---------------------------------------------------------


def _drift_args(field: DensityField):
    g = field.grid
    return (field.rho, field.grad_xi, field.grad_eta, g.nx, g.ny, g.dxi, g.deta, g.periodic_x, g.periodic_y)


def advance_walker(w: WalkerState, field: DensityField, dt_s: float, gauss) -> WalkerState:
    """One Euler-Maruyama sub-step with periodic wrapping."""
    if not w.alive:
        raise ValueError("cannot advance a dead walker")
    d0, d1 = _drift(w.xi, w.eta, *_drift_args(field))
    if not (np.isfinite(d0) and np.isfinite(d1)):
        raise FloatingPointError("non-finite drift")
    sig = math.sqrt(2.0 * dt_s)
    q0 = w.xi + d0 * dt_s + sig * float(gauss[0])
    q1 = w.eta + d1 * dt_s + sig * float(gauss[1])
    w0, w1 = w.winding
    g = field.grid
    if g.periodic_x:
        s = math.floor(q0)
        q0, w0 = q0 - s, w0 + int(s)
    if g.periodic_y:
        s = math.floor(q1)
        q1, w1 = q1 - s, w1 + int(s)
    return WalkerState(q0, q1, w.clock + dt_s, (w0, w1), True)


def bridge_crossing_probability(d_prev: float, d_next: float, dt_s: float) -> float:
    """Probability that a bridge with variance ``2 dt_s`` touches a wall between two inside points."""
    return math.exp(-d_prev * d_next / dt_s)


def exit_test(prev, nxt, grid: ComputationalGrid, dt_s: float, u, clock: float = 0.0) -> ExitEvent | None:
    """Detect a boundary exit during the sub-step ``prev -> nxt``.

    ``u`` is one uniform draw per axis (a scalar is used for both). Certain
    exits are placed on the segment; bridge-detected ones at the projection
    of the segment midpoint, half-way through the sub-step.
    """
    if grid.fully_periodic:
        raise ValueError("exit test needs a non-periodic direction")
    p0, p1 = float(prev[0]), float(prev[1])
    if not (0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0):
        raise GridError("previous walker position lies outside the domain")
    u0, u1 = (float(u), float(u)) if np.ndim(u) == 0 else (float(u[0]), float(u[1]))
    side, frac, e0, e1 = _exit_check(p0, p1, float(nxt[0]), float(nxt[1]), dt_s, u0, u1)
    if side < 0:
        return None
    return ExitEvent(clock + frac * dt_s, e0, e1, SIDES[side])


# -- estimators ---------------------------------------------------------------


def _summarize(xs: np.ndarray, ys: np.ndarray, exit_fraction: float) -> PointEstimate:
    n = xs.shape[0]
    # shifted by the first sample: a constant sample gives its value and zero spread exactly
    dx, dy = xs - xs[0], ys - ys[0]
    mx = xs[0] + float(np.mean(dx))
    my = ys[0] + float(np.mean(dy))
    if n > 1:
        sx = float(np.std(dx, ddof=1)) / math.sqrt(n)
        sy = float(np.std(dy, ddof=1)) / math.sqrt(n)
    else:
        sx = sy = 0.0
    if not (np.isfinite(mx) and np.isfinite(my)):
        raise FloatingPointError("non-finite estimate")
    return PointEstimate(float(mx), float(my), sx, sy, n, exit_fraction)


def _sample(values: np.ndarray, grid: ComputationalGrid, pos: np.ndarray) -> np.ndarray:
    if grid.nx < 4 or grid.ny < 4:
        raise GridError("bicubic sampling needs at least 4 nodes per direction")
    return _bicubic(np.ascontiguousarray(values, dtype=float), grid.nx, grid.ny, grid.dxi, grid.deta,
                    grid.periodic_x, grid.periodic_y, np.ascontiguousarray(pos))


def _draws(mc: McConfig, stream: np.random.Generator, dirichlet: bool):
    normals = stream.standard_normal((mc.n_samples, mc.substeps, 2))
    if dirichlet:
        uniforms = stream.random((mc.n_samples, mc.substeps, 2))
    else:
        uniforms = np.zeros((1, 1, 2))
    return normals, uniforms


def _start(node: tuple[int, int], grid: ComputationalGrid) -> tuple[float, float]:
    i, j = grid.wrap_index(*node)
    return i * grid.dxi, j * grid.deta


def estimate_point_dirichlet(start: tuple[int, int], mesh_n: PhysicalMesh, field: DensityField,
                             bdata: BoundaryData, dt: float, mc: McConfig,
                             stream: np.random.Generator) -> PointEstimate:
    """Estimate ``(x, y)`` at ``t^n + dt`` for an interior node of a non-periodic grid.

    ``bdata`` holds the global boundary values at ``t^n`` and ``t^{n+1}``.
    """
    grid = mesh_n.grid
    if grid.periodic_x or grid.periodic_y:
        raise ValueError("Dirichlet estimator needs a non-periodic grid")
    i, j = start
    if not (0 < i < grid.nx - 1 and 0 < j < grid.ny - 1):
        raise GridError(f"node {start} is not interior")
    dt_s = mc.dt_s(dt)
    normals, uniforms = _draws(mc, stream, True)
    xi0, eta0 = _start(start, grid)
    pos, _, side, tau = _walk(xi0, eta0, *_drift_args(field), dt_s, normals, uniforms, True)
    xs = np.empty(mc.n_samples)
    ys = np.empty(mc.n_samples)
    alive = side < 0
    if np.any(alive):
        xs[alive] = _sample(mesh_n.x, grid, pos[alive])
        ys[alive] = _sample(mesh_n.y, grid, pos[alive])
    theta = 1.0 - tau / dt
    for code, name in enumerate(SIDES):
        sel = side == code
        if np.any(sel):
            s = pos[sel, 1] if code < 2 else pos[sel, 0]
            xs[sel], ys[sel] = bdata.sample(name, s, theta[sel])
    return _summarize(xs, ys, float(np.mean(~alive)))


def estimate_point_periodic(start: tuple[int, int], mesh_n: PhysicalMesh, field: DensityField, dt: float,
                            mc: McConfig, stream: np.random.Generator) -> PointEstimate:
    """Estimate ``(x, y)`` at ``t^n + dt`` on a fully periodic grid.

    The previous mesh is evaluated through its periodic extension, so the
    result is the unwrapped coordinate: a start node given as ``i + nx``
    yields the estimate at ``i`` shifted by ``Lx``.
    """
    grid = mesh_n.grid
    if not grid.fully_periodic:
        raise ValueError("periodic estimator needs a fully periodic grid")
    d = mesh_n.domain
    dt_s = mc.dt_s(dt)
    normals, uniforms = _draws(mc, stream, False)
    xi0, eta0 = _start(start, grid)
    pos, wind, _, _ = _walk(xi0, eta0, *_drift_args(field), dt_s, normals, uniforms, False)
    X, Y = mesh_n.displacement()
    xs = d.x0 + d.Lx * (pos[:, 0] + wind[:, 0]) + _sample(X, grid, pos)
    ys = d.y0 + d.Ly * (pos[:, 1] + wind[:, 1]) + _sample(Y, grid, pos)
    est = _summarize(xs, ys, 0.0)
    # whole periods are added after averaging so a shifted start moves the mean by exactly one period
    kx = start[0] // grid.nx
    ky = start[1] // grid.ny
    return replace(est, mean_x=est.mean_x + d.Lx * kx, mean_y=est.mean_y + d.Ly * ky)


def estimate_nodes(nodes, mesh_n: PhysicalMesh, field: DensityField, dt: float, mc: McConfig, step: int,
                   bdata: BoundaryData | None = None, threads: int = 1) -> dict[tuple[int, int], PointEstimate]:
    """Estimate many nodes, each with its own ``(seed, step, node)`` stream."""
    periodic = mesh_n.grid.fully_periodic

    def work(node):
        stream = walker_stream(mc.seed, step, node)
        if periodic:
            return estimate_point_periodic(node, mesh_n, field, dt, mc, stream)
        return estimate_point_dirichlet(node, mesh_n, field, bdata, dt, mc, stream)

    nodes = list(nodes)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, nodes))
    else:
        results = [work(n) for n in nodes]
    return dict(zip(nodes, results))
