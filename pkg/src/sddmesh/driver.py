"""Alternating mesh/physics time stepping, with and without stochastic decomposition.

Each step freezes the density at ``(u^n, x^n)``, moves the mesh to ``t^{n+1}``
and then advances the physical PDE from the old mesh to the new one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from sddmesh.density import DensityConfig, DensityField, build_arclength_density
from sddmesh.grid import (
    Decomposition,
    MeshTanglingError,
    PhysicalMesh,
    decompose,
    extract_box,
    insert_box,
    make_grid,
)
from sddmesh.meshpde import (
    DEFAULT_MAX_SUBSTEPS,
    BoundaryData,
    advance_block,
    step_boundary_mesh_1d,
)
from sddmesh.physics import PhysState
from sddmesh.problems import PROBLEMS, get_problem
from sddmesh.stochastic import McConfig, PointEstimate, estimate_nodes

log = logging.getLogger(__name__)

# published parameters for each experiment; anything here can be overridden
PROBLEM_DEFAULTS: dict[str, dict] = {
    "burgers-dirichlet": dict(dt=1e-3, t0=0.25, nu=0.005, mc=McConfig(10_000, 10),
                              density=DensityConfig(adaptive_c=10.0), initial_mesh="adapted"),
    # one smoothing pass: unsmoothed, the ring-edge density gradient feeds a grid-scale
    # instability that tangles the mesh within a few steps
    "five-ring": dict(dt=5e-4, t0=0.0, ring_r=30.0, mc=McConfig(10_000, 10),
                      density=DensityConfig(alpha=0.2, smoothing_passes=1), initial_mesh="uniform"),
    "burgers-periodic": dict(dt=5e-3, t0=0.0, nu=0.001, u0=0.75, amplitude=0.5, mc=McConfig(1_000, 10),
                             density=DensityConfig(adaptive_c=10.0), initial_mesh="uniform"),
    "shallow-water": dict(dt=5e-3, t0=0.0, mc=McConfig(1_000, 10), density=DensityConfig(adaptive_c=10.0),
                          initial_mesh="uniform"),
}


@dataclass(frozen=True)
class SimulationConfig:
    problem: str
    dt: float
    t_final: float
    t0: float = 0.0
    nx: int = 41
    ny: int = 41
    px: int = 1
    py: int = 1
    decompositions: tuple[tuple[int, int], ...] = ((2, 2),)
    mc: McConfig = field(default_factory=McConfig)
    density: DensityConfig = field(default_factory=lambda: DensityConfig(adaptive_c=10.0))
    nu: float = 0.005
    u0: float = 0.75
    amplitude: float = 0.5
    ring_r: float = 30.0
    pile_base: float = 10.0
    pile_height: float = 12.5
    pile_radius: float = 0.5
    initial_mesh: str = "uniform"
    pre_adapt_steps: int = 500
    snapshots: tuple[float, ...] = ()
    threads: int = 1
    max_substeps: int = DEFAULT_MAX_SUBSTEPS
    figures: bool = True

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final > self.t0:
            raise ValueError("t_final must exceed t0")
        n = (self.t_final - self.t0) / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ValueError("dt must divide t_final - t0")
        if self.initial_mesh not in ("uniform", "adapted"):
            raise ValueError("initial_mesh must be 'uniform' or 'adapted'")
        for t in self.snapshots:
            k = (t - self.t0) / self.dt
            if t < self.t0 - 1e-12 or t > self.t_final + 1e-12 or abs(k - round(k)) > 1e-6 * max(1.0, k):
                raise ValueError(f"snapshot time {t} is not a step time in [t0, t_final]")

    @classmethod
    def for_problem(cls, problem: str, **overrides) -> "SimulationConfig":
        if problem not in PROBLEM_DEFAULTS:
            raise ValueError(f"unknown problem {problem!r}")
        return cls(problem=problem, **{**PROBLEM_DEFAULTS[problem], **overrides})

    @property
    def n_steps(self) -> int:
        return int(round((self.t_final - self.t0) / self.dt))

    def step_time(self, m: int) -> float:
        return self.t0 + m * self.dt

    def snapshot_steps(self) -> set[int]:
        return {int(round((t - self.t0) / self.dt)) for t in self.snapshots}


@dataclass
class StepRecord:
    step: int
    time: float
    mesh: PhysicalMesh
    state: PhysState
    estimates: dict[tuple[int, int], PointEstimate] | None = None


@dataclass
class InterfaceSolution:
    values: dict[tuple[int, int], tuple[float, float]]
    estimates: dict[tuple[int, int], PointEstimate]
    interpolated: set[tuple[int, int]]


class SimulationError(RuntimeError):
    """Wraps a failure with the last good record for diagnostics."""

    def __init__(self, msg: str, last: StepRecord | None):
        super().__init__(msg)
        self.last = last


def make_setup(cfg: SimulationConfig):
    problem = get_problem(cfg)
    domain = problem.domain()
    grid = make_grid(cfg.nx, cfg.ny, domain.periodic_x, domain.periodic_y)
    return problem, grid, domain


# -- interface values -----------------------------------------------------------


def _value_at(node, xs, ys, grid, domain, known):
    """Unwrapped coordinate of a (possibly wrapped) line node from known values."""
    i, j = node
    wi, wj = grid.wrap_index(i, j)
    x, y = known[(wi, wj)] if (wi, wj) in known else (xs[wi, wj], ys[wi, wj])
    if grid.periodic_x:
        x += domain.Lx * (i // grid.nx)
    if grid.periodic_y:
        y += domain.Ly * (j // grid.ny)
    return x, y


def select_estimated_nodes(dec: Decomposition, stride: int) -> set[tuple[int, int]]:
    """Interface nodes that get a Monte-Carlo estimate for a given stride."""
    grid = dec.grid
    iface = set(dec.interface_nodes)
    if stride == 1:
        return iface
    count: dict[tuple[int, int], int] = {}
    chosen: set[tuple[int, int]] = set()
    for line in dec.interface_lines():
        members = [grid.wrap_index(*n) for n in line]
        members = [n for n in dict.fromkeys(members) if n in iface]
        for n in members:
            count[n] = count.get(n, 0) + 1
        for k, n in enumerate(members):
            if k % stride == 0 or k == len(members) - 1:
                chosen.add(n)
    chosen.update(n for n, c in count.items() if c > 1)
    return chosen


def stochastic_interface_solve(dec: Decomposition, mesh_n: PhysicalMesh, field: DensityField,
                               bdata: BoundaryData | None, dt: float, mc: McConfig, step: int = 0,
                               threads: int = 1, boundary_new: tuple[np.ndarray, np.ndarray] | None = None
                               ) -> InterfaceSolution:
    """Monte-Carlo values on every ``stride``-th interface node, the rest by interpolation.

    ``boundary_new`` carries the global arrays whose physical-boundary ring
    already holds ``t^{n+1}`` values; they anchor interpolation at line ends.
    """
    if dec.trivial or not dec.interface_nodes:
        raise ValueError("decomposition has no interfaces")
    grid, domain = mesh_n.grid, mesh_n.domain
    todo = sorted(select_estimated_nodes(dec, mc.stride))
    est = estimate_nodes(todo, mesh_n, field, dt, mc, step, bdata=bdata, threads=threads)
    values = {n: (e.mean_x, e.mean_y) for n, e in est.items()}
    interpolated: set[tuple[int, int]] = set()
    if len(todo) < len(dec.interface_nodes):
        xs, ys = boundary_new if boundary_new is not None else (mesh_n.x, mesh_n.y)
        iface = set(dec.interface_nodes)
        for line in dec.interface_lines():
            anchors = [k for k, n in enumerate(line)
                       if grid.wrap_index(*n) in values or grid.wrap_index(*n) not in iface]
            for a, b in zip(anchors[:-1], anchors[1:]):
                if b - a < 2:
                    continue
                xa, ya = _value_at(line[a], xs, ys, grid, domain, values)
                xb, yb = _value_at(line[b], xs, ys, grid, domain, values)
                for k in range(a + 1, b):
                    node = line[k]
                    w = (k - a) / (b - a)
                    x, y = xa + w * (xb - xa), ya + w * (yb - ya)
                    i, j = node
                    if grid.periodic_x:
                        x -= domain.Lx * (i // grid.nx)
                    if grid.periodic_y:
                        y -= domain.Ly * (j // grid.ny)
                    wn = grid.wrap_index(i, j)
                    if wn not in values:
                        values[wn] = (x, y)
                        interpolated.add(wn)
    return InterfaceSolution(values, est, interpolated)


# -- mesh stepping --------------------------------------------------------------


def _boundary_lines(mesh: PhysicalMesh, field: DensityField, dt: float, max_substeps: int):
    """New global arrays with the physical boundary advanced by the 1D generator."""
    x, y = mesh.x.copy(), mesh.y.copy()
    rho = field.rho
    x[:, 0] = step_boundary_mesh_1d(mesh.x[:, 0], rho[:, 0], dt, max_substeps)
    x[:, -1] = step_boundary_mesh_1d(mesh.x[:, -1], rho[:, -1], dt, max_substeps)
    y[0, :] = step_boundary_mesh_1d(mesh.y[0, :], rho[0, :], dt, max_substeps)
    y[-1, :] = step_boundary_mesh_1d(mesh.y[-1, :], rho[-1, :], dt, max_substeps)
    return x, y


def step_mesh(mesh: PhysicalMesh, field: DensityField, dt: float, dec: Decomposition, mc: McConfig | None,
              step: int, threads: int = 1, max_substeps: int = DEFAULT_MAX_SUBSTEPS
              ) -> tuple[PhysicalMesh, InterfaceSolution | None]:
    """Advance the mesh one step over a decomposition (1x1 = single domain)."""
    grid, domain = mesh.grid, mesh.domain
    if grid.periodic_x != grid.periodic_y:
        raise ValueError("mixed periodicity is not supported")
    if grid.fully_periodic:
        x_new, y_new = mesh.x.copy(), mesh.y.copy()
        bdata = None
    else:
        x_new, y_new = _boundary_lines(mesh, field, dt, max_substeps)
        bdata = BoundaryData.from_blocks(mesh.x, mesh.y, x_new, y_new)
    iface = None
    if dec.interface_nodes:
        iface = stochastic_interface_solve(dec, mesh, field, bdata, dt, mc, step, threads, (x_new, y_new))
        for (i, j), (vx, vy) in iface.values.items():
            x_new[i, j] = vx
            y_new[i, j] = vy
    out_x, out_y = x_new.copy(), y_new.copy()
    box_periodic = (grid.periodic_x and dec.px == 1, grid.periodic_y and dec.py == 1)
    xo, yo = (domain.Lx, 0.0), (0.0, domain.Ly)
    for box in dec.boxes:
        bx = extract_box(mesh.x, grid, box, xo)
        by = extract_box(mesh.y, grid, box, yo)
        ax = extract_box(field.drift_xi, grid, box)
        ae = extract_box(field.drift_eta, grid, box)
        bc = None
        if not all(box_periodic):
            bc = BoundaryData.from_blocks(bx, by, extract_box(x_new, grid, box, xo), extract_box(y_new, grid, box, yo),
                                          "stochastic-interface" if dec.interface_nodes else "physical-boundary")
        nx_, ny_ = advance_block(bx, by, ax, ae, grid.dxi, grid.deta, dt, bc, box_periodic,
                                 (domain.Lx, domain.Ly), max_substeps)
        mask = np.ones(bx.shape, dtype=bool)
        if not box_periodic[0]:
            mask[0, :] = mask[-1, :] = False
        if not box_periodic[1]:
            mask[:, 0] = mask[:, -1] = False
        insert_box(out_x, nx_, grid, box, mask, xo)
        insert_box(out_y, ny_, grid, box, mask, yo)
    new = PhysicalMesh(out_x, out_y, grid, domain, mesh.time + dt)
    return new, iface


# -- time loop ----------------------------------------------------------------------


def adapted_initial_mesh(cfg: SimulationConfig) -> PhysicalMesh:
    """Relax the mesh generator toward the density of the initial data."""
    problem, grid, domain = make_setup(cfg)
    mesh = PhysicalMesh.uniform(grid, domain, cfg.t0)
    single = decompose(grid, 1, 1)
    for _ in range(cfg.pre_adapt_steps):
        state = problem.initial_state(mesh, cfg.t0)
        field = build_arclength_density(problem.density_input(state, mesh), mesh, cfg.density)
        mesh, _ = step_mesh(mesh, field, cfg.dt, single, None, 0, max_substeps=cfg.max_substeps)
        mesh.time = cfg.t0
    return mesh


def _simulate(cfg: SimulationConfig, px: int, py: int, record_all: bool) -> list[StepRecord]:
    problem, grid, domain = make_setup(cfg)
    dec = decompose(grid, px, py)
    if cfg.initial_mesh == "adapted":
        mesh = adapted_initial_mesh(cfg)
    else:
        mesh = PhysicalMesh.uniform(grid, domain, cfg.t0)
    state = problem.initial_state(mesh, cfg.t0)
    wanted = cfg.snapshot_steps()
    records = [StepRecord(0, cfg.t0, mesh, state)] if (record_all or 0 in wanted) else []
    last = StepRecord(0, cfg.t0, mesh, state)
    for m in range(cfg.n_steps):
        t_next = cfg.step_time(m + 1)
        try:
            field = build_arclength_density(problem.density_input(state, mesh), mesh, cfg.density)
            new_mesh, iface = step_mesh(mesh, field, cfg.dt, dec, cfg.mc, m, cfg.threads, cfg.max_substeps)
            new_mesh.time = t_next
            new_mesh.check_untangled()
            state = problem.step(state, mesh, new_mesh, cfg.dt)
        except (MeshTanglingError, FloatingPointError, ArithmeticError, RuntimeError, ValueError) as exc:
            raise SimulationError(f"{cfg.problem} {px}x{py} failed at step {m + 1} (t={t_next:.6g}): {exc}",
                                  last) from exc
        state.time = t_next
        mesh = new_mesh
        last = StepRecord(m + 1, t_next, mesh, state, iface.estimates if iface else None)
        if record_all or (m + 1) in wanted or m + 1 == cfg.n_steps:
            records.append(last)
    return records


def run_sdd(cfg: SimulationConfig, record_all: bool = False) -> list[StepRecord]:
    """Run with the decomposition ``cfg.px x cfg.py``; records snapshots and the final step."""
    log.info("sdd %s %dx%d, %d steps", cfg.problem, cfg.px, cfg.py, cfg.n_steps)
    return _simulate(cfg, cfg.px, cfg.py, record_all)


def run_reference(cfg: SimulationConfig, record_all: bool = False) -> list[StepRecord]:
    """Deterministic single-domain run of the same coupled problem."""
    log.info("reference %s, %d steps", cfg.problem, cfg.n_steps)
    return _simulate(cfg, 1, 1, record_all)


def record_at(records: list[StepRecord], t: float) -> StepRecord:
    for r in records:
        if math.isclose(r.time, t, rel_tol=0, abs_tol=1e-9):
            return r
    raise KeyError(f"no record at t={t}")

