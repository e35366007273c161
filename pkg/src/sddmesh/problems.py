"""The four coupled test problems: initial data, density input and physics step."""

from __future__ import annotations

import math

import numpy as np

from sddmesh.grid import PhysicalDomain, PhysicalMesh
from sddmesh.physics import PhysState, burgers_exact, step_burgers, step_shallow_water

PROBLEMS = ("burgers-dirichlet", "five-ring", "burgers-periodic", "shallow-water")


def five_ring(x, y, R: float = 30.0):
    """Sum of five tanh rings of radius^2 1/8 centred at the origin and (+-1/2, +-1/2)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    out = np.tanh(R * (x * x + y * y - 0.125))
    for cx in (-0.5, 0.5):
        for cy in (-0.5, 0.5):
            out = out + np.tanh(R * ((x - cx) ** 2 + (y - cy) ** 2 - 0.125))
    return out


def water_pile(x, y, base: float, height: float, radius: float, center=(math.pi, math.pi)):
    r2 = (np.asarray(x) - center[0]) ** 2 + (np.asarray(y) - center[1]) ** 2
    return base + (height - base) * np.exp(-r2 / radius**2)


class Problem:
    name = ""
    periodic = False
    has_exact = False

    def __init__(self, cfg):
        self.cfg = cfg

    def domain(self) -> PhysicalDomain:
        raise NotImplementedError

    def initial_state(self, mesh: PhysicalMesh, t0: float) -> PhysState:
        raise NotImplementedError

    def density_input(self, state: PhysState, mesh: PhysicalMesh) -> np.ndarray:
        return state.u

    def step(self, state: PhysState, mesh_n: PhysicalMesh, mesh_np1: PhysicalMesh, dt: float) -> PhysState:
        raise NotImplementedError

    def exact(self, x, y, t):
        raise NotImplementedError(f"{self.name} has no exact solution")


class BurgersDirichlet(Problem):
    name = "burgers-dirichlet"
    has_exact = True

    def domain(self):
        return PhysicalDomain(1.0, 1.0)

    def exact(self, x, y, t):
        return burgers_exact(x, y, t, self.cfg.nu)

    def initial_state(self, mesh, t0):
        return PhysState(t0, self.exact(mesh.x, mesh.y, t0))

    def step(self, state, mesh_n, mesh_np1, dt):
        return step_burgers(state, mesh_n, mesh_np1, dt, self.cfg.nu, boundary=self.exact)


class FiveRing(Problem):
    """Prescribed, time-independent field; only the mesh evolves."""

    name = "five-ring"
    periodic = True

    def domain(self):
        return PhysicalDomain(2.0, 2.0, True, True, -1.0, -1.0)

    def initial_state(self, mesh, t0):
        return PhysState(t0, five_ring(mesh.x, mesh.y, self.cfg.ring_r))

    def step(self, state, mesh_n, mesh_np1, dt):
        return PhysState(state.time + dt, five_ring(mesh_np1.x, mesh_np1.y, self.cfg.ring_r))


class BurgersPeriodic(Problem):
    name = "burgers-periodic"
    periodic = True

    def domain(self):
        return PhysicalDomain(2 * math.pi, 2 * math.pi, True, True)

    def initial_state(self, mesh, t0):
        c = self.cfg
        return PhysState(t0, c.u0 + c.amplitude * np.sin(mesh.x + mesh.y - 2 * math.pi))

    def step(self, state, mesh_n, mesh_np1, dt):
        return step_burgers(state, mesh_n, mesh_np1, dt, self.cfg.nu)


class ShallowWater(Problem):
    name = "shallow-water"
    periodic = True

    def domain(self):
        return PhysicalDomain(2 * math.pi, 2 * math.pi, True, True)

    def initial_state(self, mesh, t0):
        c = self.cfg
        h = water_pile(mesh.x, mesh.y, c.pile_base, c.pile_height, c.pile_radius)
        z = np.zeros_like(h)
        return PhysState(t0, z, z.copy(), h)

    def density_input(self, state, mesh):
        return state.h

    def step(self, state, mesh_n, mesh_np1, dt):
        return step_shallow_water(state, mesh_n, mesh_np1, dt)


_REGISTRY = {cls.name: cls for cls in (BurgersDirichlet, FiveRing, BurgersPeriodic, ShallowWater)}


def get_problem(cfg) -> Problem:
    try:
        return _REGISTRY[cfg.problem](cfg)
    except KeyError:
        raise ValueError(f"unknown problem {cfg.problem!r}; choose from {', '.join(PROBLEMS)}") from None
