"""Acceptance criteria at full experiment scale.

Each test prints exactly one PASS/FAIL line for its criterion (also repeated
in the pytest terminal summary). Lines marked ``note`` are diagnostics that
do not decide anything. Thresholds are fixed here and never adjusted to fit
results; criteria that are out of reach stay red.

Runtime is tens of minutes on one core; ``pytest -m "not slow"`` skips the
large runs.
"""

from __future__ import annotations

import dataclasses
import math
import time

import numba
import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from sddmesh.density import DensityConfig, build_arclength_density, density_from_values, sample_bilinear
from sddmesh.driver import PROBLEM_DEFAULTS, SimulationConfig, SimulationError, make_setup, record_at, run_reference
from sddmesh.driver import run_sdd
from sddmesh.grid import PhysicalDomain, PhysicalMesh, make_grid
from sddmesh.meshpde import BoundaryData, advance_block, step_boundary_mesh_1d, step_mesh_2d
from sddmesh.physics import PhysState, burgers_exact, metric_terms, physical_gradient, step_burgers
from sddmesh.physics import step_shallow_water, total_mass
from sddmesh.problems import get_problem
from sddmesh.quality import linf_error, quality_from_jacobian, quality_ratio
from sddmesh.stochastic import McConfig, bridge_crossing_probability, estimate_point_periodic, exit_test
from sddmesh.stochastic import walker_stream

DECOMPS = ((2, 2), (3, 3), (4, 4))


def verdict(tag: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def note(tag: str, detail: str) -> None:
    line = f"[note] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def fmt_r(r):
    return f"R_max={r[0]:.4f} R_mean={r[1]:.4f}"


# -- criterion 1 ------------------------------------------------------------------


def test_c1_single_subdomain_is_reference():
    start = time.perf_counter()
    same = {}
    for name, d in PROBLEM_DEFAULTS.items():
        cfg = SimulationConfig.for_problem(name, t_final=d["t0"] + 10 * d["dt"])
        a = run_reference(cfg, record_all=True)
        b = run_sdd(dataclasses.replace(cfg, px=1, py=1), record_all=True)
        same[name] = len(a) == len(b) and all(
            np.array_equal(ra.mesh.x, rb.mesh.x) and np.array_equal(ra.mesh.y, rb.mesh.y)
            and np.array_equal(ra.state.u, rb.state.u)
            and (ra.state.h is None or np.array_equal(ra.state.h, rb.state.h))
            for ra, rb in zip(a, b))
    elapsed = time.perf_counter() - start
    ok = all(same.values()) and elapsed < 10.0
    verdict("criterion 1 (1x1 bit-identical to reference, < 10 s)", ok,
            ", ".join(f"{k}={v}" for k, v in same.items()) + f", {elapsed:.1f} s")
    assert ok


# -- criterion 2 ------------------------------------------------------------------


def five_ring_ratios(mc: McConfig) -> dict:
    cfg = SimulationConfig.for_problem("five-ring", t_final=0.05, mc=mc)
    ref = run_reference(cfg)[-1].mesh
    return {d: quality_ratio(ref, run_sdd(dataclasses.replace(cfg, px=d[0], py=d[1]))[-1].mesh) for d in DECOMPS}


@pytest.mark.slow
def test_c2_five_ring_single_substep():
    # one Euler-Maruyama step per mesh step
    res = five_ring_ratios(McConfig(10_000, 1))
    ok = all(r[0] >= 0.98 and r[1] >= 0.99 for r in res.values())
    verdict("criterion 2 (five-ring N=10000 K=1: R_max>=0.98, R_mean>=0.99)", ok,
            "; ".join(f"{d[0]}x{d[1]} {fmt_r(r)}" for d, r in res.items()))
    assert ok


@pytest.mark.slow
def test_c2_five_ring_ten_substeps_note():
    res = five_ring_ratios(McConfig(10_000, 10))
    note("criterion 2 with K=10 (library default)",
         "; ".join(f"{d[0]}x{d[1]} {fmt_r(r)}" for d, r in res.items()))


# -- criterion 3 ------------------------------------------------------------------

TARGET_LINF_2X2 = {0.75: 0.023, 1.0: 0.033}


@pytest.mark.slow
def test_c3_burgers_dirichlet():
    cfg = SimulationConfig.for_problem("burgers-dirichlet", t_final=1.0, snapshots=(0.75, 1.0))
    problem = get_problem(cfg)
    ref = run_reference(cfg)
    sdd = run_sdd(dataclasses.replace(cfg, px=2, py=2))
    parts, ok = [], True
    for t, target in TARGET_LINF_2X2.items():
        a, b = record_at(ref, t), record_at(sdd, t)
        e_sd = linf_error(a.state.u, a.mesh, problem.exact, t)
        e = linf_error(b.state.u, b.mesh, problem.exact, t)
        r = quality_ratio(a.mesh, b.mesh)
        good = 0.5 * target <= e <= 2 * target and r[1] >= 0.97 and r[0] >= 0.93
        ok &= good
        parts.append(f"t={t}: l_inf={e:.4f} (window {0.5 * target:.4f}-{2 * target:.4f}, "
                     f"single domain {e_sd:.4f}) {fmt_r(r)}")
    verdict("criterion 3 (Burgers Dirichlet 2x2 N=10000 K=10: l_inf in [0.5x,2x], R_mean>=0.97, R_max>=0.93)",
            ok, "; ".join(parts))
    assert ok


# -- criteria 4 and 5 -----------------------------------------------------------------


def periodic_ratios(problem, t_final, times):
    """Ratios per (decomposition, time); a decomposed run that fails maps to its error instead."""
    cfg = SimulationConfig.for_problem(problem, t_final=t_final, snapshots=times)
    ref = run_reference(cfg)
    out, failed = {}, {}
    for d in DECOMPS:
        try:
            sdd = run_sdd(dataclasses.replace(cfg, px=d[0], py=d[1]))
        except SimulationError as exc:
            failed[d] = exc
            continue
        for t in times:
            out[(d, t)] = quality_ratio(record_at(ref, t).mesh, record_at(sdd, t).mesh)
    return out, failed, ref


def describe(res, failed):
    parts = [f"{d[0]}x{d[1]} t={t} {fmt_r(r)}" for (d, t), r in res.items()]
    parts += [str(e) for e in failed.values()]
    return "; ".join(parts)


@pytest.mark.slow
def test_c4_periodic_burgers():
    res, failed, _ = periodic_ratios("burgers-periodic", 1.0, (0.85, 1.0))
    ok = not failed and all(r[1] >= 0.99 and r[0] >= 0.97 for r in res.values())
    verdict("criterion 4 (periodic Burgers N=1000: R_mean>=0.99, R_max>=0.97)", ok, describe(res, failed))
    assert ok


@pytest.mark.slow
def test_c5_shallow_water():
    res, failed, ref = periodic_ratios("shallow-water", 0.15, (0.05, 0.15))
    # binding: discrete mass on a stationary uniform periodic mesh
    cfg = SimulationConfig.for_problem("shallow-water", t_final=0.15)
    problem, grid, domain = make_setup(cfg)
    mesh = PhysicalMesh.uniform(grid, domain)
    state = problem.initial_state(mesh, 0.0)
    m0 = total_mass(state.h, mesh)
    drift_static = 0.0
    for _ in range(30):
        state = step_shallow_water(state, mesh, mesh, cfg.dt)
        drift_static = max(drift_static, abs(total_mass(state.h, mesh) - m0) / m0)
    moving = [abs(total_mass(r.state.h, r.mesh) / total_mass(ref[0].state.h, ref[0].mesh) - 1) for r in ref]
    ok = not failed and all(r[1] >= 0.99 and r[0] >= 0.95 for r in res.values()) and drift_static < 1e-10
    verdict("criterion 5 (shallow water N=1000: R_mean>=0.99, R_max>=0.95; static mass drift<1e-10)", ok,
            describe(res, failed) + f"; static mass drift {drift_static:.2e}")
    note("criterion 5 moving-mesh mass drift (monitored, limit 1%)", f"{max(moving):.2e}")
    assert ok


# -- criterion 6 ------------------------------------------------------------------


def fine_periodic_solve(mesh, field, dt, refine=4):
    """Independent oracle: same frozen-coefficient problem on a grid ``refine`` times finer."""
    g, d = mesh.grid, mesh.domain
    fg = make_grid(g.nx * refine, g.ny * refine, True, True)
    XI, ETA = fg.nodes()
    rho = sample_bilinear(field.rho, g, XI, ETA)
    ax = sample_bilinear(field.grad_xi, g, XI, ETA) / rho
    ae = sample_bilinear(field.grad_eta, g, XI, ETA) / rho
    # the first-step mesh is uniform, hence linear, so fine initial data are exact
    x, y = advance_block(d.x0 + d.Lx * XI, d.y0 + d.Ly * ETA, ax, ae, fg.dxi, fg.deta, dt,
                         periodic=(True, True), period=(d.Lx, d.Ly))
    return x[::refine, ::refine], y[::refine, ::refine]


def test_c6_monte_carlo_convergence():
    cfg = SimulationConfig.for_problem("five-ring", t_final=0.05)
    problem, grid, domain = make_setup(cfg)
    mesh = PhysicalMesh.uniform(grid, domain)
    field = build_arclength_density(problem.density_input(problem.initial_state(mesh, 0.0), mesh), mesh,
                                    cfg.density)
    node = (20, 5)  # on the vertical interface of the 2x2 split, next to a ring edge
    ests = {n: estimate_point_periodic(node, mesh, field, cfg.dt, dataclasses.replace(cfg.mc, n_samples=n),
                                       walker_stream(cfg.mc.seed, 0, node)) for n in (100, 1000, 10_000)}
    ns = np.array(list(ests))
    se = np.array([math.hypot(e.stderr_x, e.stderr_y) for e in ests.values()])
    slope = float(np.polyfit(np.log(ns), np.log(se), 1)[0])
    fx, fy = fine_periodic_solve(mesh, field, cfg.dt)
    e = ests[10_000]
    dx, dy = abs(e.mean_x - fx[node]), abs(e.mean_y - fy[node])
    ok = -0.6 <= slope <= -0.4 and dx <= 3 * e.stderr_x + 2e-3 and dy <= 3 * e.stderr_y + 2e-3
    verdict("criterion 6 (stderr slope in [-0.6,-0.4]; N=10000 within 3 stderr + 2e-3 of fine solve)", ok,
            f"slope={slope:.3f}; |dx|={dx:.2e} (limit {3 * e.stderr_x + 2e-3:.2e}), "
            f"|dy|={dy:.2e} (limit {3 * e.stderr_y + 2e-3:.2e}); node moved {abs(fx[node] - mesh.x[node]):.2e}")
    assert ok


# -- criterion 7 ------------------------------------------------------------------

BRIDGE_TRIPLES = ((0.01, 0.01, 1e-4), (0.02, 0.01, 1e-4), (0.004, 0.006, 5e-5))
DISCRETE_MONITOR_SHIFT = 0.5826  # -zeta(1/2)/sqrt(2 pi): continuity correction for discretely watched walls


@numba.njit(cache=True)
def _bridge_hits(d1, d2, dt_s, m, n, seed):
    """Fraction of sampled bridges (variance 2 per unit time) from d1 to d2 that reach distance ``wall``."""
    np.random.seed(seed)
    h = dt_s / m
    sd = math.sqrt(2.0 * h)
    wall = DISCRETE_MONITOR_SHIFT * sd
    hits = 0
    for _ in range(n):
        # free path, then pinned to the end point: w_k - (k/m) (w_m - (d2 - d1))
        w = np.empty(m + 1)
        w[0] = 0.0
        for k in range(m):
            w[k + 1] = w[k] + sd * np.random.standard_normal()
        drift = w[m] - (d2 - d1)
        for k in range(1, m):
            if d1 + w[k] - drift * k / m <= wall:
                hits += 1
                break
    return hits / n


def test_c7_bridge_crossing_probability():
    parts, ok = [], True
    g = make_grid(41, 41)
    rng = np.random.default_rng(2024)
    for k, (d1, d2, dt_s) in enumerate(BRIDGE_TRIPLES):
        closed = bridge_crossing_probability(d1, d2, dt_s)
        brute = _bridge_hits(d1, d2, dt_s, 400, 1_000_000, 17 + k)
        # route two: the exit test itself, fed uniforms, declares exits at the same rate
        u = rng.random(200_000)
        declared = np.mean([exit_test((d1, 0.5), (d2, 0.5), g, dt_s, (v, 1.0)) is not None for v in u])
        rel = abs(brute / closed - 1)
        good = rel < 0.01 and abs(declared - closed) < 4 * math.sqrt(closed * (1 - closed) / u.size)
        ok &= good
        parts.append(f"({d1},{d2},{dt_s}) closed={closed:.4f} brute={brute:.4f} rel={rel:.2%} "
                     f"exit-test rate={declared:.4f}")
    assert any(abs(bridge_crossing_probability(*t) - math.exp(-1)) < 1e-15 for t in BRIDGE_TRIPLES)
    verdict("criterion 7 (bridge closed form vs brute force within 1%)", ok, "; ".join(parts))
    assert ok


# -- criterion 8 ------------------------------------------------------------------


def _uniform_fixed_point():
    worst = 0.0
    for per in (False, True):
        g = make_grid(41, 41, per, per)
        d = PhysicalDomain(2.0, 2.0, per, per, -1.0, -1.0)
        mesh = PhysicalMesh.uniform(g, d)
        field = density_from_values(np.full(g.shape, 1.7), g)
        bc = None if per else BoundaryData.from_blocks(mesh.x, mesh.y, mesh.x, mesh.y)
        x, y = advance_block(mesh.x, mesh.y, field.drift_xi, field.drift_eta, g.dxi, g.deta, 5e-3, bc,
                             (per, per), (d.Lx, d.Ly))
        worst = max(worst, np.max(np.abs(x - mesh.x)) / d.Lx, np.max(np.abs(y - mesh.y)) / d.Ly)
    return worst < 1e-13, f"uniform-density step change {worst:.1e}"


def _scaling_bit_invariance():
    g = make_grid(41, 41)
    mesh = PhysicalMesh.uniform(g, PhysicalDomain(1.0, 1.0))
    rng = np.random.default_rng(8)
    rho = 1 + rng.random(g.shape)
    bc = BoundaryData.from_blocks(mesh.x, mesh.y, mesh.x, mesh.y)
    a = step_mesh_2d(mesh, density_from_values(rho, g), bc, 1e-3)
    b = step_mesh_2d(mesh, density_from_values(rho * 8.0, g), bc, 1e-3)
    same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    return same, f"rho->8 rho bit-identical={same}"


def _quality_checks():
    q = float(quality_from_jacobian(np.diag([2.0, 1.0])))
    rng = np.random.default_rng(5)
    J = rng.standard_normal((2000, 2, 2))
    qs = quality_from_jacobian(J)
    return abs(q - 1.25) < 1e-15 and bool(np.all(qs >= 1 - 1e-12)), f"Q(diag(2,1))={q}, min Q={qs.min():.6f}"


def _linear_gradient():
    g = make_grid(41, 41)
    XI, ETA = g.nodes()
    x = XI + 0.05 * np.sin(math.pi * XI) * np.sin(2 * math.pi * ETA)
    y = ETA + 0.05 * np.sin(2 * math.pi * XI) * np.sin(math.pi * ETA)
    mesh = PhysicalMesh(x, y, g, PhysicalDomain(1.0, 1.0))
    fx, fy = physical_gradient(2.5 * x - 1.5 * y, metric_terms(mesh), g)
    err = max(np.max(np.abs(fx - 2.5)), np.max(np.abs(fy + 1.5)))
    return err < 1e-11, f"linear-field gradient error {err:.1e}"


def _burgers_slope():
    nu, dt, t = 0.005, 1e-4, 0.25
    ex = lambda x, y, s: burgers_exact(x, y, s, nu)  # noqa: E731
    errs = []
    for n in (161, 321):
        g = make_grid(n, n)
        mesh = PhysicalMesh.uniform(g, PhysicalDomain(1.0, 1.0))
        out = step_burgers(PhysState(t, ex(mesh.x, mesh.y, t)), mesh, mesh, dt, nu, boundary=ex)
        errs.append(np.max(np.abs(out.u - ex(mesh.x, mesh.y, t + dt))))
    s = math.log2(errs[0] / errs[1])
    return abs(s - 2) <= 0.3, f"Burgers refinement slope {s:.2f}"


def _equidistribution():
    n = 41
    xi = np.linspace(0, 1, n)
    line = xi.copy()
    for _ in range(200):
        line = step_boundary_mesh_1d(line, 1 + xi, 1e-2)
    flux = (1 + 0.5 * (xi[1:] + xi[:-1])) * np.diff(line) * (n - 1)
    res = float(np.max(np.abs(flux / flux.mean() - 1)))
    return res < 0.01, f"1D equidistribution residual {res:.2e}"


def test_c8_property_suites():
    checks = [_uniform_fixed_point(), _scaling_bit_invariance(), _quality_checks(), _linear_gradient(),
              _burgers_slope(), _equidistribution()]
    ok = all(c[0] for c in checks)
    verdict("criterion 8 (property suites)", ok, "; ".join(c[1] for c in checks))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
