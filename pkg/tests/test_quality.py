import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sddmesh.grid import GridError, PhysicalDomain, PhysicalMesh, make_grid
from sddmesh.quality import (
    cell_quality,
    cellwise_ratio,
    linf_error,
    mesh_quality,
    quality_from_jacobian,
    quality_ratio,
    quality_report,
)

entry = st.floats(-4, 4, allow_nan=False)


def wavy(n=11, amp=0.04, periodic=False):
    g = make_grid(n, n, periodic, periodic)
    XI, ETA = g.nodes()
    x = XI + amp * np.sin(2 * math.pi * XI) * np.sin(2 * math.pi * ETA)
    y = ETA + amp * np.sin(2 * math.pi * ETA) * np.cos(2 * math.pi * XI)
    return PhysicalMesh(x, y, g, PhysicalDomain(1.0, 1.0, periodic, periodic))


def test_square_cells_have_unit_quality():
    mesh = PhysicalMesh.uniform(make_grid(6, 6), PhysicalDomain(3.0, 3.0))
    np.testing.assert_allclose(mesh_quality(mesh), 1.0, rtol=1e-14)


def test_stretched_cells():
    assert quality_from_jacobian(np.diag([2.0, 1.0])) == pytest.approx(1.25, rel=1e-15)
    # x = 2 xi, y = eta on a square grid stretches every cell by diag(2, 1)
    mesh = PhysicalMesh.uniform(make_grid(5, 5), PhysicalDomain(2.0, 1.0))
    assert cell_quality(mesh, (1, 2)) == pytest.approx(1.25, rel=1e-14)


@given(entry, entry, entry, entry)
def test_quality_matches_singular_values(a, b, c, d):
    J = np.array([[a, b], [c, d]])
    s = np.linalg.svd(J, compute_uv=False)
    if s[1] < 1e-3 * max(s[0], 1e-300):
        return
    q = quality_from_jacobian(J)
    assert q == pytest.approx((s[0] ** 2 + s[1] ** 2) / (2 * s[0] * s[1]), rel=1e-9)
    assert q >= 1 - 1e-12


def test_conformal_jacobian_gives_one():
    th = 0.7
    J = 3.0 * np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    assert quality_from_jacobian(J) == pytest.approx(1.0, rel=1e-14)


def test_singular_jacobian_rejected():
    with pytest.raises(GridError):
        quality_from_jacobian(np.array([[1.0, 2.0], [2.0, 4.0]]))


@given(st.floats(0, 2 * math.pi), st.floats(0.1, 10))
def test_rotation_and_scale_invariance(theta, scale):
    mesh = wavy()
    c, s = math.cos(theta), math.sin(theta)
    rot = PhysicalMesh(scale * (c * mesh.x - s * mesh.y), scale * (s * mesh.x + c * mesh.y), mesh.grid, mesh.domain)
    np.testing.assert_allclose(mesh_quality(rot), mesh_quality(mesh), rtol=1e-11)


def test_quality_at_least_one_on_periodic_mesh():
    q = mesh_quality(wavy(periodic=True))
    # periodic grids include the seam cells
    assert q.shape == (11, 11)
    assert np.all(q >= 1.0)


def test_ratio_of_mesh_with_itself():
    mesh = wavy()
    assert quality_ratio(mesh, mesh.copy()) == (1.0, 1.0)
    np.testing.assert_array_equal(cellwise_ratio(mesh, mesh), 1.0)


def test_ratio_definitions():
    ref = PhysicalMesh.uniform(make_grid(5, 5), PhysicalDomain(1.0, 1.0))
    cand = wavy(5, amp=0.05)
    q_ref, q_c = mesh_quality(ref), mesh_quality(cand)
    r_max, r_mean = quality_ratio(ref, cand)
    assert r_max == pytest.approx(q_ref.max() / q_c.max())
    assert r_mean == pytest.approx(q_ref.mean() / q_c.mean())
    assert 0 < r_max < 1


def test_ratio_grid_mismatch():
    with pytest.raises(GridError):
        quality_ratio(wavy(5), wavy(7))


def test_linf_error():
    mesh = wavy()
    ex = lambda x, y, t: np.sin(x + y - t)  # noqa: E731
    u = ex(mesh.x, mesh.y, 0.3)
    assert linf_error(u, mesh, ex, 0.3) == 0.0
    assert linf_error(u + 0.125, mesh, ex, 0.3) == pytest.approx(0.125, rel=1e-14)


def test_report_bundles_measures():
    mesh = wavy()
    ex = lambda x, y, t: x * 0  # noqa: E731
    rep = quality_report(mesh, reference=mesh, u=np.zeros(mesh.grid.shape), exact=ex, decomposition="2x2")
    assert rep.r_max == 1.0 and rep.l_inf == 0.0
    assert rep.metadata["decomposition"] == "2x2"
    assert np.all(rep.q >= 1.0)
