import math

import numpy as np
import pytest

from nemfilm.mesh import disc_mesh, extrude, make_mesh, square_mesh
from nemfilm.optim import NumericalFailure, Preconditioner, SolverConfig, minimize_bb


def test_square_mesh_layout():
    m = square_mesh(4, 3)
    assert m.n_nodes == 20
    assert np.array_equal(m.nodes[:5, 0], np.linspace(0, 1, 5))  # x fastest
    assert m.mass.sum() == pytest.approx(1.0, abs=1e-14)
    assert m.area == pytest.approx(1.0, abs=1e-14)
    assert m.boundary.sum() == 2 * (4 + 3)
    assert m.boundary_loop().size == 14


def test_disc_mesh_geometry():
    m = disc_mesh(40)
    b = m.boundary_loop()
    np.testing.assert_allclose(np.hypot(*m.nodes[b].T), 1.0, atol=1e-14)
    # counter-clockwise ordering
    ang = np.unwrap(np.arctan2(m.nodes[b, 1], m.nodes[b, 0]))
    assert ang[-1] - ang[0] > 1.9 * math.pi
    # quadrature area converges to π at second order
    e1 = abs(disc_mesh(20).area - math.pi)
    e2 = abs(disc_mesh(40).area - math.pi)
    assert e2 < e1 / 3


@pytest.mark.parametrize("mesh", [square_mesh(7, 5), disc_mesh(12)])
def test_gradient_exact_on_linear_functions(mesh):
    u = 2.0 * mesh.nodes[:, 0] - 3.0 * mesh.nodes[:, 1] + 0.5
    gx, gy = mesh.grad(u)
    np.testing.assert_allclose(gx, 2.0, atol=1e-11)
    np.testing.assert_allclose(gy, -3.0, atol=1e-11)
    # constants are in the kernel of the stiffness matrix
    np.testing.assert_allclose(mesh.stiffness() @ np.ones(mesh.n_nodes), 0.0, atol=1e-12)


@pytest.mark.parametrize("mesh", [square_mesh(6), disc_mesh(10)])
def test_interpolation_reproduces_nodes_and_linears(mesh, rng):
    vals = rng.normal(size=mesh.n_nodes)
    np.testing.assert_allclose(mesh.interpolate(vals, mesh.nodes), vals, atol=1e-12)
    lin = mesh.nodes @ np.array([1.5, -0.7])
    pts = mesh.nodes[~mesh.boundary] + 0.3 * mesh.h * rng.uniform(-1, 1, (int((~mesh.boundary).sum()), 2))
    pts = pts[mesh.dist_to_boundary(pts) > 0.05 * mesh.h]  # curved boundary: keep points inside the mesh
    np.testing.assert_allclose(mesh.interpolate(lin, pts), pts @ np.array([1.5, -0.7]), atol=1e-12)


def test_make_mesh_validation():
    with pytest.raises(ValueError):
        make_mesh("hexagon", 4)
    with pytest.raises(ValueError):
        make_mesh("disc", 4, 6)
    with pytest.raises(ValueError):
        square_mesh(0)


def test_extrude_volume_and_layers():
    m3 = extrude(square_mesh(3), 4)
    assert m3.n_nodes == 16 * 5
    assert m3.gw.sum() == pytest.approx(1.0, abs=1e-14)
    assert m3.mass.sum() == pytest.approx(1.0, abs=1e-14)
    assert m3.z_weights().sum() == pytest.approx(1.0, abs=1e-15)
    z = m3.nodes[:, 2]
    gz = m3.gz @ z
    np.testing.assert_allclose(gz, 1.0, atol=1e-12)
    assert m3.lateral.sum() == 12 * 5


def _quadratic(Amat, b):
    def fun(x):
        r = x[:, 0]
        parts = 0.5 * r * (Amat @ r) - b * r
        return float(parts.sum()), (Amat @ r - b)[:, None], parts

    return fun


def test_bb_solves_spd_quadratic(rng):
    n = 30
    Q = rng.normal(size=(n, n))
    Amat = Q @ Q.T / n + np.eye(n)
    b = rng.normal(size=n)
    free = np.ones(n, bool)
    free[:3] = False
    x0 = np.zeros((n, 1))
    x, rep = minimize_bb(_quadratic(Amat, b), x0, np.ones(n), free, SolverConfig(tol=1e-10))
    assert rep.converged
    # oracle: direct solve on the free block
    xs = np.zeros(n)
    xs[free] = np.linalg.solve(Amat[np.ix_(free, free)], b[free])
    np.testing.assert_allclose(x[:, 0], xs, atol=1e-8)
    assert np.all(x[:3, 0] == 0.0)
    E = [h[1] for h in rep.history]
    assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(E, E[1:]))


def test_bb_with_preconditioner(rng):
    m = square_mesh(16)
    K = m.stiffness()
    free = ~m.boundary
    f = rng.normal(size=m.n_nodes)

    def fun(x):
        u = x[:, 0]
        gx, gy = m.grad(u)
        parts = np.concatenate([0.5 * m.gw * (gx**2 + gy**2), -m.mass * f * u])
        return float(parts.sum()), (K @ u - m.mass * f)[:, None], parts

    pc = Preconditioner(K, m.mass, free, 1.0)
    x, rep = minimize_bb(fun, np.zeros((m.n_nodes, 1)), m.mass, free, SolverConfig(tol=1e-9), precond=pc)
    assert rep.converged and rep.iterations < 60


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(continuation=(0.1, 0.2))
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    assert SolverConfig(continuation=[0.2, 0.1]).continuation == (0.2, 0.1)


def test_nonfinite_energy_is_reported():
    def fun(x):
        v = np.full_like(x, np.nan)
        return float("nan"), v, v[:, 0]

    with pytest.raises(NumericalFailure):
        minimize_bb(fun, np.zeros((3, 1)), np.ones(3), np.ones(3, bool), SolverConfig())


def test_max_iters_flagged(rng):
    n = 20
    Amat = np.diag(np.logspace(0, 4, n))
    x, rep = minimize_bb(_quadratic(Amat, np.ones(n)), np.zeros((n, 1)), np.ones(n), np.ones(n, bool), SolverConfig(tol=1e-14, max_iters=3))
    assert rep.status == "max_iters" and rep.iterations == 3
