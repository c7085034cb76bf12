"""Structured bilinear (Q1) meshes for the film cross-section and the slab.

Nodes are numbered x-fastest on a logical ``(nx+1) x (ny+1)`` grid.  The
square is the uniform grid on ``[0, 1]²``; the disc maps the same logical
grid on ``[-1, 1]²`` onto the unit disc with the elliptical square-to-disc map,
so the outer ring of nodes lies exactly on the circle.

Gradient terms are integrated with 2x2 (2x2x2 in the slab) Gauss quadrature,
pointwise potentials with the lumped (trapezoid) nodal weights.  All discrete
operators are sparse matrices acting on nodal arrays, so energies and their
exact discrete gradients are matrix-vector products.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

_G = 1.0 / np.sqrt(3.0)
_REF = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_GAUSS2 = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])


def _shape2(xi, eta):
    n = 0.25 * (1 + _REF[:, 0] * xi) * (1 + _REF[:, 1] * eta)
    dxi = 0.25 * _REF[:, 0] * (1 + _REF[:, 1] * eta)
    deta = 0.25 * _REF[:, 1] * (1 + _REF[:, 0] * xi)
    return n, dxi, deta


@dataclass(eq=False)
class Mesh2D:
    shape: str
    nx: int
    ny: int
    nodes: np.ndarray  # (N, 2)
    cells: np.ndarray  # (E, 4) counter-clockwise
    boundary: np.ndarray  # (N,) bool
    gx: sp.csr_matrix  # (4E, N) d/dx at Gauss points
    gy: sp.csr_matrix
    gval: sp.csr_matrix  # shape-function values at Gauss points
    gw: np.ndarray  # (4E,) quadrature weights
    mass: np.ndarray  # (N,) lumped nodal weights

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        """Nominal spacing of the logical grid, in physical units."""
        if self.shape == "square":
            return max(1.0 / self.nx, 1.0 / self.ny)
        return 2.0 / self.nx

    @property
    def area(self) -> float:
        return float(self.gw.sum())

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5, 0.5]) if self.shape == "square" else np.zeros(2)

    def index(self, i: int, j: int) -> int:
        return j * (self.nx + 1) + i

    def dist_to_boundary(self, pts=None) -> np.ndarray:
        pts = self.nodes if pts is None else np.asarray(pts, dtype=float)
        if self.shape == "square":
            x, y = pts[:, 0], pts[:, 1]
            return np.minimum(np.minimum(x, 1 - x), np.minimum(y, 1 - y)).clip(min=0.0)
        return (1.0 - np.hypot(pts[:, 0], pts[:, 1])).clip(min=0.0)

    def boundary_angle(self, pts=None) -> np.ndarray:
        """Polar angle of points about the domain centre."""
        pts = self.nodes if pts is None else np.asarray(pts, dtype=float)
        c = self.center
        return np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])

    def boundary_loop(self) -> np.ndarray:
        """Boundary node indices in counter-clockwise order (no repeat)."""
        nx, ny = self.nx, self.ny
        bottom = [self.index(i, 0) for i in range(nx)]
        right = [self.index(nx, j) for j in range(ny)]
        top = [self.index(i, ny) for i in range(nx, 0, -1)]
        left = [self.index(0, j) for j in range(ny, 0, -1)]
        return np.array(bottom + right + top + left)

    def _logical(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Approximate logical coordinates in cell units, ``u ∈ [0, nx]``."""
        x, y = pts[:, 0], pts[:, 1]
        if self.shape == "square":
            return x * self.nx, y * self.ny
        r2 = 2 * np.sqrt(2.0)
        sx = 2 + x * x - y * y
        sy = 2 - x * x + y * y
        u = 0.5 * np.sqrt(np.maximum(sx + r2 * x, 0)) - 0.5 * np.sqrt(np.maximum(sx - r2 * x, 0))
        v = 0.5 * np.sqrt(np.maximum(sy + r2 * y, 0)) - 0.5 * np.sqrt(np.maximum(sy - r2 * y, 0))
        return (u + 1) * self.nx / 2, (v + 1) * self.ny / 2

    def _newton(self, cell, xi, eta, pts):
        X = self.nodes[self.cells[cell]]  # (P, 4, 2)
        for _ in range(8):  # Newton on the bilinear map of the cell
            n = 0.25 * (1 + _REF[:, 0] * xi[:, None]) * (1 + _REF[:, 1] * eta[:, None])
            dxi = 0.25 * _REF[:, 0] * (1 + _REF[:, 1] * eta[:, None])
            deta = 0.25 * _REF[:, 1] * (1 + _REF[:, 0] * xi[:, None])
            res = np.einsum("pk,pkc->pc", n, X) - pts
            a = np.einsum("pk,pkc->pc", dxi, X)
            b = np.einsum("pk,pkc->pc", deta, X)
            det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            xi = xi - (b[:, 1] * res[:, 0] - b[:, 0] * res[:, 1]) / det
            eta = eta - (-a[:, 1] * res[:, 0] + a[:, 0] * res[:, 1]) / det
        return xi, eta

    def locate(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell index and reference coordinates ``(ξ, η) ∈ [-1, 1]²`` of points.

        Points outside the mesh are clamped to the nearest boundary cell.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u, v = self._logical(pts)
        i = np.clip(np.floor(u).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor(v).astype(int), 0, self.ny - 1)
        xi = np.clip(2 * (u - i) - 1, -1, 1)
        eta = np.clip(2 * (v - j) - 1, -1, 1)
        for _ in range(3):
            xi, eta = self._newton(j * self.nx + i, xi, eta, pts)
            di = np.where(xi > 1 + 1e-9, 1, np.where(xi < -1 - 1e-9, -1, 0))
            dj = np.where(eta > 1 + 1e-9, 1, np.where(eta < -1 - 1e-9, -1, 0))
            ni = np.clip(i + di, 0, self.nx - 1)
            nj = np.clip(j + dj, 0, self.ny - 1)
            moved = (ni != i) | (nj != j)
            if not moved.any():
                break
            xi = np.where(moved, np.where(ni > i, -1.0, np.where(ni < i, 1.0, xi)), xi)
            eta = np.where(moved, np.where(nj > j, -1.0, np.where(nj < j, 1.0, eta)), eta)
            i, j = ni, nj
        return j * self.nx + i, np.clip(xi, -1, 1), np.clip(eta, -1, 1)

    def interpolate(self, values: np.ndarray, pts) -> np.ndarray:
        """Q1 interpolant of nodal ``values`` at physical points."""
        cell, xi, eta = self.locate(pts)
        n = 0.25 * (1 + _REF[:, 0] * xi[:, None]) * (1 + _REF[:, 1] * eta[:, None])
        vals = np.asarray(values, dtype=float)[self.cells[cell]]
        return np.einsum("pk,pk...->p...", n, vals)

    def stiffness(self) -> sp.csr_matrix:
        """Q1 Dirichlet-form matrix, ∫∇u·∇v."""
        W = sp.diags(self.gw)
        return (self.gx.T @ W @ self.gx + self.gy.T @ W @ self.gy).tocsr()

    def grad(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.gx @ u, self.gy @ u


def _logical_cells(nx: int, ny: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    n0 = j * (nx + 1) + i
    return np.stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1], axis=1)


def _logical_boundary(nx: int, ny: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    return ((i == 0) | (i == nx) | (j == 0) | (j == ny)).ravel()


def _assemble2(nodes: np.ndarray, cells: np.ndarray):
    E = cells.shape[0]
    X = nodes[cells]  # (E, 4, 2)
    rows_gx, rows_gy, rows_v, wts = [], [], [], []
    for xi, eta in _GAUSS2:
        n, dxi, deta = _shape2(xi, eta)
        j11 = X[:, :, 0] @ dxi
        j12 = X[:, :, 1] @ dxi
        j21 = X[:, :, 0] @ deta
        j22 = X[:, :, 1] @ deta
        det = j11 * j22 - j12 * j21
        if np.any(det <= 0):
            raise ValueError("mesh has inverted or degenerate cells")
        # [d/dx; d/dy] = J^{-1} [d/dxi; d/deta]
        dx = (j22[:, None] * dxi - j12[:, None] * deta) / det[:, None]
        dy = (-j21[:, None] * dxi + j11[:, None] * deta) / det[:, None]
        rows_gx.append(dx)
        rows_gy.append(dy)
        rows_v.append(np.broadcast_to(n, (E, 4)))
        wts.append(det)
    # row order: element-major, Gauss point minor
    gxd = np.stack(rows_gx, axis=1).reshape(-1)
    gyd = np.stack(rows_gy, axis=1).reshape(-1)
    vd = np.stack(rows_v, axis=1).reshape(-1)
    w = np.stack(wts, axis=1).reshape(-1)
    cols = np.repeat(cells[:, None, :], 4, axis=1).reshape(-1)
    rows = np.repeat(np.arange(4 * E), 4)
    shape = (4 * E, nodes.shape[0])
    mk = lambda d: sp.csr_matrix((d, (rows, cols)), shape=shape)
    gval = mk(vd)
    return mk(gxd), mk(gyd), gval, w, np.asarray(gval.T @ w).ravel()


def square_mesh(nx: int, ny: int | None = None) -> Mesh2D:
    ny = nx if ny is None else ny
    if nx < 1 or ny < 1:
        raise ValueError("grid needs at least one cell per direction")
    x = np.linspace(0.0, 1.0, nx + 1)
    y = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="xy")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    cells = _logical_cells(nx, ny)
    gx, gy, gv, w, m = _assemble2(nodes, cells)
    return Mesh2D("square", nx, ny, nodes, cells, _logical_boundary(nx, ny), gx, gy, gv, w, m)


def disc_mesh(n: int) -> Mesh2D:
    """Unit disc from an ``n x n`` logical grid (``n`` cells across the diameter)."""
    if n < 2:
        raise ValueError("disc mesh needs n >= 2")
    u = np.linspace(-1.0, 1.0, n + 1)
    U, V = np.meshgrid(u, u, indexing="xy")
    U, V = U.ravel(), V.ravel()
    nodes = np.stack([U * np.sqrt(1 - V**2 / 2), V * np.sqrt(1 - U**2 / 2)], axis=1)
    cells = _logical_cells(n, n)
    gx, gy, gv, w, m = _assemble2(nodes, cells)
    return Mesh2D("disc", n, n, nodes, cells, _logical_boundary(n, n), gx, gy, gv, w, m)


def make_mesh(shape: str, nx: int, ny: int | None = None) -> Mesh2D:
    if shape == "square":
        return square_mesh(nx, ny)
    if shape == "disc":
        if ny is not None and ny != nx:
            raise ValueError("disc mesh requires nx == ny")
        return disc_mesh(nx)
    raise ValueError(f"unknown domain shape {shape!r}")


@dataclass(eq=False)
class Mesh3D:
    """Extrusion of a :class:`Mesh2D` over the rescaled thickness ``z ∈ [0, 1]``.

    Node index is ``k * N2 + n`` for layer ``k`` and cross-section node ``n``.
    """

    base: Mesh2D
    nz: int
    z: np.ndarray
    gx: sp.csr_matrix
    gy: sp.csr_matrix
    gz: sp.csr_matrix
    gw: np.ndarray
    mass: np.ndarray
    lateral: np.ndarray  # (N,) bool, Dirichlet nodes

    @property
    def n_nodes(self) -> int:
        return self.base.n_nodes * (self.nz + 1)

    @property
    def nodes(self) -> np.ndarray:
        n2 = self.base.n_nodes
        xy = np.tile(self.base.nodes, (self.nz + 1, 1))
        zz = np.repeat(self.z, n2)
        return np.column_stack([xy, zz])

    def layer(self, k: int) -> slice:
        n2 = self.base.n_nodes
        return slice(k * n2, (k + 1) * n2)

    def z_weights(self) -> np.ndarray:
        """Trapezoid weights of the node layers (sum 1)."""
        hz = 1.0 / self.nz
        w = np.full(self.nz + 1, hz)
        w[0] = w[-1] = hz / 2
        return w


def extrude(base: Mesh2D, nz: int) -> Mesh3D:
    if nz < 1:
        raise ValueError("nz must be positive")
    hz = 1.0 / nz
    z = np.linspace(0.0, 1.0, nz + 1)
    rows, cols, vals, ders = [], [], [], []
    for k in range(nz):
        for g, zeta in enumerate((-_G, _G)):
            r = 2 * k + g
            rows += [r, r]
            cols += [k, k + 1]
            vals += [0.5 * (1 - zeta), 0.5 * (1 + zeta)]
            ders += [-1.0 / hz, 1.0 / hz]
    shape = (2 * nz, nz + 1)
    L1 = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    D1 = sp.csr_matrix((ders, (rows, cols)), shape=shape)
    w1 = np.full(2 * nz, hz / 2)
    gx = sp.kron(L1, base.gx, format="csr")
    gy = sp.kron(L1, base.gy, format="csr")
    gz = sp.kron(D1, base.gval, format="csr")
    gw = np.kron(w1, base.gw)
    m1 = np.asarray(L1.T @ w1).ravel()
    mass = np.kron(m1, base.mass)
    lateral = np.tile(base.boundary, nz + 1)
    return Mesh3D(base, nz, z, gx, gy, gz, gw, mass, lateral)
