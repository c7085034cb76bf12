"""Rescaled three-dimensional film energy on Ω × (0, 1).

After rescaling the film thickness to one, the energy per unit area reads

    F_ε[Q] = ∫ f_e(∇Q) + w_l f_LdG(Q)  +  (1/ε) ∫_{z=0,1} f_s(Q, ẑ)

with the elastic density split into groups weighted 1, 2/ε and 1/ε².  The
bulk potential is shifted by a constant so that its minimum is zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy import optimize

from .mesh import Mesh3D
from .optim import Preconditioner, SolverConfig, minimize_bb
from .surface import AnchoringParams
from .tensor import _as_matrix, full, pullback, tr2_array, tr3_array


class CoercivityCheck(NamedTuple):
    ok: bool
    margin: float


def check_coercivity(M2: float, M3: float) -> CoercivityCheck:
    """Sufficient condition for the elastic energy to control |∇Q|².

    Requires ``-1 < M3 < 2`` and ``M2 > -3/5 - M3/10``; ``margin`` is the
    smallest slack, positive exactly when the condition holds.
    """
    margin = min(M3 + 1.0, 2.0 - M3, M2 + 0.6 + 0.1 * M3)
    return CoercivityCheck(margin > 0, float(margin))


@dataclass(frozen=True)
class ElasticConstants:
    M2: float = 0.0
    M3: float = 0.0

    @property
    def coercive(self) -> bool:
        return check_coercivity(self.M2, self.M3).ok

    @property
    def margin(self) -> float:
        return check_coercivity(self.M2, self.M3).margin

    @property
    def M(self) -> float:
        """Planar stiffness ``2 + M2 + M3``."""
        return 2.0 + self.M2 + self.M3


# ---------------------------------------------------------------------------
# bulk potential


def ldg_density(Q, A: float, B: float, offset: float = 0.0) -> float:
    m = _as_matrix(Q)
    t2 = float(np.trace(m @ m))
    t3 = float(np.trace(m @ m @ m))
    return 2 * A * t2 + (4.0 / 3.0) * B * t3 + t2 * t2 + offset


def ldg_array(q, A: float, B: float, offset: float = 0.0) -> np.ndarray:
    t2 = tr2_array(q)
    return 2 * A * t2 + (4.0 / 3.0) * B * tr3_array(q) + t2 * t2 + offset


def ldg_grad_array(q, A: float, B: float) -> np.ndarray:
    """d f_LdG / dq for ``(..., 5)`` component arrays."""
    m = full(q)
    t2 = np.einsum("...ij,...ij->...", m, m)
    g = (4 * A + 4 * t2)[..., None, None] * m + 4 * B * (m @ m)
    return pullback(g)


def _ldg_eig(lam, A, B):
    l1, l2 = lam
    l3 = -l1 - l2
    t2 = l1 * l1 + l2 * l2 + l3 * l3
    t3 = l1**3 + l2**3 + l3**3
    return 2 * A * t2 + (4.0 / 3.0) * B * t3 + t2 * t2


@lru_cache(maxsize=64)
def compute_ldg_offset(A: float, B: float) -> float:
    """``-min f_LdG``, searched over the two free eigenvalues."""
    cands = [0.0]
    disc = B * B - 24 * A  # uniaxial critical points 2S² + BS + 3A = 0
    if disc >= 0:
        for s in ((-B + math.sqrt(disc)) / 4, (-B - math.sqrt(disc)) / 4):
            cands.append(_ldg_eig((2 * s / 3, -s / 3), A, B))
    R = 2.0 * (1.0 + abs(A) + abs(B))
    grid = np.linspace(-R, R, 201)
    L1, L2 = np.meshgrid(grid, grid)
    vals = _ldg_eig((L1, L2), A, B)
    idx = np.argsort(vals.ravel())[:5]
    for k in idx:
        x0 = np.array([L1.ravel()[k], L2.ravel()[k]])
        res = optimize.minimize(_ldg_eig, x0, args=(A, B), method="BFGS", options={"gtol": 1e-12})
        cands.append(float(res.fun))
    return -min(cands) + 0.0  # avoid -0.0


@dataclass(frozen=True)
class ModelParams:
    A: float
    B: float
    w_l: float
    epsilon: float = 1.0
    anchoring: AnchoringParams = field(default_factory=AnchoringParams)
    ldg_offset: float | None = None

    def __post_init__(self):
        if not self.w_l > 0:
            raise ValueError("w_l must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.ldg_offset is None:
            object.__setattr__(self, "ldg_offset", compute_ldg_offset(float(self.A), float(self.B)))

    @property
    def beta(self) -> float:
        return self.anchoring.beta

    def with_epsilon(self, eps: float) -> "ModelParams":
        return ModelParams(self.A, self.B, self.w_l, eps, self.anchoring, self.ldg_offset)


def bulk_shift(mp: ModelParams) -> float:
    """Curvature scale of the bulk term, used to shift solver preconditioners."""
    return mp.w_l * (1.0 + 4.0 * abs(mp.A) + 2.0 * abs(mp.B))


# ---------------------------------------------------------------------------
# elastic density


def elastic_groups(dx, dy, dz, M2: float, M3: float):
    """The three elastic groups from ``(..., 3, 3)`` derivative matrices.

    Indices ``i, m`` run over all three axes, ``j, k`` over the in-plane
    ones; ``D[k][i, j] = ∂_k Q_ij``.
    """
    D = [np.asarray(dx, float), np.asarray(dy, float), np.asarray(dz, float)]
    s = lambda a: np.sum(a, axis=(-2, -1)) if a.ndim >= 2 else a
    inplane = D[0] ** 2 + D[1] ** 2
    div = D[0][..., :, 0] + D[1][..., :, 1]  # Σ_j ∂_j Q_ij, shape (..., 3)
    twist = sum(D[j][..., :, k] * D[k][..., :, j] for j in range(2) for k in range(2))
    g0 = s(inplane) + M2 * np.sum(div**2, axis=-1) + M3 * np.sum(twist, axis=-1)
    g1 = M2 * np.sum(div * D[2][..., :, 2], axis=-1) + M3 * np.sum(
        D[0][..., :, 2] * D[2][..., :, 0] + D[1][..., :, 2] * D[2][..., :, 1], axis=-1
    )
    g2 = s(D[2] ** 2) + (M2 + M3) * np.sum(D[2][..., :, 2] ** 2, axis=-1)
    return g0, g1, g2


def _as_deriv(d):
    d = np.asarray(d, dtype=float)
    if d.shape[-1] == 5:
        return full(d)
    return d


def elastic_density_3d(dx, dy, dz, M2: float, M3: float, epsilon: float):
    """Rescaled elastic density; derivatives as ``(..., 5)`` or ``(..., 3, 3)``."""
    g0, g1, g2 = elastic_groups(_as_deriv(dx), _as_deriv(dy), _as_deriv(dz), M2, M3)
    return g0 + (2.0 / epsilon) * g1 + g2 / epsilon**2


@lru_cache(maxsize=64)
def quadratic_forms(M2: float, M3: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric 15x15 matrices with ``group_k = dᵀ H_k d``, ``d = (∂x q, ∂y q, ∂z q)``."""
    eye = np.eye(15)

    def groups(v):
        v = np.atleast_2d(v)
        return np.stack(elastic_groups(full(v[:, :5]), full(v[:, 5:10]), full(v[:, 10:]), M2, M3))

    diag = groups(eye)  # (3, 15)
    pair = groups((eye[:, None, :] + eye[None, :, :]).reshape(-1, 15)).reshape(3, 15, 15)
    H = 0.5 * (pair - diag[:, :, None] - diag[:, None, :])
    H = 0.5 * (H + H.transpose(0, 2, 1))
    for k in range(3):
        H[k].flags.writeable = False
    return H[0], H[1], H[2]


def quadratic_energy(ops, gw: np.ndarray, H: np.ndarray, q: np.ndarray):
    """``Σ_gp w dᵀ H d`` with its gradient in the nodal unknowns.

    ``ops`` are the gradient operators whose stacked outputs form ``d``.
    Returns ``(per-point contributions, gradient (N, 5))``.
    """
    d = np.concatenate([G @ q for G in ops], axis=1)
    Hd = d @ H
    dens = gw * np.einsum("ij,ij->i", d, Hd)
    gd = 2.0 * gw[:, None] * Hd
    grad = sum(G.T @ gd[:, 5 * a : 5 * a + 5] for a, G in enumerate(ops))
    return dens, grad


# ---------------------------------------------------------------------------
# surface terms with normal ẑ


def anchoring_array(q, alpha: float, beta: float, gamma: float) -> np.ndarray:
    q33 = -q[:, 0] - q[:, 3]
    return alpha * (q33 - beta) ** 2 + gamma * (q[:, 2] ** 2 + q[:, 4] ** 2)


def anchoring_grad_array(q, alpha: float, beta: float, gamma: float) -> np.ndarray:
    q33 = -q[:, 0] - q[:, 3]
    g = np.zeros_like(q)
    a = -2.0 * alpha * (q33 - beta)
    g[:, 0] = a
    g[:, 3] = a
    g[:, 2] = 2.0 * gamma * q[:, 2]
    g[:, 4] = 2.0 * gamma * q[:, 4]
    return g


# ---------------------------------------------------------------------------
# fields and energy


@dataclass(eq=False)
class QField3D:
    mesh: Mesh3D
    q: np.ndarray  # (N, 5)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (self.mesh.n_nodes, 5):
            raise ValueError(f"expected q of shape {(self.mesh.n_nodes, 5)}, got {self.q.shape}")

    @classmethod
    def extend(cls, mesh: Mesh3D, q2: np.ndarray) -> "QField3D":
        """Trivial z-independent extension of a cross-section field."""
        return cls(mesh, np.tile(np.asarray(q2, dtype=float), (mesh.nz + 1, 1)))

    def layers(self) -> np.ndarray:
        return self.q.reshape(self.mesh.nz + 1, self.mesh.base.n_nodes, 5)

    def z_average(self) -> np.ndarray:
        return np.tensordot(self.mesh.z_weights(), self.layers(), axes=1)


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    bulk: float
    surface: float
    total: float
    groups: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "elastic": self.elastic,
            "bulk": self.bulk,
            "surface": self.surface,
            "total": self.total,
            "groups": list(self.groups),
        }


class FilmProblem3D:
    """Discrete F_ε on a fixed slab mesh."""

    def __init__(self, mesh: Mesh3D, ec: ElasticConstants, mp: ModelParams):
        self.mesh, self.ec, self.mp = mesh, ec, mp
        eps = mp.epsilon
        H0, H1, H2 = quadratic_forms(float(ec.M2), float(ec.M3))
        self.H = (H0, H1, H2)
        self.Hsum = H0 + (2.0 / eps) * H1 + H2 / eps**2
        self.ops = (mesh.gx, mesh.gy, mesh.gz)
        n2 = mesh.base.n_nodes
        self.faces = np.r_[np.arange(n2), np.arange(mesh.nz * n2, (mesh.nz + 1) * n2)]
        self.face_w = np.tile(mesh.base.mass, 2) / eps
        self.alpha = mp.anchoring.alpha(eps)
        self.gamma = mp.anchoring.gamma(eps)

    def energy_grad(self, q: np.ndarray):
        mp = self.mp
        el, g = quadratic_energy(self.ops, self.mesh.gw, self.Hsum, q)
        bulk = mp.w_l * self.mesh.mass * ldg_array(q, mp.A, mp.B, mp.ldg_offset)
        g = g + (mp.w_l * self.mesh.mass)[:, None] * ldg_grad_array(q, mp.A, mp.B)
        qf = q[self.faces]
        surf = self.face_w * anchoring_array(qf, self.alpha, mp.beta, self.gamma)
        gs = self.face_w[:, None] * anchoring_grad_array(qf, self.alpha, mp.beta, self.gamma)
        np.add.at(g, self.faces, gs)
        parts = np.concatenate([el, bulk, surf])
        return float(parts.sum()), g, parts

    def breakdown(self, q: np.ndarray) -> EnergyBreakdown:
        mp, eps = self.mp, self.mp.epsilon
        groups = tuple(float(quadratic_energy(self.ops, self.mesh.gw, H, q)[0].sum()) for H in self.H)
        el = groups[0] + (2.0 / eps) * groups[1] + groups[2] / eps**2
        bulk = float(np.sum(mp.w_l * self.mesh.mass * ldg_array(q, mp.A, mp.B, mp.ldg_offset)))
        qf = q[self.faces]
        surf = float(np.sum(self.face_w * anchoring_array(qf, self.alpha, mp.beta, self.gamma)))
        return EnergyBreakdown(el, bulk, surf, el + bulk + surf, groups)


def total_energy_eps(field: QField3D, ec: ElasticConstants, mp: ModelParams) -> EnergyBreakdown:
    return FilmProblem3D(field.mesh, ec, mp).breakdown(field.q)


def z_variation(field: QField3D) -> float:
    """``∫ |∂_z Q|²`` with the full-tensor Frobenius norm."""
    H = quadratic_forms(0.0, 0.0)[2][10:, 10:]
    dens, _ = quadratic_energy((field.mesh.gz,), field.mesh.gw, H, field.q)
    return float(dens.sum())


class NonCoerciveError(ValueError):
    pass


def minimize_eps(initial: QField3D, ec: ElasticConstants, mp: ModelParams, solver: SolverConfig):
    """Relax F_ε with lateral nodes held at their initial values.

    Returns ``(field, breakdown, report)``; ``report.converged`` is False when
    the iteration cap was hit or the line search stalled.
    """
    chk = check_coercivity(ec.M2, ec.M3)
    if not chk.ok:
        raise NonCoerciveError(f"elastic constants M2={ec.M2}, M3={ec.M3} are not coercive (margin {chk.margin:.3g})")
    mesh = initial.mesh
    prob = FilmProblem3D(mesh, ec, mp)
    free = ~mesh.lateral
    W = sp.diags(mesh.gw)
    K = mesh.gx.T @ W @ mesh.gx + mesh.gy.T @ W @ mesh.gy + (mesh.gz.T @ W @ mesh.gz) / mp.epsilon**2
    pc = Preconditioner(2.0 * ec.M * K, mesh.mass, free, bulk_shift(mp))
    q, rep = minimize_bb(prob.energy_grad, initial.q, mesh.mass, free, solver, precond=pc)
    out = QField3D(initial.mesh, q)
    return out, prob.breakdown(q), rep


def elastic_2d_forms(M2: float, M3: float) -> np.ndarray:
    """In-plane 10x10 block of the order-one group (z-independent fields)."""
    return np.ascontiguousarray(quadratic_forms(M2, M3)[0][:10, :10])

