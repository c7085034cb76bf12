"""Limiting planar energy over tensors with ẑ as an eigenvector.

Film tensors are written through an in-plane vector ``p = (p1, p2)`` and the
ẑ-eigenvalue ``b``.  With ``b`` pinned to β, the limit energy reduces (up to a
boundary constant and an overall factor) to a Ginzburg-Landau functional

    ∫ ½|∇p|² + W(|p|)/δ²,    W(t) = 4t⁴ + C̃t² + D̃.

The same discretisation as the slab energy is used (Q1 gradients, lumped
potentials), so z-independent slab fields and their cross-sections carry
identical discrete energies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse.linalg as sla

from .energy3d import (
    ElasticConstants,
    EnergyBreakdown,
    ModelParams,
    anchoring_array,
    anchoring_grad_array,
    elastic_2d_forms,
    elastic_groups,
    ldg_array,
    ldg_grad_array,
    quadratic_energy,
)
from .mesh import Mesh2D
from .tensor import full, q_from_p_array

MEMBERSHIP_TOL = 1e-10


# ---------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class PField:
    mesh: Mesh2D
    p: np.ndarray  # (N, 2)
    beta: float
    b: np.ndarray | None = None  # (N,) when the ẑ-eigenvalue is free

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (self.mesh.n_nodes, 2):
            raise ValueError(f"expected p of shape {(self.mesh.n_nodes, 2)}, got {self.p.shape}")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=float)
            if self.b.shape != (self.mesh.n_nodes,):
                raise ValueError("b must have one value per node")

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.p[:, 0], self.p[:, 1])

    @property
    def b_values(self) -> np.ndarray:
        return np.full(self.mesh.n_nodes, self.beta) if self.b is None else self.b

    def q(self) -> np.ndarray:
        return q_from_p_array(self.p, self.b_values)


@dataclass(eq=False)
class QField2D:
    mesh: Mesh2D
    q: np.ndarray  # (N, 5)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (self.mesh.n_nodes, 5):
            raise ValueError(f"expected q of shape {(self.mesh.n_nodes, 5)}, got {self.q.shape}")

    @classmethod
    def from_pfield(cls, f: PField) -> "QField2D":
        return cls(f.mesh, f.q())

    def to_pfield(self, beta: float, free_b: bool = True, tol: float = 1e-10) -> PField:
        q = self.q
        off = np.hypot(q[:, 2], q[:, 4])
        if off.max(initial=0.0) > tol:
            raise ValueError(f"z is not an eigenvector at node {int(off.argmax())}")
        p = np.column_stack([(q[:, 0] - q[:, 3]) / 2, q[:, 1]])
        b = -q[:, 0] - q[:, 3]
        return PField(self.mesh, p, beta, b if free_b else None)


# ---------------------------------------------------------------------------
# the planar potential


def ctilde(A: float, B: float, beta: float) -> float:
    return 6 * beta**2 - 4 * B * beta + 4 * A


def default_dtilde(C: float) -> float:
    """Constant making ``min W = 0``."""
    return C * C / 16.0 if C < 0 else 0.0


@dataclass(frozen=True)
class PotentialSpec:
    Ctilde: float
    delta: float
    Dtilde: float | None = None
    M: float = 2.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.M > 0:
            raise ValueError("planar stiffness M must be positive")
        if self.Dtilde is None:
            object.__setattr__(self, "Dtilde", default_dtilde(self.Ctilde))

    @classmethod
    def from_model(cls, mp: ModelParams, ec: ElasticConstants) -> "PotentialSpec":
        """Reduced problem equivalent to the limit energy with ``b ≡ β``.

        The limit energy equals ``2M`` times the reduced one (plus constants)
        when ``δ² = 2M / w_l``.
        """
        M = ec.M
        if M <= 0:
            raise ValueError("2 + M2 + M3 must be positive")
        return cls(ctilde(mp.A, mp.B, mp.beta), math.sqrt(2 * M / mp.w_l), None, M)

    @property
    def t_star(self) -> float:
        """Minimiser of W on t ≥ 0."""
        return math.sqrt(-self.Ctilde / 8) if self.Ctilde < 0 else 0.0

    def with_delta(self, delta: float) -> "PotentialSpec":
        return PotentialSpec(self.Ctilde, delta, self.Dtilde, self.M)


def potential_w(t, spec: PotentialSpec):
    t = np.asarray(t, dtype=float)
    out = 4 * t**4 + spec.Ctilde * t**2 + spec.Dtilde
    return float(out) if out.ndim == 0 else out


def potential_w_prime(t, spec: PotentialSpec):
    t = np.asarray(t, dtype=float)
    out = 16 * t**3 + 2 * spec.Ctilde * t
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# reduced functional


class ReducedProblem:
    def __init__(self, mesh: Mesh2D, spec: PotentialSpec):
        self.mesh, self.spec = mesh, spec
        self.inv_d2 = 1.0 / spec.delta**2

    def energy_grad(self, p: np.ndarray):
        m = self.mesh
        gx, gy = m.gx @ p, m.gy @ p
        el = 0.5 * m.gw * (np.sum(gx * gx, axis=1) + np.sum(gy * gy, axis=1))
        g = m.gx.T @ (m.gw[:, None] * gx) + m.gy.T @ (m.gw[:, None] * gy)
        t2 = np.sum(p * p, axis=1)
        s = self.spec
        pot = self.inv_d2 * m.mass * (4 * t2 * t2 + s.Ctilde * t2 + s.Dtilde)
        g = g + (self.inv_d2 * m.mass * (16 * t2 + 2 * s.Ctilde))[:, None] * p
        parts = np.concatenate([el, pot])
        return float(parts.sum()), g, parts


def reduced_energy(field: PField, spec: PotentialSpec) -> float:
    return ReducedProblem(field.mesh, spec).energy_grad(field.p)[0]


def reduced_energy_grad(field: PField, spec: PotentialSpec) -> tuple[float, np.ndarray]:
    E, g, _ = ReducedProblem(field.mesh, spec).energy_grad(field.p)
    return E, g


# ---------------------------------------------------------------------------
# the limit energy on D


class MembershipError(ValueError):
    """A node lies outside the zero set of the leading surface energy."""

    def __init__(self, node: int, value: float, location):
        self.node, self.value, self.location = node, value, tuple(location)
        super().__init__(
            f"node {node} at ({location[0]:.6g}, {location[1]:.6g}) violates the surface "
            f"constraint: leading surface energy {value:.3e} > {MEMBERSHIP_TOL:g}"
        )


def membership_violation(q: np.ndarray, mp: ModelParams) -> np.ndarray:
    a = mp.anchoring
    return anchoring_array(q, a.alpha0, a.beta, a.gamma0)


class F0Problem:
    """Discrete limit energy ``∫ f_e⁰ + w_l f_LdG + 2 f_s⁽¹⁾``."""

    def __init__(self, mesh: Mesh2D, ec: ElasticConstants, mp: ModelParams):
        self.mesh, self.ec, self.mp = mesh, ec, mp
        self.H = elastic_2d_forms(float(ec.M2), float(ec.M3))
        self.ops = (mesh.gx, mesh.gy)

    def check(self, q: np.ndarray):
        v = membership_violation(q, self.mp)
        k = int(np.argmax(v)) if v.size else 0
        if v.size and v[k] > MEMBERSHIP_TOL:
            raise MembershipError(k, float(v[k]), self.mesh.nodes[k])

    def energy_grad_q(self, q: np.ndarray):
        mp, m = self.mp, self.mesh
        a = mp.anchoring
        el, g = quadratic_energy(self.ops, m.gw, self.H, q)
        bulk = mp.w_l * m.mass * ldg_array(q, mp.A, mp.B, mp.ldg_offset)
        g = g + (mp.w_l * m.mass)[:, None] * ldg_grad_array(q, mp.A, mp.B)
        surf = 2.0 * m.mass * anchoring_array(q, a.alpha1, a.beta, a.gamma1)
        g = g + (2.0 * m.mass)[:, None] * anchoring_grad_array(q, a.alpha1, a.beta, a.gamma1)
        parts = np.concatenate([el, bulk, surf])
        return float(parts.sum()), g, parts

    def energy_grad_pb(self, x: np.ndarray):
        """Energy in the film unknowns ``(p1, p2, b)`` per node."""
        q = q_from_p_array(x[:, :2], x[:, 2])
        E, gq, parts = self.energy_grad_q(q)
        g = np.column_stack([gq[:, 0] - gq[:, 3], gq[:, 1], -0.5 * (gq[:, 0] + gq[:, 3])])
        return E, g, parts

    def energy_grad_p(self, p: np.ndarray, b: float):
        """Energy with the ẑ-eigenvalue frozen at ``b``."""
        x = np.column_stack([p, np.full(p.shape[0], b)])
        E, g, parts = self.energy_grad_pb(x)
        return E, g[:, :2], parts

    def breakdown(self, q: np.ndarray) -> EnergyBreakdown:
        self.check(q)
        mp, m = self.mp, self.mesh
        a = mp.anchoring
        el = float(quadratic_energy(self.ops, m.gw, self.H, q)[0].sum())
        bulk = float(np.sum(mp.w_l * m.mass * ldg_array(q, mp.A, mp.B, mp.ldg_offset)))
        surf = float(np.sum(2.0 * m.mass * anchoring_array(q, a.alpha1, a.beta, a.gamma1)))
        return EnergyBreakdown(el, bulk, surf, el + bulk + surf, (el, 0.0, 0.0))


def f0_energy(field: QField2D, ec: ElasticConstants, mp: ModelParams) -> EnergyBreakdown:
    """Limit energy; raises :class:`MembershipError` off the constraint set."""
    return F0Problem(field.mesh, ec, mp).breakdown(field.q)


def f0_gradient(field: QField2D, ec: ElasticConstants, mp: ModelParams) -> np.ndarray:
    return F0Problem(field.mesh, ec, mp).energy_grad_q(field.q)[1]


# ---------------------------------------------------------------------------
# pointwise elastic identity in the film variables


def fe0_pointwise(grad_p, grad_b, M2: float, M3: float) -> np.ndarray:
    """Planar elastic density of the film tensor from exact derivatives.

    ``grad_p[..., a, k] = ∂_k p_a`` and ``grad_b[..., k] = ∂_k b``.
    """
    gp = np.asarray(grad_p, dtype=float)
    gb = np.asarray(grad_b, dtype=float)
    dx = full(q_from_p_array(gp[..., :, 0], gb[..., 0]))
    dy = full(q_from_p_array(gp[..., :, 1], gb[..., 1]))
    return elastic_groups(dx, dy, np.zeros_like(dx), M2, M3)[0]


def _film_terms(grad_p, grad_b):
    gp = np.asarray(grad_p, dtype=float)
    gb = np.asarray(grad_b, dtype=float)
    p1x, p1y = gp[..., 0, 0], gp[..., 0, 1]
    p2x, p2y = gp[..., 1, 0], gp[..., 1, 1]
    bx, by = gb[..., 0], gb[..., 1]
    grad2 = p1x**2 + p1y**2 + p2x**2 + p2y**2
    bgrad2 = bx**2 + by**2
    cross = p1x * bx - p1y * by + p2y * bx + p2x * by
    jac = p1x * p2y - p1y * p2x
    return grad2, bgrad2, cross, jac


def bpp_bracket(grad_p, grad_b, M2: float, M3: float, convention: str = "abs"):
    """The film-variable bracket as commonly quoted.

    ``½(2+M)|∇p|² + ⅛(6+M)|∇b|² + (M/2)·cross + c·J`` with ``M = M2 + M3``
    and ``c = |M|`` (``convention="abs"``) or ``c = M`` (``"signed"``).
    """
    if convention not in ("abs", "signed"):
        raise ValueError("convention must be 'abs' or 'signed'")
    M = M2 + M3
    grad2, bgrad2, cross, jac = _film_terms(grad_p, grad_b)
    c = abs(M) if convention == "abs" else M
    return 0.5 * (2 + M) * grad2 + 0.125 * (6 + M) * bgrad2 + 0.5 * M * cross + c * jac


def film_elastic_density(grad_p, grad_b, M2: float, M3: float):
    """Planar elastic density expressed in ``(∇p, ∇b)``.

    ``(2+M)|∇p|² + ¼(6+M)|∇b|² - M·cross + 2(M2-M3)·J``; this is an exact
    algebraic rewriting of :func:`fe0_pointwise`.
    """
    M = M2 + M3
    grad2, bgrad2, cross, jac = _film_terms(grad_p, grad_b)
    return (2 + M) * grad2 + 0.25 * (6 + M) * bgrad2 - M * cross + 2 * (M2 - M3) * jac


def bpp_identity_residual(grad_p, grad_b, M2: float, M3: float, convention: str = "abs") -> float:
    """Max-norm of ``f_e⁰ − bracket`` over the supplied sample points."""
    r = fe0_pointwise(grad_p, grad_b, M2, M3) - bpp_bracket(grad_p, grad_b, M2, M3, convention)
    return float(np.max(np.abs(r), initial=0.0))


def film_identity_residual(grad_p, grad_b, M2: float, M3: float) -> float:
    r = fe0_pointwise(grad_p, grad_b, M2, M3) - film_elastic_density(grad_p, grad_b, M2, M3)
    return float(np.max(np.abs(r), initial=0.0))


# ---------------------------------------------------------------------------
# Euler-Lagrange residual and linear stability


def laplacian(mesh: Mesh2D, u: np.ndarray) -> np.ndarray:
    """Discrete ``-Δu``: Q1 stiffness over lumped mass, zero on boundary nodes."""
    out = (mesh.gx.T @ (mesh.gw * (mesh.gx @ u)) + mesh.gy.T @ (mesh.gw * (mesh.gy @ u))) / mesh.mass
    out[mesh.boundary] = 0.0
    return out


def allen_cahn_residual(mesh: Mesh2D, p: np.ndarray, spec: PotentialSpec, forcing=None) -> np.ndarray:
    """Nodal ``-Δp + W'(p)/δ² - f`` for a scalar profile; zero on ∂Ω."""
    p = np.asarray(p, dtype=float)
    r = laplacian(mesh, p) + potential_w_prime(p, spec) / spec.delta**2
    if forcing is not None:
        r = r - forcing
    r[mesh.boundary] = 0.0
    return r


@lru_cache(maxsize=16)
def laplacian_eigenvalue(mesh: Mesh2D, tol: float = 1e-10, max_iters: int = 1000) -> float:
    """Smallest Dirichlet eigenvalue by inverse power iteration (shift 0)."""
    K = mesh.stiffness()
    inner = ~mesh.boundary
    Ki = K[inner][:, inner].tocsc()
    m = mesh.mass[inner]
    lu = sla.splu(Ki)
    v = np.ones(inner.sum())
    v /= math.sqrt(v @ (m * v))
    lam = v @ (Ki @ v)
    for _ in range(max_iters):
        w = lu.solve(m * v)
        w /= math.sqrt(w @ (m * w))
        new = float(w @ (Ki @ w))
        v = w
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    raise RuntimeError("inverse power iteration did not converge")


def stability_threshold(mesh: Mesh2D, spec: PotentialSpec) -> float:
    """Smallest eigenvalue of ``-Δ + 2C̃/δ²``; negative means the zero state is unstable."""
    return laplacian_eigenvalue(mesh) + 2.0 * spec.Ctilde / spec.delta**2

