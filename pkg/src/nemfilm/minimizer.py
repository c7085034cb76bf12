"""Boundary data for the planar problem and the 2D solver drivers."""
from __future__ import annotations

import enum
import math
import numbers
from dataclasses import dataclass, field

import numpy as np

from .energy2d import F0Problem, PField, PotentialSpec, QField2D, ReducedProblem, allen_cahn_residual
from .energy3d import ElasticConstants, ModelParams, bulk_shift
from .mesh import Mesh2D
from .optim import NumericalFailure, Preconditioner, SolveReport, SolverConfig, minimize_bb
from .tensor import q_from_p_array

__all__ = [
    "BoundaryKind",
    "BoundaryData",
    "NumericalFailure",
    "SolverConfig",
    "boundary_case1",
    "boundary_case2",
    "winding_number",
    "initial_pfield",
    "minimize_reduced",
    "minimize_f0_full",
]

PERTURBATION = 1e-3


class BoundaryKind(str, enum.Enum):
    CASE1 = "case1"
    CASE2 = "case2"


def winding_number(values: np.ndarray) -> float:
    """Winding of a closed planar loop, from wrapped phase increments."""
    ph = np.arctan2(values[:, 1], values[:, 0])
    d = np.diff(np.r_[ph, ph[0]])
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return float(d.sum() / (2 * np.pi))


@dataclass(eq=False)
class BoundaryData:
    kind: BoundaryKind
    beta: float
    nodes: np.ndarray  # boundary node indices, counter-clockwise
    values: np.ndarray  # (n_b, 2) values of p
    degree: int = 0

    def winding(self) -> int:
        if self.kind is BoundaryKind.CASE1:
            return 0
        return int(round(winding_number(self.values)))

    def apply(self, p: np.ndarray) -> np.ndarray:
        p = np.array(p, dtype=float, copy=True)
        p[self.nodes] = self.values
        return p

    def q_values(self) -> np.ndarray:
        return q_from_p_array(self.values, self.beta)


def boundary_case1(mesh: Mesh2D, beta: float) -> BoundaryData:
    nodes = mesh.boundary_loop()
    return BoundaryData(BoundaryKind.CASE1, float(beta), nodes, np.zeros((nodes.size, 2)), 0)


def _check_degree(d) -> int:
    if isinstance(d, bool) or not isinstance(d, (numbers.Integral, float, np.floating)):
        raise ValueError(f"degree must be an integer, got {d!r}")
    if isinstance(d, (float, np.floating)):
        if not float(d).is_integer():
            raise ValueError(f"degree must be an integer, got {d!r}")
    return int(d)


def case2_datum(theta, degree: int, beta: float) -> np.ndarray:
    """``p(θ) = -(3β/2)(cos dθ, sin dθ)``."""
    theta = np.asarray(theta, dtype=float)
    a = -1.5 * beta
    return np.stack([a * np.cos(degree * theta), a * np.sin(degree * theta)], axis=-1)


def boundary_case2(mesh: Mesh2D, degree, beta: float, theta=None) -> BoundaryData:
    """Planar-director data of winding ``degree``.

    ``theta`` defaults to the polar angle of each boundary node about the
    domain centre.
    """
    d = _check_degree(degree)
    nodes = mesh.boundary_loop()
    th = mesh.boundary_angle(mesh.nodes[nodes]) if theta is None else np.asarray(theta, float)
    return BoundaryData(BoundaryKind.CASE2, float(beta), nodes, case2_datum(th, d, beta), d)


def initial_pfield(mesh: Mesh2D, bd: BoundaryData, seed: int, amplitude: float = PERTURBATION) -> np.ndarray:
    """Boundary datum blended to zero inside, plus a smooth seeded perturbation.

    The perturbation is a random constant vector times an interior bump with
    10% nodal noise, so its phase is nearly uniform.
    """
    rng = np.random.default_rng(seed)
    dist = mesh.dist_to_boundary()
    bump = dist / dist.max()
    p = np.zeros((mesh.n_nodes, 2))
    if bd.kind is BoundaryKind.CASE2:
        th = mesh.boundary_angle()
        p = case2_datum(th, bd.degree, bd.beta) * (1.0 - bump)[:, None]
    ang = rng.uniform(0.0, 2 * np.pi)
    direction = np.array([math.cos(ang), math.sin(ang)])
    noise = rng.standard_normal((mesh.n_nodes, 2))
    p = p + amplitude * bump[:, None] * (direction + 0.1 * noise)
    return bd.apply(p)


@dataclass
class ReducedReport:
    status: str
    iterations: int
    energy: float
    grad_norm: float
    stages: list = field(default_factory=list)  # (delta, status, iterations, energy, grad_norm)
    history: list = field(default_factory=list)
    allen_cahn_residual: float | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "allen_cahn_residual": self.allen_cahn_residual,
            "stages": [list(s) for s in self.stages],
        }


def _scalar_profile(p: np.ndarray) -> np.ndarray:
    """Signed projection of ``p`` on its dominant direction."""
    s = p.sum(axis=0)
    n = math.hypot(*s)
    e = s / n if n > 0 else np.array([1.0, 0.0])
    return p @ e


def minimize_reduced(
    mesh: Mesh2D,
    bd: BoundaryData,
    spec: PotentialSpec,
    cfg: SolverConfig,
    initial: np.ndarray | None = None,
) -> tuple[PField, ReducedReport]:
    """Relax the reduced functional, optionally through a δ ladder.

    Ladder values ``cfg.continuation`` larger than ``spec.delta`` are solved
    first, each from the previous result.
    """
    p = initial_pfield(mesh, bd, cfg.seed) if initial is None else bd.apply(initial)
    free = np.ones(mesh.n_nodes, dtype=bool)
    free[bd.nodes] = False
    ladder = [d for d in cfg.continuation if d > spec.delta] + [spec.delta]
    K = mesh.stiffness()
    stages, history, total = [], [], 0
    rep: SolveReport | None = None
    for delta in ladder:
        prob = ReducedProblem(mesh, spec.with_delta(delta))
        pc = Preconditioner(K, mesh.mass, free, (1.0 + 4.0 * abs(spec.Ctilde)) / delta**2)
        p, rep = minimize_bb(prob.energy_grad, p, mesh.mass, free, cfg, precond=pc)
        stages.append((delta, rep.status, rep.iterations, rep.energy, rep.grad_norm))
        history.extend((total + it, E, g) for it, E, g in rep.history)
        total += rep.iterations
    out = PField(mesh, p, bd.beta)
    ac = None
    if bd.kind is BoundaryKind.CASE1:
        ac = float(np.abs(allen_cahn_residual(mesh, _scalar_profile(p), spec)).max())
    report = ReducedReport(rep.status, total, rep.energy, rep.grad_norm, stages, history, ac)
    return out, report


def minimize_f0_full(
    mesh: Mesh2D,
    bd: BoundaryData,
    ec: ElasticConstants,
    mp: ModelParams,
    cfg: SolverConfig,
    free_b: bool | None = None,
    initial: np.ndarray | None = None,
):
    """Relax the limit energy over film tensors.

    Unknowns are ``(p1, p2, b)`` per node; with ``free_b`` False (the default
    when ``alpha0 > 0``) ``b`` stays at β.  Returns ``(QField2D, breakdown,
    report)``.
    """
    a = mp.anchoring
    if free_b is None:
        free_b = a.alpha0 == 0
    if free_b and a.alpha0 > 0:
        raise ValueError("b cannot be free when alpha0 > 0: the constraint pins it to beta")
    prob = F0Problem(mesh, ec, mp)
    beta = bd.beta
    if initial is None:
        p0 = initial_pfield(mesh, bd, cfg.seed)
        x0 = np.column_stack([p0, np.full(mesh.n_nodes, beta)])
    else:
        x0 = np.array(initial, dtype=float, copy=True)
        if x0.shape[1] == 2:
            x0 = np.column_stack([x0, np.full(mesh.n_nodes, beta)])
        x0[:, :2] = bd.apply(x0[:, :2])
    x0[bd.nodes, 2] = beta
    free = np.ones(mesh.n_nodes, dtype=bool)
    free[bd.nodes] = False
    pc = Preconditioner(2.0 * ec.M * mesh.stiffness(), mesh.mass, free, bulk_shift(mp))
    if free_b:
        x, rep = minimize_bb(prob.energy_grad_pb, x0, mesh.mass, free, cfg, precond=pc)
    else:
        fun = lambda p: prob.energy_grad_p(p, beta)
        p, rep = minimize_bb(fun, x0[:, :2], mesh.mass, free, cfg, precond=pc)
        x = np.column_stack([p, np.full(mesh.n_nodes, beta)])
    q = q_from_p_array(x[:, :2], x[:, 2])
    out = QField2D(mesh, q)
    return out, prob.breakdown(q), rep
