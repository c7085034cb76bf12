"""Monotone Barzilai-Borwein descent with Armijo backtracking.

The unknown is a nodal array ``x`` of shape ``(N, k)``.  Directions are
preconditioned either by the lumped mass or by a fixed shifted stiffness
matrix ``K + σM`` (factored once), which removes the mesh-size dependence of
the step.  In both cases ``g / m`` is the pointwise residual of the
Euler-Lagrange equation and its sup-norm is the stopping measure.  The
energy callback returns per-quadrature contributions as well as the total;
acceptance tests compare those parts term by term, which keeps the decrease
test meaningful once the energy change falls below the roundoff of the total.
When even the predicted decrease is below the roundoff of the parts, a step
is accepted if the energy change is also within that roundoff floor; the
energy is then non-increasing up to a few ulps of its scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla


class NumericalFailure(RuntimeError):
    """Energy or gradient became non-finite."""


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iters: int = 20000
    seed: int = 0
    continuation: tuple[float, ...] = ()
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60
    step_min: float = 1e-14
    step_max: float = 1e6
    roundoff: float = 64 * np.finfo(float).eps

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        c = tuple(float(v) for v in self.continuation)
        object.__setattr__(self, "continuation", c)
        if any(v <= 0 for v in c):
            raise ValueError("continuation values must be positive")
        if any(b >= a for a, b in zip(c, c[1:])):
            raise ValueError("continuation must be strictly decreasing")
        if not (0 < self.shrink < 1 and 0 < self.armijo < 1):
            raise ValueError("line-search parameters out of range")


@dataclass
class SolveReport:
    status: str  # converged | max_iters | stalled
    iterations: int
    energy: float
    grad_norm: float
    history: list = field(default_factory=list)  # (iteration, energy, grad_norm)

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
        }


class Preconditioner:
    """Solves ``(K + σ M) d = g`` on the free rows, column by column."""

    def __init__(self, K: sp.spmatrix, mass: np.ndarray, free: np.ndarray, sigma: float):
        self.free = np.asarray(free, dtype=bool)
        A = (sp.csr_matrix(K) + sigma * sp.diags(mass))[self.free][:, self.free]
        self.lu = sla.splu(A.tocsc())

    def __call__(self, g: np.ndarray) -> np.ndarray:
        d = np.zeros_like(g)
        d[self.free] = self.lu.solve(np.ascontiguousarray(g[self.free]))
        return d


EnergyFn = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]


def _residual(g, mass, free):
    r = g / mass[:, None]
    r[~free] = 0.0
    return r


def minimize_bb(
    fun: EnergyFn,
    x0: np.ndarray,
    mass: np.ndarray,
    free: np.ndarray,
    cfg: SolverConfig,
    step0: float | None = None,
    precond: Preconditioner | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Minimise ``fun`` over the rows of ``x`` flagged in ``free``.

    ``fun(x)`` returns ``(energy, gradient, parts)`` with ``parts.sum() ==
    energy``.  Rows outside ``free`` are never modified.
    """

    def direction(g):
        if precond is None:
            return _residual(g, mass, free)
        d = precond(g)
        d[~free] = 0.0
        return d

    x = np.array(x0, dtype=float, copy=True)
    if x.ndim == 1:
        x = x[:, None]
    free = np.asarray(free, dtype=bool)
    mass = np.asarray(mass, dtype=float)
    E, g, parts = fun(x)
    if not (math.isfinite(E) and np.all(np.isfinite(g))):
        raise NumericalFailure("non-finite energy or gradient at the initial field")
    gnorm = float(np.abs(_residual(g, mass, free)).max(initial=0.0))
    r = direction(g)
    history = [(0, float(E), gnorm)]
    if gnorm <= cfg.tol:
        return x, SolveReport("converged", 0, float(E), gnorm, history)

    if step0 is not None:
        tau = step0
    elif precond is None:
        tau = 1.0 / max(1.0, gnorm)
    else:
        tau = 1.0
    status = "max_iters"
    it = 0
    for it in range(1, cfg.max_iters + 1):
        slope = -float(np.sum(g * r))  # directional derivative along -r
        floor = cfg.roundoff * float(np.sum(np.abs(parts)))
        tau = min(max(tau, cfg.step_min), cfg.step_max)
        accepted = False
        for _ in range(cfg.max_backtracks):
            xn = x - tau * r
            En, gn, pn = fun(xn)
            if math.isfinite(En):
                dE = float(np.sum(pn - parts))
                bound = cfg.armijo * tau * slope
                if dE <= bound or (-bound < floor and dE <= floor):
                    accepted = True
                    break
            tau *= cfg.shrink
            if tau < cfg.step_min:
                break
        if not accepted:
            status = "stalled"
            it -= 1
            break
        if not np.all(np.isfinite(gn)):
            raise NumericalFailure(f"non-finite gradient at iteration {it}")
        s = xn - x
        sy = float(np.sum(s * (gn - g)))
        # ‖s‖² in the preconditioner metric; P r = g on free rows
        ss = tau * tau * float(np.sum(r * g))
        x, E, g, parts = xn, En, gn, pn
        r = direction(g)
        gnorm = float(np.abs(_residual(g, mass, free)).max(initial=0.0))
        history.append((it, float(E), gnorm))
        if gnorm <= cfg.tol:
            status = "converged"
            break
        tau = ss / sy if sy > 0 else 2.0 * tau
    if not math.isfinite(E):
        raise NumericalFailure("energy became non-finite")
    return x, SolveReport(status, it, float(E), gnorm, history)
