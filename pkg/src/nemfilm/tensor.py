"""Algebra of symmetric traceless 3x3 tensors (Q-tensors).

A Q-tensor is stored through its five independent components
``(q11, q12, q13, q22, q23)``; ``q33 = -q11 - q22`` is always derived, so a
stored tensor cannot lose tracelessness.  Field code works on ``(..., 5)``
arrays with the same component order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

UNIT_TOL = 1e-12
ISOTROPIC_TR2 = 1e-14

COMPONENTS = ("q11", "q12", "q13", "q22", "q23")

EX = np.array([1.0, 0.0, 0.0])
EY = np.array([0.0, 1.0, 0.0])
EZ = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class QTensor:
    q11: float = 0.0
    q12: float = 0.0
    q13: float = 0.0
    q22: float = 0.0
    q23: float = 0.0

    @property
    def q33(self) -> float:
        return -self.q11 - self.q22

    @property
    def matrix(self) -> np.ndarray:
        return full(self.array)

    @property
    def array(self) -> np.ndarray:
        return np.array([self.q11, self.q12, self.q13, self.q22, self.q23])

    @classmethod
    def from_array(cls, a) -> "QTensor":
        a = np.asarray(a, dtype=float)
        return cls(*(float(v) for v in a))

    @classmethod
    def from_matrix(cls, m, tol: float = 1e-12) -> "QTensor":
        """Build from a full 3x3 matrix, rejecting non-symmetric or traced input."""
        m = np.asarray(m, dtype=float)
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > tol * scale:
            raise ValueError("matrix is not symmetric")
        if abs(np.trace(m)) > tol * scale:
            raise ValueError(f"matrix is not traceless (trace={np.trace(m):.3e})")
        return cls(m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2])

    def __add__(self, other: "QTensor") -> "QTensor":
        return QTensor.from_array(self.array + other.array)

    def __sub__(self, other: "QTensor") -> "QTensor":
        return QTensor.from_array(self.array - other.array)

    def __mul__(self, s: float) -> "QTensor":
        return QTensor.from_array(self.array * s)

    __rmul__ = __mul__


class EigenSystem(NamedTuple):
    values: np.ndarray  # descending
    vectors: np.ndarray  # columns are eigenvectors


class PVector(NamedTuple):
    p1: float
    p2: float
    beta: float


class OrderParameters(NamedTuple):
    S: float | None  # uniaxial order parameter, None if biaxial
    S1: float
    S2: float


class BoundsCheck(NamedTuple):
    ok: bool
    worst: float | None


# ---------------------------------------------------------------------------
# array-level helpers, shape (..., 5) <-> (..., 3, 3)


def full(q) -> np.ndarray:
    """Expand ``(..., 5)`` component arrays into ``(..., 3, 3)`` matrices."""
    q = np.asarray(q, dtype=float)
    q11, q12, q13, q22, q23 = np.moveaxis(q, -1, 0)
    q33 = -q11 - q22
    rows = [
        np.stack([q11, q12, q13], axis=-1),
        np.stack([q12, q22, q23], axis=-1),
        np.stack([q13, q23, q33], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def pack(m) -> np.ndarray:
    """Inverse of :func:`full` for symmetric traceless input (no checks)."""
    m = np.asarray(m, dtype=float)
    return np.stack(
        [m[..., 0, 0], m[..., 0, 1], m[..., 0, 2], m[..., 1, 1], m[..., 1, 2]], axis=-1
    )


def pullback(g) -> np.ndarray:
    """Chain rule through :func:`full`: map d/dQ (..., 3, 3) to d/dq (..., 5)."""
    g = np.asarray(g, dtype=float)
    return np.stack(
        [
            g[..., 0, 0] - g[..., 2, 2],
            g[..., 0, 1] + g[..., 1, 0],
            g[..., 0, 2] + g[..., 2, 0],
            g[..., 1, 1] - g[..., 2, 2],
            g[..., 1, 2] + g[..., 2, 1],
        ],
        axis=-1,
    )


def tr2_array(q) -> np.ndarray:
    q11, q12, q13, q22, q23 = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    q33 = -q11 - q22
    return q11**2 + q22**2 + q33**2 + 2.0 * (q12**2 + q13**2 + q23**2)


def tr3_array(q) -> np.ndarray:
    m = full(q)
    return np.einsum("...ij,...jk,...ki->...", m, m, m)


def _as_matrix(Q) -> np.ndarray:
    if isinstance(Q, QTensor):
        return Q.matrix
    return np.asarray(Q, dtype=float)


def _unit(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be a unit 3-vector, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# constructors


def make_uniaxial(S: float, n) -> QTensor:
    """``S (n⊗n - I/3)``; eigenvalue 2S/3 on ``n`` and -S/3 (double) on its complement."""
    n = _unit(n, "director")
    return QTensor.from_array(pack(S * (np.outer(n, n) - np.eye(3) / 3.0)))


def make_biaxial(S1: float, S2: float, l, n) -> QTensor:
    l = _unit(l, "l")
    n = _unit(n, "n")
    if abs(float(l @ n)) > UNIT_TOL:
        raise ValueError("l and n must be orthogonal")
    eye = np.eye(3) / 3.0
    m = S1 * (np.outer(l, l) - eye) + S2 * (np.outer(n, n) - eye)
    return QTensor.from_array(pack(m))


def order_parameters(Q) -> OrderParameters:
    """Biaxial order parameters ``S1 = 2λ1+λ3``, ``S2 = λ1+2λ3`` from the eigenvalues.

    ``S`` is reported when two eigenvalues coincide (to 1e-10), as 3/2 of the
    distinct one.
    """
    lam = eigensystem(Q).values
    scale = max(1.0, float(np.abs(lam).max()))
    S = None
    if abs(lam[0] - lam[1]) <= 1e-10 * scale:
        S = 1.5 * lam[2]
    elif abs(lam[1] - lam[2]) <= 1e-10 * scale:
        S = 1.5 * lam[0]
    return OrderParameters(S, 2 * lam[0] + lam[2], lam[0] + 2 * lam[2])


# ---------------------------------------------------------------------------
# invariants


def frobenius(Q, R) -> float:
    a, b = _as_matrix(Q), _as_matrix(R)
    return float(np.sum(a * b))


def tr_q2(Q) -> float:
    m = _as_matrix(Q)
    return float(np.sum(m * m))


def tr_q3(Q) -> float:
    m = _as_matrix(Q)
    return float(np.trace(m @ m @ m))


def biaxiality(Q) -> float:
    """Biaxiality measure ξ with ξ² = 1 - 6 (tr Q³)² / (tr Q²)³, in [0, 1].

    The isotropic tensor is assigned ξ = 0.
    """
    t2 = tr_q2(Q)
    if t2 <= ISOTROPIC_TR2:
        return 0.0
    xi2 = 1.0 - 6.0 * tr_q3(Q) ** 2 / t2**3
    return math.sqrt(min(1.0, max(0.0, xi2)))


def biaxiality_array(q) -> np.ndarray:
    t2 = tr2_array(q)
    t3 = tr3_array(q)
    safe = np.where(t2 > ISOTROPIC_TR2, t2, 1.0)
    xi2 = np.clip(1.0 - 6.0 * t3**2 / safe**3, 0.0, 1.0)
    return np.where(t2 > ISOTROPIC_TR2, np.sqrt(xi2), 0.0)


def biaxiality_p_squared(p, beta):
    """Closed form of ξ² for the film tensor with in-plane amplitude ``p = |(p1, p2)|``.

    Vectorised over ``p`` and ``beta``.  Not clamped.
    """
    p = np.asarray(p, dtype=float)
    beta = np.asarray(beta, dtype=float)
    den = (4.0 * p**2 + 3.0 * beta**2) ** 3
    safe = np.where(den > ISOTROPIC_TR2**1.5, den, 1.0)
    val = 1.0 - 27.0 * beta**2 * (4.0 * p**2 - beta**2) ** 2 / safe
    return np.where(den > ISOTROPIC_TR2**1.5, val, 0.0)


def biaxiality_p(p, beta):
    """ξ(p, β) for the film parametrisation.

    The rational expression in ``p`` and ``β`` equals ξ², consistent with the
    trace definition; this returns its clamped square root.
    """
    out = np.sqrt(np.clip(biaxiality_p_squared(p, beta), 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def check_eigenvalue_bounds(Q, tol: float = 1e-12) -> BoundsCheck:
    """Advisory check that every eigenvalue lies in [-1/3, 2/3]."""
    lam = eigensystem(Q).values
    lo, hi = -1.0 / 3.0, 2.0 / 3.0
    viol = np.maximum(lo - lam, lam - hi)
    if viol.max() <= tol:
        return BoundsCheck(True, None)
    return BoundsCheck(False, float(lam[int(np.argmax(viol))]))


# ---------------------------------------------------------------------------
# film parametrisation


def q_from_p(pv) -> QTensor:
    p1, p2, beta = pv
    return QTensor(p1 - beta / 2.0, p2, 0.0, -p1 - beta / 2.0, 0.0)


def p_from_q(Q, tol: float = 1e-10) -> PVector:
    """Inverse of :func:`q_from_p`; requires ẑ to be an eigenvector of ``Q``."""
    if not isinstance(Q, QTensor):
        Q = QTensor.from_matrix(Q)
    off = math.hypot(Q.q13, Q.q23)
    if off > tol:
        raise ValueError(f"z is not an eigenvector: off-axis magnitude {off:.3e}")
    return PVector((Q.q11 - Q.q22) / 2.0, Q.q12, Q.q33)


def q_from_p_array(p, b) -> np.ndarray:
    """Film tensors for ``p`` of shape (..., 2) and ``b`` broadcastable to (...)."""
    p = np.asarray(p, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), p.shape[:-1])
    z = np.zeros_like(b)
    return np.stack([p[..., 0] - b / 2, p[..., 1], z, -p[..., 0] - b / 2, z], axis=-1)


# ---------------------------------------------------------------------------
# closed-form symmetric 3x3 eigensolver


def _null_vector(a: np.ndarray) -> np.ndarray:
    """Unit vector spanning the null space of a rank-2 symmetric matrix."""
    crosses = [np.cross(a[0], a[1]), np.cross(a[0], a[2]), np.cross(a[1], a[2])]
    norms = [float(np.linalg.norm(c)) for c in crosses]
    k = int(np.argmax(norms))
    return crosses[k] / norms[k]


def _complement_basis(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # seed with the standard basis vector least aligned with v (lowest index on ties)
    k = int(np.argmin(np.abs(v) + np.arange(3) * 1e-15))
    e = np.zeros(3)
    e[k] = 1.0
    u = e - (e @ v) * v
    u /= np.linalg.norm(u)
    w = np.cross(v, u)
    return u, w / np.linalg.norm(w)


def _fix_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    for c in v:
        if abs(c) > tol:
            return v if c > 0 else -v
    return v


def eigensystem(Q) -> EigenSystem:
    """Eigenvalues (descending) and an orthonormal eigenframe of a Q-tensor.

    Trigonometric solution of the depressed characteristic cubic, followed by
    a cross-product null vector for the best-separated eigenvalue and a 2x2
    rotation in its orthogonal complement.  Each eigenvector is signed so its
    first nonzero component is positive; eigenvectors of tied eigenvalues are
    ordered lexicographically (descending).
    """
    m = _as_matrix(Q)
    m = 0.5 * (m + m.T)
    m = m - np.trace(m) / 3.0 * np.eye(3)
    norm = float(np.sqrt(np.sum(m * m)))
    if norm == 0.0:
        return EigenSystem(np.zeros(3), np.eye(3))
    a = m / norm  # tr a² = 1

    # λ = 2 sqrt(J2/3) cos(φ - 2πk/3), J2 = tr a²/2 = 1/2
    r = np.linalg.det(a) * 3.0 * math.sqrt(6.0)  # = J3/2 * (3/J2)^{3/2}
    phi = math.acos(min(1.0, max(-1.0, r))) / 3.0
    rad = math.sqrt(2.0 / 3.0)
    lam = np.array([rad * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)])
    lam.sort()
    lam = lam[::-1]

    iso = 0 if lam[0] - lam[1] >= lam[1] - lam[2] else 2
    v = _null_vector(a - lam[iso] * np.eye(3))
    u, w = _complement_basis(v)
    b11, b12, b22 = u @ a @ u, u @ a @ w, w @ a @ w
    theta = 0.5 * math.atan2(2.0 * b12, b11 - b22)
    c, s = math.cos(theta), math.sin(theta)
    x1 = c * u + s * w
    x2 = -s * u + c * w
    vecs = [v, x1, x2]
    vals = np.array([float(x @ a @ x) for x in vecs])
    if abs(b11 - b22) <= 1e-14 and abs(b12) <= 1e-14:
        # degenerate pair: keep the deterministic complement basis
        vecs = [v, u, w]
        vals = np.array([float(x @ a @ x) for x in vecs])

    vecs = [_fix_sign(x) for x in vecs]
    tie = 1e-12
    order = sorted(range(3), key=lambda i: -vals[i])
    vals = vals[order]
    vecs = [vecs[i] for i in order]
    # lexicographic ordering inside tied groups
    i = 0
    while i < 3:
        j = i + 1
        while j < 3 and abs(vals[j] - vals[i]) <= tie:
            j += 1
        if j - i > 1:
            grp = sorted(range(i, j), key=lambda k: tuple(-vecs[k]))
            vecs[i:j] = [vecs[k] for k in grp]
        i = j
    return EigenSystem(vals * norm, np.column_stack(vecs))
