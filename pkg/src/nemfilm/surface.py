"""Surface energies on a film face and the classification of their minima.

The bare surface density is

    f_s(Q, ν) = c1 (Qν·ν) + c2 Q·Q + c3 (Qν·ν)² + c4 |Qν|²,

and in the anchoring form used on the film faces

    f_s(Q, ν) = α [(Qν·ν) - β]² + γ |(I - ν⊗ν) Qν|².

:func:`classify_regime` decides, from ``(c1, c2, c3, c4)`` alone, whether the
bare energy is bounded below over traceless symmetric tensors and, if so,
which family of tensors attains the minimum.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import EZ, QTensor, _as_matrix, _unit, check_eigenvalue_bounds, pack

EQ_TOL = 1e-12


class Regime(str, enum.Enum):
    CASE_I = "CaseI"
    CASE_II = "CaseII"
    CASE_III = "CaseIII"
    CASE_IV = "CaseIV"
    CASE_V = "CaseV"
    UNBOUNDED = "Unbounded"


class NoWitnessFound(RuntimeError):
    """Scaling along every known unbounded direction failed to reach the target."""


@dataclass(frozen=True)
class SurfaceCoefficients:
    c1: float
    c2: float
    c3: float
    c4: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError("surface coefficients must be finite")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.c1, self.c2, self.c3, self.c4)


@dataclass(frozen=True)
class AnchoringParams:
    """Anchoring strengths split by order in the film aspect ratio ε.

    ``α = alpha0 + ε alpha1`` and ``γ = gamma0 + ε gamma1``; at most one of
    each pair may be nonzero.
    """

    alpha0: float = 0.0
    alpha1: float = 0.0
    gamma0: float = 0.0
    gamma1: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("alpha0", "alpha1", "gamma0", "gamma1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.alpha0 * self.alpha1 != 0 or self.gamma0 * self.gamma1 != 0:
            raise ValueError("anchoring split requires alpha0*alpha1 = gamma0*gamma1 = 0")

    def alpha(self, eps: float) -> float:
        return self.alpha0 + eps * self.alpha1

    def gamma(self, eps: float) -> float:
        return self.gamma0 + eps * self.gamma1


@dataclass(frozen=True)
class RegimeReport:
    variant: Regime
    coefficients: SurfaceCoefficients
    min_value: float | None = None
    normal_value: float | None = None  # Qν·ν on the minimising family
    tangent_eigenvalue: float | None = None  # case III only
    family_dimension: int | None = None
    description: str = ""
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant.value,
            "c": list(self.coefficients.as_tuple()),
            "min_value": self.min_value,
            "normal_value": self.normal_value,
            "tangent_eigenvalue": self.tangent_eigenvalue,
            "family_dimension": self.family_dimension,
            "description": self.description,
        }
        out.update(self.data)
        return out


# ---------------------------------------------------------------------------
# evaluation


def _normal_parts(m: np.ndarray, nu: np.ndarray):
    x = m @ nu
    xn = float(x @ nu)
    return x, xn


def eval_bare(Q, nu, c: SurfaceCoefficients) -> float:
    m = _as_matrix(Q)
    nu = _unit(nu, "normal")
    x, xn = _normal_parts(m, nu)
    return c.c1 * xn + c.c2 * float(np.sum(m * m)) + c.c3 * xn**2 + c.c4 * float(x @ x)


def eval_anchoring(Q, nu, alpha: float, beta: float, gamma: float) -> float:
    m = _as_matrix(Q)
    nu = _unit(nu, "normal")
    x, xn = _normal_parts(m, nu)
    t = x - xn * nu
    return alpha * (xn - beta) ** 2 + gamma * float(t @ t)


def eval_fs0(Q, nu, params: AnchoringParams) -> float:
    return eval_anchoring(Q, nu, params.alpha0, params.beta, params.gamma0)


def eval_fs1(Q, nu, params: AnchoringParams) -> float:
    return eval_anchoring(Q, nu, params.alpha1, params.beta, params.gamma1)


def bare_from_anchoring(alpha: float, beta: float, gamma: float) -> SurfaceCoefficients:
    """Bare coefficients equal to the anchoring form up to the constant ``αβ²``."""
    return SurfaceCoefficients(-2.0 * alpha * beta, 0.0, alpha - gamma, gamma)


def anchoring_from_bare(c: SurfaceCoefficients) -> tuple[float, float, float]:
    """``(α, β, γ)`` for ``c2 = 0`` and ``c3 + c4 > 0``."""
    if c.c2 != 0:
        raise ValueError("anchoring form requires c2 = 0")
    a = c.c3 + c.c4
    if a <= 0:
        raise ValueError("anchoring form requires c3 + c4 > 0")
    return a, -c.c1 / (2.0 * a), c.c4


# ---------------------------------------------------------------------------
# classification


def classify_regime(c: SurfaceCoefficients) -> RegimeReport:
    c1, c2, c3, c4 = c.as_tuple()
    tol = EQ_TOL * max(abs(v) for v in c.as_tuple()) if any(c.as_tuple()) else 0.0

    def pos(v):
        return v > tol

    def zero(v):
        return abs(v) <= tol

    k_normal = 3 * c2 + 2 * c3 + 2 * c4  # curvature along uniaxial ν-direction (x2)
    k_shear = 2 * c2 + c4  # curvature of tangential part of Qν

    if pos(c2) and pos(k_shear) and pos(k_normal):
        lam = -c1 / k_normal
        return RegimeReport(
            Regime.CASE_I, c,
            min_value=-c1**2 / (2 * k_normal),
            normal_value=lam,
            family_dimension=0,
            description="unique uniaxial homeotropic minimiser with eigenvalue "
            f"{lam:.12g} on the normal",
            data={"lambda": lam, "order_parameter": 1.5 * lam},
        )
    if pos(c2) and pos(k_shear) and zero(k_normal) and zero(c1):
        return RegimeReport(
            Regime.CASE_II, c,
            min_value=0.0,
            family_dimension=1,
            description="one-parameter family: any uniaxial homeotropic tensor",
        )
    if pos(c2) and pos(2 * c3 - c2) and zero(k_shear):
        sigma = c1 / (c2 - 2 * c3)
        return RegimeReport(
            Regime.CASE_III, c,
            min_value=-c1**2 / (4 * c3 - 2 * c2),
            normal_value=sigma,
            tangent_eigenvalue=c1 / (4 * c3 - 2 * c2),
            family_dimension=2,
            description="two-parameter biaxial family, free tangential part of Qν",
        )
    if pos(k_shear) and pos(c3 + c4) and zero(c2):
        mu0 = -c1 / (2 * (c3 + c4))
        return RegimeReport(
            Regime.CASE_IV, c,
            min_value=-c1**2 / (4 * (c3 + c4)),
            normal_value=mu0,
            family_dimension=3,
            description="ν is an eigenvector with fixed eigenvalue; free tangential "
            "frame and splitting μ",
            data={"eigenvalue": mu0},
        )
    if pos(c3) and zero(c2) and zero(c4):
        return RegimeReport(
            Regime.CASE_V, c,
            min_value=-c1**2 / (4 * c3),
            normal_value=-c1 / (2 * c3),
            family_dimension=4,
            description="only Qν·ν is fixed; remaining components arbitrary",
        )
    return RegimeReport(
        Regime.UNBOUNDED, c,
        description="surface energy unbounded below (or degenerate, see verify_unbounded)",
    )


# ---------------------------------------------------------------------------
# minimising families


def _frame(nu: np.ndarray, angle: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent pair (m, n) to ``nu``, rotated by ``angle``."""
    seed = EZ if abs(nu[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    if np.allclose(nu, EZ):
        a, b = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    else:
        a = np.cross(seed, nu)
        a /= np.linalg.norm(a)
        b = np.cross(nu, a)
    ca, sa = math.cos(angle), math.sin(angle)
    return ca * a + sa * b, -sa * a + ca * b


def _q(m: np.ndarray) -> QTensor:
    return QTensor.from_array(pack(m))


def minimizer_samples(
    report: RegimeReport, nu=EZ, count: int = 8, seed: int = 0, span: float = 0.5
) -> list[QTensor]:
    """Tensors from the minimising family of a bounded regime.

    Free parameters are swept over ``[-span, span]``; Case IV and V also draw
    seeded random tangent frames / remainders.  Use :func:`bounds_flags` to see
    which samples violate the physical eigenvalue range.
    """
    if report.variant is Regime.UNBOUNDED:
        raise ValueError("unbounded regime has no minimiser")
    if count < 1:
        raise ValueError("count must be positive")
    nu = _unit(nu, "normal")
    rng = np.random.default_rng(seed)
    P = np.eye(3) - np.outer(nu, nu)
    nn = np.outer(nu, nu)
    sweep = np.linspace(-span, span, count) if count > 1 else np.zeros(1)
    out = []
    v = report.variant
    if v is Regime.CASE_I:
        lam = report.normal_value
        q = _q(1.5 * lam * (nn - np.eye(3) / 3.0))
        out = [q] * count
    elif v is Regime.CASE_II:
        out = [_q(1.5 * t * (nn - np.eye(3) / 3.0)) for t in sweep]
    elif v is Regime.CASE_III:
        sigma = report.normal_value
        m_t, n_t = _frame(nu)
        base = sigma * nn - 0.5 * sigma * P
        for t in sweep:
            x = t * m_t + rng.uniform(-span, span) * n_t
            out.append(_q(base + np.outer(x, nu) + np.outer(nu, x)))
    elif v is Regime.CASE_IV:
        lam = report.normal_value
        for t in sweep:
            m_t, n_t = _frame(nu, rng.uniform(0.0, math.pi))
            out.append(_q(t * np.outer(m_t, m_t) + (-lam - t) * np.outer(n_t, n_t) + lam * nn))
    elif v is Regime.CASE_V:
        s = report.normal_value
        for t in sweep:
            m_t, n_t = _frame(nu, rng.uniform(0.0, math.pi))
            x = rng.uniform(-span, span) * m_t + rng.uniform(-span, span) * n_t
            q2 = t * np.outer(m_t, m_t) + (-s - t) * np.outer(n_t, n_t)
            q2 = q2 + rng.uniform(-span, span) * (np.outer(m_t, n_t) + np.outer(n_t, m_t))
            out.append(_q(s * nn + q2 + np.outer(x, nu) + np.outer(nu, x)))
    return out


def bounds_flags(samples) -> list[bool]:
    """True for samples whose eigenvalues lie in [-1/3, 2/3]."""
    return [check_eigenvalue_bounds(q).ok for q in samples]


# ---------------------------------------------------------------------------
# unbounded directions


def _directions(nu: np.ndarray) -> dict[str, np.ndarray]:
    m_t, n_t = _frame(nu)
    return {
        "tangent_traceless": np.outer(m_t, m_t) - np.outer(n_t, n_t),
        "tangent_shear": np.outer(m_t, nu) + np.outer(nu, m_t),
        "uniaxial_normal": np.outer(nu, nu) - 0.5 * (np.eye(3) - np.outer(nu, nu)),
    }


def verify_unbounded(
    c: SurfaceCoefficients, target: float = -1e6, nu=EZ, max_scale: float = 1e8
) -> QTensor:
    """Return a tensor whose bare energy is below ``target``.

    Along each candidate direction D the energy is a quadratic ``a s² + b s``
    in the scale s; a direction is usable when ``a < 0`` or ``a = 0, b ≠ 0``.
    The scale is doubled until the target is beaten or ``max_scale`` is passed.
    """
    if classify_regime(c).variant is not Regime.UNBOUNDED:
        raise ValueError("coefficients are in a bounded regime")
    nu = _unit(nu, "normal")
    for name, D in _directions(nu).items():
        Q = _q(D)
        a = 0.5 * (eval_bare(Q, nu, c) + eval_bare(-1.0 * Q, nu, c))
        b = 0.5 * (eval_bare(Q, nu, c) - eval_bare(-1.0 * Q, nu, c))
        scale_tol = EQ_TOL * max(abs(v) for v in c.as_tuple())
        if a < -scale_tol:
            sign = 1.0 if b <= 0 else -1.0
        elif abs(a) <= scale_tol and abs(b) > scale_tol:
            sign = -math.copysign(1.0, b)
        else:
            continue
        s = 1.0
        while s <= max_scale:
            cand = _q(sign * s * D)
            if eval_bare(cand, nu, c) < target:
                return cand
            s *= 2.0
    raise NoWitnessFound(f"no witness found below {target} for c={c.as_tuple()}")
