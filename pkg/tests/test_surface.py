import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nemfilm.surface import (
    AnchoringParams,
    NoWitnessFound,
    Regime,
    SurfaceCoefficients,
    anchoring_from_bare,
    bare_from_anchoring,
    bounds_flags,
    classify_regime,
    eval_anchoring,
    eval_bare,
    eval_fs0,
    eval_fs1,
    minimizer_samples,
    verify_unbounded,
)
from nemfilm.tensor import EZ, QTensor, make_uniaxial, q_from_p

coef = st.floats(-3, 3, allow_nan=False)
qvec = st.tuples(*[st.floats(-1, 1)] * 5)


def test_eval_bare_examples():
    c = SurfaceCoefficients(1, 1, 1, 1)
    assert eval_bare(QTensor(), EZ, c) == 0.0
    Q = make_uniaxial(1.0, EZ)
    assert eval_bare(Q, EZ, SurfaceCoefficients(0, 1, 0, 0)) == pytest.approx(2 / 3, abs=1e-15)


def test_case1_minimum_beats_random_probes():
    c = SurfaceCoefficients(1, 1, 1, 1)
    lam = -1 / 7
    Qs = make_uniaxial(1.5 * lam, EZ)
    e0 = eval_bare(Qs, EZ, c)
    rng = np.random.default_rng(0)
    q = rng.uniform(-2, 2, (100_000, 5))
    m = np.zeros((q.shape[0], 3, 3))
    m[:, 0, 0], m[:, 0, 1], m[:, 0, 2], m[:, 1, 1], m[:, 1, 2] = q.T
    m[:, 1, 0], m[:, 2, 0], m[:, 2, 1] = m[:, 0, 1], m[:, 0, 2], m[:, 1, 2]
    m[:, 2, 2] = -q[:, 0] - q[:, 3]
    x = m[:, :, 2]
    vals = x[:, 2] + np.einsum("nij,nij->n", m, m) + x[:, 2] ** 2 + np.einsum("ni,ni->n", x, x)
    assert vals.min() >= e0


def test_anchoring_examples():
    beta = 0.2
    for p in [(0.0, 0.0), (0.3, -0.1), (2.0, 1.0)]:
        assert eval_anchoring(q_from_p((*p, beta)), EZ, 1.0, beta, 2.0) <= 1e-30
    R = np.array([[1, 0, 0], [0, np.cos(0.4), -np.sin(0.4)], [0, np.sin(0.4), np.cos(0.4)]])
    tilted = QTensor.from_matrix(R @ np.diag([-beta / 2, -beta / 2, beta]) @ R.T)
    assert eval_anchoring(tilted, EZ, 1.0, beta, 1.0) > 0


@given(qvec, st.floats(0, 3), st.floats(-1, 1), st.floats(0, 3))
def test_anchoring_bare_correspondence(q, alpha, beta, gamma):
    Q = QTensor(*q)
    c = bare_from_anchoring(alpha, beta, gamma)
    lhs = eval_bare(Q, EZ, c)
    rhs = eval_anchoring(Q, EZ, alpha, beta, gamma) - alpha * beta**2
    assert lhs == pytest.approx(rhs, abs=1e-12)


@given(qvec, st.floats(-2, 2), st.floats(0.01, 3), st.floats(0.01, 3))
def test_bare_to_anchoring_correspondence(q, c1, c3, c4):
    c = SurfaceCoefficients(c1, 0.0, c3, c4)
    alpha, beta, gamma = anchoring_from_bare(c)
    Q = QTensor(*q)
    assert eval_bare(Q, EZ, c) == pytest.approx(eval_anchoring(Q, EZ, alpha, beta, gamma) - alpha * beta**2, abs=1e-12)


def test_split_examples(rng):
    p = AnchoringParams(alpha0=1.0, gamma0=2.0, beta=0.2)
    for _ in range(5):
        assert eval_fs1(QTensor(*rng.uniform(-1, 1, 5)), EZ, p) == 0.0
    p = AnchoringParams(alpha1=3.0, gamma0=2.0, beta=0.2)
    for _ in range(5):
        Q = QTensor(*rng.uniform(-1, 1, 5))
        x = Q.matrix @ EZ
        t = x - x[2] * EZ
        assert eval_fs0(Q, EZ, p) == pytest.approx(2.0 * t @ t, abs=1e-15)
        assert eval_fs1(Q, EZ, p) == pytest.approx(3.0 * (x[2] - 0.2) ** 2, abs=1e-15)


@given(qvec, st.sampled_from([(1.0, 0.0, 2.0, 0.0), (0.0, 1.5, 2.0, 0.0), (1.0, 0.0, 0.0, 4.0), (0.0, 2.0, 0.0, 1.0)]))
def test_split_sum_identity(q, split):
    eps = 0.1
    p = AnchoringParams(*split, beta=0.2)
    Q = QTensor(*q)
    total = eval_anchoring(Q, EZ, p.alpha(eps), p.beta, p.gamma(eps))
    assert eval_fs0(Q, EZ, p) + eps * eval_fs1(Q, EZ, p) == pytest.approx(total, abs=1e-12)


def test_anchoring_split_invariant():
    with pytest.raises(ValueError):
        AnchoringParams(alpha0=1.0, alpha1=1.0)
    with pytest.raises(ValueError):
        AnchoringParams(gamma0=1.0, gamma1=1.0)
    with pytest.raises(ValueError):
        AnchoringParams(alpha0=-1.0)


def test_classify_examples():
    r = classify_regime(SurfaceCoefficients(1, 1, 1, 1))
    assert r.variant is Regime.CASE_I
    assert r.data["lambda"] == pytest.approx(-1 / 7, abs=1e-15)
    assert classify_regime(SurfaceCoefficients(0, -1, 0, 0)).variant is Regime.UNBOUNDED
    r = classify_regime(SurfaceCoefficients(1, 1, 2, -2))
    assert r.variant is Regime.CASE_III
    assert r.normal_value == pytest.approx(-1 / 3, abs=1e-15)
    assert r.tangent_eigenvalue == pytest.approx(1 / 6, abs=1e-15)
    r = classify_regime(SurfaceCoefficients(1, 0, 1, 1))
    assert r.variant is Regime.CASE_IV
    assert r.normal_value == pytest.approx(-1 / 4, abs=1e-15)
    assert classify_regime(SurfaceCoefficients(0, 1, -2.5, 1)).variant is Regime.CASE_II
    assert classify_regime(SurfaceCoefficients(1, 0, 2, 0)).variant is Regime.CASE_V


@given(coef, coef, coef, coef, st.floats(0.01, 100))
def test_classify_scale_invariance(c1, c2, c3, c4, s):
    a = classify_regime(SurfaceCoefficients(c1, c2, c3, c4))
    b = classify_regime(SurfaceCoefficients(s * c1, s * c2, s * c3, s * c4))
    assert a.variant is b.variant
    if a.normal_value is not None:
        assert b.normal_value == pytest.approx(a.normal_value, rel=1e-12, abs=1e-14)


def test_case1_sample_is_single_tensor():
    r = classify_regime(SurfaceCoefficients(1, 1, 1, 1))
    s = minimizer_samples(r, EZ, count=3)
    assert len(s) == 3
    np.testing.assert_allclose(s[0].matrix, (1.5 * (-1 / 7)) * (np.outer(EZ, EZ) - np.eye(3) / 3), atol=1e-15)


def test_case4_samples():
    r = classify_regime(SurfaceCoefficients(1, 0, 1, 1))
    for Q in minimizer_samples(r, EZ, count=12, seed=3):
        x = Q.matrix @ EZ
        assert x[2] == pytest.approx(-0.25, abs=1e-14)
        assert np.hypot(x[0], x[1]) <= 1e-14


@pytest.mark.parametrize(
    "c",
    [(1, 1, 1, 1), (0, 1, -2.5, 1), (1, 1, 2, -2), (1, 0, 1, 1), (1, 0, 2, 0), (-0.7, 2, 3, -1)],
)
def test_samples_attain_common_minimum(c):
    c = SurfaceCoefficients(*c)
    r = classify_regime(c)
    samples = minimizer_samples(r, EZ, count=10, seed=1)
    vals = np.array([eval_bare(Q, EZ, c) for Q in samples])
    assert np.ptp(vals) <= 1e-10
    assert vals[0] == pytest.approx(r.min_value, abs=1e-10)
    rng = np.random.default_rng(2)
    probes = [QTensor(*rng.uniform(-2, 2, 5)) for _ in range(2000)]
    assert min(eval_bare(Q, EZ, c) for Q in probes) >= r.min_value - 1e-8
    assert len(bounds_flags(samples)) == len(samples)


def test_case3_eigenvector_property():
    r = classify_regime(SurfaceCoefficients(1, 1, 2, -2))
    for Q in minimizer_samples(r, EZ, count=8, seed=5):
        v = np.array([-Q.q23, Q.q13, 0.0])
        if np.linalg.norm(v) < 1e-12:
            continue
        w = Q.matrix @ v
        assert np.linalg.norm(np.cross(w, v)) <= 1e-12 * max(1, np.linalg.norm(w))


def test_general_normal():
    nu = np.array([1.0, 2.0, 2.0]) / 3
    c = SurfaceCoefficients(1, 1, 1, 1)
    r = classify_regime(c)
    for Q in minimizer_samples(r, nu, count=2):
        assert eval_bare(Q, nu, c) == pytest.approx(r.min_value, abs=1e-12)
        x = Q.matrix @ nu
        assert np.linalg.norm(x - (x @ nu) * nu) <= 1e-14


def test_unbounded_rejects_samples():
    with pytest.raises(ValueError):
        minimizer_samples(classify_regime(SurfaceCoefficients(0, -1, 0, 0)))


@pytest.mark.parametrize("c", [(0, -1, 0, 0), (1, 1, -10, 0), (0, 1, 0, -3), (1, 0, -1, 0.5)])
def test_verify_unbounded_witness(c):
    c = SurfaceCoefficients(*c)
    Q = verify_unbounded(c, target=-1e6)
    assert eval_bare(Q, EZ, c) < -1e6


def test_verify_unbounded_rejects_bounded():
    with pytest.raises(ValueError):
        verify_unbounded(SurfaceCoefficients(1, 1, 1, 1))


def test_degenerate_complement_point_reports_no_witness():
    # all coefficients zero: energy identically zero, outside the five cases
    with pytest.raises(NoWitnessFound):
        verify_unbounded(SurfaceCoefficients(0, 0, 0, 0))


def test_report_dict_is_serialisable():
    import json

    d = classify_regime(SurfaceCoefficients(1, 1, 1, 1)).to_dict()
    assert json.loads(json.dumps(d))["variant"] == "CaseI"
    assert np.isclose(d["lambda"], -1 / 7)
