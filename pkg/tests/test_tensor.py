import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nemfilm.tensor import (
    EX,
    EY,
    EZ,
    PVector,
    QTensor,
    biaxiality,
    biaxiality_array,
    biaxiality_p,
    biaxiality_p_squared,
    check_eigenvalue_bounds,
    eigensystem,
    frobenius,
    full,
    make_biaxial,
    make_uniaxial,
    order_parameters,
    p_from_q,
    pack,
    q_from_p,
    q_from_p_array,
    tr_q2,
    tr_q3,
)

comp = st.floats(-1.0, 1.0, allow_nan=False)
qvec = st.tuples(comp, comp, comp, comp, comp)
unit = st.tuples(comp, comp, comp).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: np.asarray(v) / np.linalg.norm(v)
)


def test_uniaxial_examples():
    assert np.array_equal(make_uniaxial(0.0, EZ).matrix, np.zeros((3, 3)))
    np.testing.assert_allclose(make_uniaxial(1.0, EZ).matrix, np.diag([-1 / 3, -1 / 3, 2 / 3]), atol=1e-15)
    np.testing.assert_allclose(make_uniaxial(1.5 * 0.2, EZ).matrix, np.diag([-0.1, -0.1, 0.2]), atol=1e-15)
    # the same constant state through the film parametrisation
    np.testing.assert_allclose(q_from_p((0.0, 0.0, 0.2)).matrix, make_uniaxial(0.3, EZ).matrix, atol=1e-15)


def test_uniaxial_rejects_non_unit():
    with pytest.raises(ValueError):
        make_uniaxial(1.0, [0.0, 0.0, 2.0])


def test_biaxial_examples():
    np.testing.assert_allclose(make_biaxial(0.0, 0.7, EX, EZ).matrix, make_uniaxial(0.7, EZ).matrix, atol=1e-15)
    assert np.allclose(make_biaxial(0.0, 0.0, EX, EZ).matrix, 0.0)
    # matrix arithmetic oracle
    eye = np.eye(3) / 3
    expected = 1.0 * (np.outer(EX, EX) - eye) + 2.0 * (np.outer(EZ, EZ) - eye)
    np.testing.assert_allclose(make_biaxial(1.0, 2.0, EX, EZ).matrix, expected, atol=1e-15)
    np.testing.assert_allclose(np.diag(expected), [0.0, -1.0, 1.0], atol=1e-15)
    with pytest.raises(ValueError):
        make_biaxial(1.0, 1.0, EX, [1.0, 1.0, 0.0] / np.sqrt(2))


def test_eigensystem_examples():
    es = eigensystem(QTensor())
    assert np.array_equal(es.values, np.zeros(3))
    assert np.array_equal(es.vectors, np.eye(3))
    es = eigensystem(make_uniaxial(1.0, EZ))
    np.testing.assert_allclose(es.values, [2 / 3, -1 / 3, -1 / 3], atol=1e-14)
    np.testing.assert_allclose(es.vectors[:, 0], EZ, atol=1e-14)
    # tie broken lexicographically with positive leading component
    np.testing.assert_allclose(es.vectors[:, 1], EX, atol=1e-14)
    np.testing.assert_allclose(es.vectors[:, 2], EY, atol=1e-14)


@given(qvec)
def test_eigensystem_properties(q):
    Q = QTensor(*q)
    es = eigensystem(Q)
    lam, V = es.values, es.vectors
    assert abs(lam.sum()) <= 1e-12
    assert np.all(np.diff(lam) <= 1e-15)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)
    rec = (V * lam) @ V.T
    scale = max(1.0, np.linalg.norm(Q.matrix))
    assert np.linalg.norm(rec - Q.matrix) <= 1e-10 * scale
    # independent oracle for the spectrum
    np.testing.assert_allclose(lam, np.linalg.eigvalsh(Q.matrix)[::-1], atol=1e-12)


def test_eigensystem_reconstruction_bulk():
    rng = np.random.default_rng(7)
    worst = 0.0
    for q in rng.uniform(-1, 1, size=(10_000, 5)):
        Q = QTensor(*q)
        es = eigensystem(Q)
        rec = (es.vectors * es.values) @ es.vectors.T
        worst = max(worst, np.linalg.norm(rec - Q.matrix) / max(1.0, np.linalg.norm(Q.matrix)))
    assert worst <= 1e-10


def test_trace_is_exact():
    Q = QTensor(0.1, 0.2, 0.3, 0.7, -0.4)
    assert np.trace(Q.matrix) == 0.0
    assert Q.q33 == -(0.1 + 0.7)


@given(qvec)
def test_pack_full_roundtrip(q):
    q = np.array(q)
    assert np.array_equal(pack(full(q)), q)
    m = full(q)
    assert np.array_equal(m, m.T)


def test_eigenvalue_bounds():
    assert check_eigenvalue_bounds(QTensor()).ok
    assert check_eigenvalue_bounds(make_uniaxial(1.0, EZ)).ok
    chk = check_eigenvalue_bounds(make_uniaxial(1.5, EZ))
    assert not chk.ok
    assert chk.worst == pytest.approx(1.0, abs=1e-14)


def test_traces():
    Q = make_uniaxial(1.0, EZ)
    assert frobenius(QTensor(), Q) == 0.0
    assert tr_q2(Q) == pytest.approx(2 / 3, abs=1e-15)
    assert tr_q3(Q) == pytest.approx(2 / 9, abs=1e-15)


def test_biaxiality_examples():
    assert biaxiality(make_uniaxial(0.4, EZ)) == pytest.approx(0.0, abs=1e-7)
    assert biaxiality(q_from_p((0.06, 0.08, 0.2))) == pytest.approx(1.0, abs=1e-12)
    assert biaxiality(q_from_p((0.0, 0.0, 1.0))) == pytest.approx(0.0, abs=1e-7)
    assert biaxiality(QTensor()) == 0.0
    assert biaxiality_p(0.0, 0.2) == 0.0
    assert biaxiality_p(0.1, 0.2) == 1.0
    assert biaxiality_p(0.0, 0.0) == 0.0
    # cross-oracle: trace formula on the tensor vs closed form in (p, β)
    assert biaxiality_p(0.755, 0.2) == pytest.approx(biaxiality(q_from_p((0.755, 0.0, 0.2))), abs=1e-10)


@given(st.floats(-0.33, 0.66), unit)
def test_uniaxial_has_zero_biaxiality(S, n):
    Q = make_uniaxial(S, n)
    if tr_q2(Q) > 1e-10:
        # ξ² is exactly zero up to roundoff, so ξ is at most ~sqrt(eps)
        assert biaxiality(Q) <= 1e-6
        t2, t3 = tr_q2(Q), tr_q3(Q)
        assert abs(1 - 6 * t3**2 / t2**3) <= 1e-12


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_biaxiality_p_matches_trace_formula(p1, p2, beta):
    Q = q_from_p((p1, p2, beta))
    if tr_q2(Q) < 1e-6:
        return
    t2, t3 = tr_q2(Q), tr_q3(Q)
    xi2 = 1 - 6 * t3**2 / t2**3
    assert float(biaxiality_p_squared(math.hypot(p1, p2), beta)) == pytest.approx(xi2, abs=1e-10)
    assert biaxiality_p(math.hypot(p1, p2), beta) == pytest.approx(biaxiality(Q), abs=1e-6)


@given(qvec)
def test_biaxiality_in_range(q):
    xi = biaxiality(QTensor(*q))
    assert 0.0 <= xi <= 1.0
    t2 = tr_q2(QTensor(*q))
    if t2 > 1e-6:
        raw = 1 - 6 * tr_q3(QTensor(*q)) ** 2 / t2**3
        assert raw >= -1e-12 and raw <= 1 + 1e-12


def test_biaxiality_array_matches_scalar(rng):
    q = rng.uniform(-1, 1, (50, 5))
    np.testing.assert_allclose(biaxiality_array(q), [biaxiality(QTensor(*r)) for r in q], atol=1e-12)


def test_q_from_p_examples():
    beta = 0.3
    np.testing.assert_allclose(q_from_p((0, 0, beta)).matrix, np.diag([-beta / 2, -beta / 2, beta]))
    Q = q_from_p((0.4, -0.2, 0.0))
    assert np.trace(Q.matrix) == 0.0
    assert Q.q13 == Q.q23 == 0.0 and Q.q33 == 0.0
    Q = q_from_p((0.4, -0.2, beta))
    np.testing.assert_allclose(Q.matrix @ EZ, beta * EZ)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_p_roundtrip(p1, p2, beta):
    out = p_from_q(q_from_p((p1, p2, beta)))
    assert out == pytest.approx(PVector(p1, p2, beta), abs=1e-14)


@given(qvec)
def test_q_roundtrip_on_film_tensors(q):
    q = np.array(q)
    q[2] = q[4] = 0.0
    Q = QTensor(*q)
    assert np.allclose(q_from_p(p_from_q(Q)).array, q, atol=1e-14)


def test_p_from_q_rejects_tilted():
    with pytest.raises(ValueError, match="off-axis"):
        p_from_q(QTensor(0.1, 0.0, 0.2, 0.0, 0.0))


def test_q_from_p_array_matches_scalar(rng):
    p = rng.normal(size=(10, 2))
    b = rng.normal(size=10)
    qa = q_from_p_array(p, b)
    for k in range(10):
        np.testing.assert_array_equal(qa[k], q_from_p((p[k, 0], p[k, 1], b[k])).array)


def test_order_parameters():
    op = order_parameters(make_uniaxial(0.6, EZ))
    assert op.S == pytest.approx(0.6, abs=1e-12)
    Q = make_biaxial(0.5, 0.2, EX, EZ)
    lam = np.linalg.eigvalsh(Q.matrix)[::-1]
    op = order_parameters(Q)
    assert op.S is None
    assert op.S1 == pytest.approx(2 * lam[0] + lam[2], abs=1e-12)
