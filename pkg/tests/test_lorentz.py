import numpy as np
import pytest
from hypothesis import given, strategies as st

from willmore.lorentz import (
    InvalidFrame,
    LorentzFrame,
    NotForwardLightlike,
    PointAtInfinity,
    Signature,
    inner,
    metric_diagonal,
    project_model,
    project_sphere,
    stereographic,
    stereographic_inverse,
)


def _random_lightlike(rng, dim=5):
    y = rng.standard_normal(dim - 1)
    y /= np.linalg.norm(y)
    r = rng.uniform(0.2, 3.0)
    return r * np.concatenate([[1.0], y])


def test_signature_basics():
    sig = Signature(5)
    assert sig.dim == 5
    assert list(sig.metric) == [-1.0, 1.0, 1.0, 1.0, 1.0]
    assert np.allclose(sig.eta, np.diag([-1, 1, 1, 1, 1]))
    with pytest.raises(ValueError):
        Signature(4)


def test_inner_timelike_basis_vector():
    e0 = np.array([1.0, 0, 0, 0, 0])
    assert inner(e0, e0) == -1.0


def test_inner_lightlike_lift():
    rng = np.random.default_rng(7)
    for _ in range(20):
        y = rng.standard_normal(4)
        y /= np.linalg.norm(y)
        Y = np.concatenate([[1.0], y])
        assert abs(inner(Y, Y)) < 1e-14


def test_inner_circle_lift_against_dual():
    # dual pairing of the unit-circle lift with its companion is -1 for all u
    for u in np.linspace(0.0, 6.0, 13):
        Y = np.array([1.0, np.cos(u), np.sin(u), 0.0, 0.0])
        Yhat = 0.5 * np.array([1.0, -np.cos(u), -np.sin(u), 0.0, 0.0])
        assert abs(inner(Y, Yhat) - (-1.0)) < 1e-15


def test_inner_dimension_mismatch():
    with pytest.raises(ValueError):
        inner(np.ones(5), np.ones(6))


@given(
    st.integers(0, 2**32 - 1),
    st.floats(-10, 10, allow_nan=False),
    st.floats(-10, 10, allow_nan=False),
)
def test_inner_symmetric_bilinear(seed, s, t):
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_normal((3, 5))
    assert inner(a, b) == pytest.approx(inner(b, a), abs=1e-12)
    lhs = inner(s * a + t * b, c)
    rhs = s * inner(a, c) + t * inner(b, c)
    assert lhs == pytest.approx(rhs, abs=1e-9, rel=1e-9)


def test_inner_broadcasts_over_grids():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 6, 5))
    B = rng.standard_normal((4, 6, 5))
    out = inner(A, B)
    assert out.shape == (4, 6)
    assert out[2, 3] == pytest.approx(inner(A[2, 3], B[2, 3]))


def test_project_sphere_scaling():
    assert np.allclose(project_sphere([2, 2, 0, 0, 0]), [1, 0, 0, 0])
    rng = np.random.default_rng(11)
    for _ in range(50):
        Y = _random_lightlike(rng)
        c = rng.uniform(0.1, 10.0)
        assert np.allclose(project_sphere(c * Y), project_sphere(Y), atol=1e-14)


def test_project_sphere_lawson_lift():
    # canonical lift (1, y) of a Lawson-type immersion returns y itself
    r = 2.0
    for u, v in [(0.3, 0.1), (-1.2, 0.4), (2.0, -0.5)]:
        y = np.array(
            [
                np.cos(u) * np.cos(v),
                np.sin(u) * np.cos(v),
                np.cos(r * u) * np.sin(v),
                np.sin(r * u) * np.sin(v),
            ]
        )
        Y = np.concatenate([[1.0], y])
        assert np.allclose(project_sphere(Y), y, atol=1e-15)


def test_project_sphere_unit_norm():
    rng = np.random.default_rng(23)
    for _ in range(100):
        y = project_sphere(_random_lightlike(rng))
        assert abs(np.linalg.norm(y) - 1.0) < 1e-12


def test_project_sphere_rejects_backward():
    with pytest.raises(NotForwardLightlike):
        project_sphere([-1.0, 1, 0, 0, 0])
    with pytest.raises(NotForwardLightlike):
        project_sphere([0.0, 0, 0, 0, 0])


def test_stereographic_axis_points():
    out = stereographic([1.0, 0, 0, 0])
    assert np.allclose(out, [1, 0, 0])
    assert np.allclose(stereographic([0.0, 0, 0, -1.0]), [0, 0, 0])


def test_stereographic_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(100):
        y = rng.standard_normal(4)
        y /= np.linalg.norm(y)
        pole = rng.standard_normal(4)
        pole /= np.linalg.norm(pole)
        if abs(y @ pole - 1.0) < 1e-3:
            continue
        x = stereographic(y, pole)
        back = stereographic_inverse(x, pole)
        assert np.max(np.abs(back - y)) < 1e-12


def test_stereographic_pole_blows_up():
    with pytest.raises(PointAtInfinity):
        stereographic([0.0, 0, 0, 1.0])


def _hyperbolic_lawson_lift(u, vt, r=2.0):
    f = np.array(
        [
            np.cosh(vt) * np.cosh(u),
            np.cosh(vt) * np.sinh(u),
            np.sinh(vt) * np.cos(r * u),
            np.sinh(vt) * np.sin(r * u),
        ]
    )
    return np.concatenate([f, [1.0]])


def test_project_model_h3_slot():
    out = project_model([1.0, 0, 0, 0, 1.0], model="h3", slot=4)
    assert np.allclose(out, [1, 0, 0, 0])


def test_project_model_poincare_at_origin():
    Y = _hyperbolic_lawson_lift(0.0, 0.0)
    out = project_model(Y, model="poincare", slots=((1, 2, 4), (0, 3)))
    # numerators (cosh0*sinh0, sinh0*cos0, 1), divisor cosh0 - 0
    assert np.allclose(out, [0.0, 0.0, 1.0], atol=1e-15)


def test_project_model_ideal_boundary():
    with pytest.raises(PointAtInfinity):
        project_model([1.0, 0.3, 0.2, 1.0, 0.1], model="poincare", slots=((1, 2, 4), (0, 3)))
    with pytest.raises(PointAtInfinity):
        project_model([1.0, 0.3, 0.2, 0.5, 0.0], model="h3", slot=4)


def _random_so14(rng, scale=0.6):
    S = rng.standard_normal((5, 5)) * scale
    S = S - S.T
    return np.diag(metric_diagonal(5)) @ S


def test_frame_accepts_identity_and_exponentials():
    from scipy.linalg import expm

    LorentzFrame(np.eye(5))
    rng = np.random.default_rng(17)
    for _ in range(25):
        F = LorentzFrame(expm(_random_so14(rng)))
        eta = np.diag([-1.0, 1, 1, 1, 1])
        res = np.max(np.abs(F.matrix.T @ eta @ F.matrix - eta))
        assert res < 1e-10
        assert F[0].shape == (5,)


def test_frame_rejects_bad_matrices():
    with pytest.raises(InvalidFrame):
        LorentzFrame(np.eye(5) * 1.01)
    swapped = np.eye(5)[:, [1, 0, 2, 3, 4]]
    with pytest.raises(InvalidFrame):
        LorentzFrame(swapped)  # det -1
    with pytest.raises(InvalidFrame):
        LorentzFrame(np.diag([-1.0, -1.0, 1.0, 1.0, 1.0]))  # time reversal
