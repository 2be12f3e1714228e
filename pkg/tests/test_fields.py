import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab.fields import (
    DivergenceClass,
    drift_from_dict,
    make_drift,
    make_tensor,
    tensor_from_dict,
    validate_divergence,
    validate_ellipticity,
)
from harnack_lab.fields import radial_divergence
from harnack_lab.geometry import Ball, build_grid


def _sin_diag(nu):
    return make_tensor("diagonal", nu, 2, base=[1.0, 1.0], amp=[0.5, 0.0], wavevector=[1.0, 0.0])


def test_identity_tensor():
    a = make_tensor("identity", 1.0, 3)
    X = np.random.default_rng(0).normal(size=(10, 3))
    assert np.array_equal(a(X), np.broadcast_to(np.eye(3), (10, 3, 3)))
    rep = validate_ellipticity(a)
    assert rep.min_quotient == rep.max_quotient == 1.0 and rep.passed


def test_diagonal_tensor_ellipticity_gate():
    with pytest.raises(ValueError, match="ellipticity violated"):
        _sin_diag(2 / 3)
    a = _sin_diag(0.5)
    # independent sample-grid oracle of the eigenvalue range [1/2, 3/2]
    x1 = np.linspace(0, 1, 4001)
    d = 1 + 0.5 * np.sin(2 * np.pi * x1)
    assert d.min() == pytest.approx(0.5) and d.max() == pytest.approx(1.5)
    rep = validate_ellipticity(a, samples=4096)
    assert rep.passed
    assert rep.min_quotient >= 0.5 - 1e-12 and rep.max_quotient <= 1.5 + 1e-12


def test_constant_diagonal_extremes():
    a = make_tensor("diagonal", 0.5, 2, base=[0.5, 2.0])
    rep = validate_ellipticity(a)
    assert rep.passed
    assert rep.min_quotient == pytest.approx(0.5) and rep.max_quotient == pytest.approx(2.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(-3, 3))
def test_rotation_mixed_extremes_independent_of_angle(angle, grad):
    a = make_tensor("rotation-mixed", 0.5, 2, eigenvalues=[0.5, 2.0], angle=angle, angle_gradient=[grad, 0.0])
    rep = validate_ellipticity(a, samples=256)
    assert rep.min_quotient == pytest.approx(0.5) and rep.max_quotient == pytest.approx(2.0)
    A = a(np.random.default_rng(1).normal(size=(50, 2)))
    assert np.allclose(np.linalg.eigvalsh(A), [0.5, 2.0])
    assert rep.sampled_min >= 0.5 - 1e-12 and rep.sampled_max <= 2.0 + 1e-12


def test_rotation_mixed_3d_symmetric():
    a = make_tensor("rotation-mixed", 0.25, 3, eigenvalues=[0.5, 1.0, 2.0], angle=0.3, angle_gradient=[1, 0, 0], axis=[1, 1, 0])
    A = a(np.random.default_rng(2).normal(size=(20, 3)))
    assert np.allclose(A, np.swapaxes(A, 1, 2))
    assert np.allclose(np.linalg.eigvalsh(A), [0.5, 1.0, 2.0])


def test_tensor_errors_and_roundtrip():
    with pytest.raises(ValueError):
        make_tensor("identity", 0.0, 2)
    with pytest.raises(ValueError):
        make_tensor("spiral", 0.5, 2)
    a = _sin_diag(0.5)
    b = tensor_from_dict(a.to_dict())
    X = np.random.default_rng(3).normal(size=(5, 2))
    assert np.array_equal(a(X), b(X))


def test_tensor_scaling():
    a = _sin_diag(0.5)
    X = np.random.default_rng(4).normal(size=(5, 2))
    assert np.allclose(a.scaled(2.0)(X), a(2 * X))


def test_constant_drift_divergence_zero():
    b = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0, 0.0]}})
    assert b.n == 3 and b.divergence_class == DivergenceClass.ZERO
    rep = validate_divergence(b, build_grid(Ball((0, 0, 0), 1.0), 1 / 8))
    assert rep.class_certified and abs(rep.max_pairing) < 1e-12


def _fd_divergence(b, x, step=1e-5):
    n = x.shape[-1]
    div = np.zeros(x.shape[:-1])
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        div += (b(x + e)[..., k] - b(x - e)[..., k]) / (2 * step)
    return div


def test_radial_divergence_formula():
    b = make_drift({"kind": "radial", "params": {"kappa": -1.0}}, n=3)
    X = np.random.default_rng(5).uniform(-1, 1, size=(50, 3))
    r = np.linalg.norm(X, axis=1)
    assert np.allclose(_fd_divergence(b, X), -1 / r**2, rtol=1e-5)
    assert np.allclose(radial_divergence(-1.0, 3, r), -1 / r**2)
    assert b.divergence_class == DivergenceClass.NONPOSITIVE


def test_stream_drift_divergence_free():
    b = make_drift({"kind": "stream2d", "params": {"amp": 1.0, "k": [1.0, 1.0], "phase": [0.0, 0.0]}})
    X = np.random.default_rng(6).uniform(-2, 2, size=(50, 2))
    assert np.allclose(_fd_divergence(b, X), 0, atol=1e-8)
    rep = validate_divergence(b, build_grid(Ball((0, 0), 1.0), 1 / 16))
    assert rep.class_certified
    assert max(abs(rep.max_pairing), abs(rep.min_pairing)) <= rep.tol


def test_radial_pairings_sign():
    grid = build_grid(Ball((0, 0, 0), 1.0), 1 / 16)
    inward = validate_divergence(make_drift({"kind": "radial", "params": {"kappa": -1.0}}, n=3), grid, avoid_singular=True)
    assert inward.structure_condition and inward.max_pairing <= 0
    # independent oracle: the normalized pairing is the hat-weighted mean of -1/|x|^2
    c = inward.centers[np.argmax(np.linalg.norm(inward.centers, axis=1))]
    w = 2 * grid.h
    g, wg = np.polynomial.legendre.leggauss(12)
    P = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", wg, wg, wg).reshape(-1) * np.prod(1 - np.abs(P), axis=1)
    mean = np.sum(W * -1 / np.sum((c + w * P) ** 2, axis=1)) / np.sum(W)
    i = np.argmax(np.linalg.norm(inward.centers, axis=1))
    assert inward.pairings[i] == pytest.approx(mean, rel=0.02)
    outward = validate_divergence(make_drift({"kind": "radial", "params": {"kappa": 2.0}}, n=3), grid, avoid_singular=True)
    assert outward.declared == DivergenceClass.UNCONSTRAINED
    assert not outward.structure_condition and outward.max_pairing > 0


def test_singular_test_family_rejected():
    b = make_drift({"kind": "radial", "params": {"kappa": -1.0}}, n=3)
    with pytest.raises(ValueError, match="intersects singular set"):
        validate_divergence(b, build_grid(Ball((0, 0, 0), 1.0), 1 / 16))


def test_drift_cap_near_singularity():
    b = make_drift({"kind": "radial", "params": {"kappa": -2.0}}, n=3)
    x = np.array([[1e-3, 0, 0], [0.5, 0, 0], [0.0, 0.0, 0.0]])
    v = b(x, cap_h=0.1)
    assert np.linalg.norm(v[0]) == pytest.approx(10.0)
    assert np.allclose(v[1], [-4.0, 0, 0])
    assert np.all(np.isfinite(v))


def test_moving_frame_and_scaling():
    base = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0]}})
    mf = make_drift({"kind": "moving_frame", "params": {"base": base.to_dict(), "offset": [0.0, 0.0], "velocity": [0.5, 0.0]}})
    assert mf.time_dependent
    assert np.allclose(mf(np.zeros((1, 2)), 1.0), [[1.5, 0.0]])
    r = make_drift({"kind": "radial", "params": {"kappa": -1.0}}, n=2)
    X = np.array([[0.3, 0.4]])
    assert np.allclose(r.scaled(3.0)(X), 3 * r(3 * X))
    # the radial field is scale invariant
    assert np.allclose(r.scaled(3.0)(X), r(X))


def test_drift_roundtrip_and_errors():
    b = make_drift({"kind": "axisymmetric", "params": {"eps": -1}})
    c = drift_from_dict(b.to_dict())
    X = np.array([[0.3, 0.4, 0.1]])
    assert np.array_equal(b(X), c(X))
    with pytest.raises(ValueError):
        make_drift({"kind": "axisymmetric", "params": {"eps": 0.5}})
    with pytest.raises(ValueError):
        make_drift({"kind": "vortex", "params": {}})
    with pytest.raises(ValueError):
        make_drift({"kind": "stream2d", "params": {"sink": -1.0}})


def test_planar_slice_matches_base():
    b = make_drift({"kind": "axisymmetric", "params": {"eps": -1}})
    p = make_drift({"kind": "planar_slice", "params": {"base": b.to_dict()}})
    X2 = np.array([[0.3, -0.2], [1.0, 0.5]])
    X3 = np.concatenate([X2, np.full((2, 1), 0.7)], axis=1)
    assert p.n == 2 and p.divergence_class == b.divergence_class
    assert np.allclose(p(X2), b(X3)[:, :2])
    assert np.allclose(p(X2), -2 * X2 / np.sum(X2**2, axis=1, keepdims=True))
