import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab.fields import make_drift
from harnack_lab.geometry import (
    Ball,
    Cylinder,
    ball_chain,
    ball_measure,
    build_grid,
    d_par,
    grid_from_json,
    layer_split,
    parabolic_chain,
    region_from_json,
)
from harnack_lab.geometry import _shell_integrals, chain_overlaps


def test_coarse_disk_counts_lattice_points():
    g = build_grid(Ball((0, 0), 1.0), 0.5)
    # lattice points of (Z/2)^2 strictly inside the unit disk: |i|,|j| <= 1 plus (0, +-1), (+-1, 0) in units of 1/2
    pts = [(i, j) for i in range(-2, 3) for j in range(-2, 3) if (i * 0.5) ** 2 + (j * 0.5) ** 2 < 1]
    assert g.n_inside == len(pts) == 9
    assert abs(g.discrete_measure() - math.pi) <= 4 * g.h


def test_ball_measure_3d():
    g = build_grid(Ball((0, 0, 0), 1.0), 1 / 32)
    exact = 4 * math.pi / 3
    assert abs(g.discrete_measure() - exact) / exact <= 0.05
    assert ball_measure(1.0, 3) == pytest.approx(4.18879, abs=1e-5)


def test_cylinder_lateral_and_bottom():
    cyl = Cylinder((0, 0), 0.0, 1.0, lam=2.0, theta=1.0)
    g = build_grid(cyl, 1 / 16, 1 / 64)
    assert g.times[0] == pytest.approx(-1.0)
    assert g.times[-1] == 0.0
    r = np.linalg.norm(g.coords(g.boundary), axis=1)
    assert r.min() >= 2.0 - 1e-12
    assert r.max() <= 2.0 + 2 * g.h
    assert g.tau == pytest.approx(1 / 64)


def test_grid_errors():
    with pytest.raises(ValueError, match="grid too coarse"):
        build_grid(Ball((0, 0), 1.0), 0.6)
    with pytest.raises(ValueError, match="tau"):
        build_grid(Cylinder((0, 0), 0.0, 1.0), 1 / 8)
    with pytest.raises(ValueError, match="dimension"):
        Ball((0,), 1.0)


def test_shifted_lattice_avoids_centre():
    g = build_grid(Ball((0, 0, 0), 1.0), 1 / 8, shift=0.5)
    r = np.linalg.norm(g.coords(g.inside), axis=1)
    assert r.min() == pytest.approx(math.sqrt(3) * g.h / 2)


def test_region_and_grid_roundtrip():
    cyl = Cylinder((0.5, 0), -1.0, 1.0, 2.0, 0.5)
    assert region_from_json(cyl.to_dict()) == cyl
    g = build_grid(Ball((0, 0), 1.0), 1 / 8, shift=0.5)
    g2 = grid_from_json(g.to_json())
    assert g2.shape == g.shape and np.array_equal(g2.inside, g.inside)


def test_ball_chain_examples():
    p = ball_chain((1.5, 0.0, 0.0), 1.0)
    assert p.count == 3 and p.rho == 0.125
    assert p.radii[0] == 0.125 and np.linalg.norm(p.centers[0]) == 1.75
    assert p.certified
    p = ball_chain((0.0, 1.0), 1.0, rho=0.25)
    assert p.count == 2 and p.radii[0] == 0.25 and np.linalg.norm(p.centers[0]) == 1.5
    p = ball_chain((0.0, 0.0), 1.0)
    assert p.count == 0 and p.links == 0 and p.rho == 0.5
    with pytest.raises(ValueError, match="inconsistent chain input"):
        ball_chain((1.5, 0.0), 1.0, rho=0.2)


def _brute_ball_containment(plan, n, rng, samples=400):
    """Sample points of every link ball and test membership of B_{2R} for the doubled ball."""
    R = plan.R
    for m in range(1, plan.links):
        c, r = plan.centers[m], plan.radii[m]
        d = rng.normal(size=(samples, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pts = c + 2 * r * d * rng.uniform(0, 1, (samples, 1)) ** (1 / n)
        assert np.all(np.linalg.norm(pts, axis=1) <= 2 * R * (1 + 1e-12))


def test_parabolic_chain_example():
    y = np.array([0.5, 0.0])
    p = parabolic_chain(y, -2.5, 1.0, rho=2**-4)
    assert p.count == 3 and p.certified
    rng = np.random.default_rng(0)
    for m in range(p.links):
        c, r, t = p.centers[m], p.radii[m], p.times[m]
        d = rng.normal(size=(200, 2))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pts = c + 4 * r * d * rng.uniform(0, 1, (200, 1)) ** 0.5
        assert np.all(np.linalg.norm(pts, axis=1) <= 2.0 + 1e-12)
        assert t - r**2 >= -4.0 and t <= 0
    assert p.times[-1] <= -5 / 3


def test_parabolic_chain_centered_first_link():
    p = parabolic_chain((0.0, 0.0, 0.0), -2.0, 1.0, rho=0.5)
    assert p.count == 0 and p.links == 1
    assert p.times[0] == pytest.approx(-2.0 + 0.25)
    with pytest.raises(ValueError, match="chain start out of range"):
        parabolic_chain((0.0, 0.0), -1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.0, 1.95),
    st.floats(0, 2 * math.pi),
    st.sampled_from([0.5, 1.0, 2.0]),
    st.sampled_from([2, 3]),
)
def test_ball_chain_properties(r, phi, R, n):
    y = np.zeros(n)
    y[0], y[1] = r * R * math.cos(phi), r * R * math.sin(phi)
    p = ball_chain(y, R)
    assert p.certified
    assert all(v > 0 for v in chain_overlaps(p, n))
    if p.count:
        assert 2 ** -(p.count + 1) * R < p.rho <= 2**-p.count * R
        _brute_ball_containment(p, n, np.random.default_rng(1), samples=50)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 0.999), st.floats(-3.999, -2.0), st.sampled_from([0.5, 1.0]))
def test_parabolic_chain_properties(r, s_unit, R):
    y = np.array([r * 2 * R, 0.0])
    s = s_unit * R * R
    rho = d_par(y, s, 2 * R) / 4
    if not 0 < rho <= R / 2:
        return
    p = parabolic_chain(y, s, R)
    assert p.certified
    assert p.times[-1] <= -(5 / 3) * R * R + 1e-12
    assert 2 ** -(p.count + 1) * R <= p.rho < 2**-p.count * R


def test_layer_split_zero_drift():
    lay = layer_split(lambda x: np.zeros_like(x), 1.0, 0.5, n=3)
    assert lay.M == 1 and lay.norm == 0.0


def _layer_norm_oracle(b, lay, n):
    """Independent radial quadrature of ||b||_{n,K} over the returned layer (n = 3)."""
    r, w = np.polynomial.legendre.leggauss(40)
    rr = 0.5 * (lay.outer + lay.inner) + 0.5 * (lay.outer - lay.inner) * r
    ww = 0.5 * (lay.outer - lay.inner) * w
    rng = np.random.default_rng(5)
    d = rng.normal(size=(4000, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    area = 4 * math.pi
    total = 0.0
    for ri, wi in zip(rr, ww):
        mag = np.linalg.norm(b(ri * d), axis=-1)
        total += wi * ri ** (n - 1) * area * np.mean(mag**n)
    return total ** (1 / n)


def test_layer_split_constant_drift():
    b = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0, 0.0]}})
    lay = layer_split(b, 1.0, 0.5)
    assert lay.norm <= 0.5
    assert _layer_norm_oracle(b, lay, 3) <= 0.5


def test_layer_split_radial_drift():
    b = make_drift({"kind": "radial", "params": {"kappa": 1.0}}, n=3)
    lay = layer_split(b, 1.0, 0.3)
    assert 1.0 <= lay.inner < lay.outer <= 2.0
    assert _layer_norm_oracle(b, lay, 3) <= 0.3


def test_shell_integrals_sum_to_annulus_integral():
    # |x/|x|^2|^3 = r^-3 integrates over 1 < r < 2 to 4 pi ln 2
    b = make_drift({"kind": "radial", "params": {"kappa": 1.0}}, n=3)
    s = _shell_integrals(b, 1.0, 8, 3, (0, 0, 0), False)
    assert s.sum() == pytest.approx(4 * math.pi * math.log(2), rel=1e-6)
