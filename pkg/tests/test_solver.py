import math

import numpy as np
import pytest
import scipy.sparse as sp

from harnack_lab.fields import make_drift, make_tensor
from harnack_lab.geometry import Ball, Cylinder, DiscreteField, build_grid
from harnack_lab.solver import (
    SolverError,
    assemble_elliptic,
    assemble_parabolic,
    export_binary,
    export_csv,
    read_binary,
    residual_check,
    solve_elliptic,
    solve_many,
    solve_parabolic,
)
from harnack_lab.solver import _Linear, solve_parabolic_many

I2 = make_tensor("identity", 1.0, 2)
I3 = make_tensor("identity", 1.0, 3)


def _row(op, grid, node):
    """Stencil of the unknown at lattice index ``node`` as {offset: coefficient}."""
    flat = np.ravel_multi_index(node, grid.shape)
    i = int(np.flatnonzero(op.inside_index == flat)[0])
    out = {}
    for mat, idx in ((op.A, op.inside_index), (op.B, op.boundary_index)):
        r = mat.getrow(i)
        for j, v in zip(r.indices, r.data):
            off = tuple(np.array(np.unravel_index(idx[j], grid.shape)) - np.array(node))
            out[off] = out.get(off, 0.0) + v
    return out


def test_five_point_laplacian():
    g = build_grid(Ball((0, 0), 1.0), 1 / 8)
    op = assemble_elliptic(I2, None, g)
    c = tuple(s // 2 for s in g.shape)
    row = _row(op, g, c)
    h2 = g.h**2
    assert row[(0, 0)] == pytest.approx(4 / h2)
    for off in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        assert row[off] == pytest.approx(-1 / h2)
    assert sum(abs(v) > 1e-12 for v in row.values()) == 5
    assert op.symmetric and op.monotone


def test_central_drift_stencil():
    g = build_grid(Ball((0, 0), 1.0), 1 / 16)
    b = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0]}})
    op = assemble_elliptic(I2, b, g)
    c = tuple(s // 2 for s in g.shape)
    row = _row(op, g, c)
    h = g.h
    assert row[(1, 0)] == pytest.approx(-1 / h**2 + 1 / (2 * h))
    assert row[(-1, 0)] == pytest.approx(-1 / h**2 - 1 / (2 * h))
    assert row[(0, 1)] == pytest.approx(-1 / h**2)
    assert op.upwind_count == 0 and not op.symmetric


def test_upwind_switch_near_singularity():
    # |b| = 2/r exceeds 2 nu/h for r < h/nu; nodes within h are capped at 1/h
    b = make_drift({"kind": "radial", "params": {"kappa": 2.0}}, n=3)
    weak = make_tensor("diagonal", 0.25, 3, base=0.25)
    g = build_grid(Ball((0, 0, 0), 1.0), 1 / 8)
    op = assemble_elliptic(weak, b, g)
    assert op.upwind and op.max_peclet > 1
    assert assemble_elliptic(I3, b, g).max_peclet <= 0.5 + 1e-12
    # away from the origin |b| h / 2 stays below one and the scheme is central
    far = make_drift({"kind": "radial", "params": {"kappa": 2.0, "center": [3.0, 0.0, 0.0]}}, n=3)
    assert assemble_elliptic(I3, far, build_grid(Ball((0, 0, 0), 1.0), 1 / 8)).upwind_count == 0
    assert op.scheme()["upwind_faces"] == op.upwind_count


def test_nan_coefficient_names_node():
    g = build_grid(Ball((0, 0), 1.0), 1 / 4)

    class Bad:
        n = 2

        def __call__(self, X, t=None):
            A = np.broadcast_to(np.eye(2), X.shape[:-1] + (2, 2)).copy()
            A[0] = np.nan
            return A

    with pytest.raises(ValueError, match="NaN"):
        assemble_elliptic(Bad(), None, g)


def test_linear_data_reproduced():
    g = build_grid(Ball((0, 0), 1.0), 1 / 16)
    res = solve_elliptic(I2, None, g, lambda X: X[..., 0])
    u = res.solution.values
    X = g.mesh()
    assert np.max(np.abs(u[g.inside] - X[g.inside][:, 0])) < 1e-9


def _exp_error(h):
    g = build_grid(Ball((0, 0, 0), 1.0), h)
    b = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0, 0.0]}})
    u = solve_elliptic(I3, b, g, lambda X: np.exp(X[..., 0])).solution.values
    X = g.mesh()
    return float(np.max(np.abs(u[g.inside] - np.exp(X[g.inside][:, 0]))))


def test_exponential_solution_second_order():
    ratio = _exp_error(1 / 8) / _exp_error(1 / 16)
    assert 3.0 <= ratio <= 5.0


def test_outward_radial_drift_abs_x_is_discrete_solution_off_origin():
    # Laplace(|x|) = 2/r = b . D|x| for b = 2x/|x|^2 in 3D
    b = make_drift({"kind": "radial", "params": {"kappa": 2.0}}, n=3)
    res = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        g = build_grid(Ball((0, 0, 0), 1.0), h, shift=0.5)
        op = assemble_elliptic(I3, b, g)
        far = np.linalg.norm(g.mesh(), axis=-1) >= 0.25
        res.append(residual_check(op, lambda X: np.linalg.norm(X, axis=-1), mask=far))
    assert res[2] < res[1] < res[0]
    # |x| and the constant 1 share the boundary data; the monotone scheme selects the constant
    g = build_grid(Ball((0, 0, 0), 1.0), 1 / 8, shift=0.5)
    u = solve_elliptic(I3, b, g, lambda X: np.linalg.norm(X, axis=-1)).solution.values
    assert np.all(u[g.inside] <= np.max(np.linalg.norm(g.coords(g.boundary), axis=1)) + 1e-9)


def test_residual_check_and_forcing():
    g = build_grid(Ball((0, 0), 1.0), 1 / 16)
    op = assemble_elliptic(I2, None, g, forcing=lambda X: np.full(X.shape[:-1], 4.0))
    # -Laplace(-(x1^2 + x2^2)) = 4, exact for the 5-point stencil
    assert residual_check(op, lambda X: -np.sum(X**2, axis=-1)) < 1e-9
    assert residual_check(op, lambda X: np.zeros(X.shape[:-1])) == pytest.approx(4.0)


def test_solve_many_matches_single():
    g = build_grid(Ball((0, 0), 1.0), 1 / 16)
    b = make_drift({"kind": "stream2d", "params": {"amp": 3.0}})
    op = assemble_elliptic(I2, b, g)
    Xb = g.coords(g.boundary)
    G = np.stack([Xb[:, 0], np.cos(Xb[:, 1]), np.ones(len(Xb))], axis=1)
    U = solve_many(op, G)
    for j in range(3):
        single = solve_elliptic(I2, b, g, G[:, j], op=op).solution.values[g.inside]
        assert np.allclose(U[:, j], single, atol=1e-9)
    assert np.allclose(U[:, 2], 1.0, atol=1e-9)


@pytest.mark.parametrize("pc", ["lu", "amg", "ilu", "jacobi", "none"])
def test_preconditioners_agree(pc):
    g = build_grid(Ball((0, 0), 1.0), 1 / 16)
    ref = solve_elliptic(I2, None, g, lambda X: X[..., 0] * X[..., 1], preconditioner="lu").solution.values
    u = solve_elliptic(I2, None, g, lambda X: X[..., 0] * X[..., 1], preconditioner=pc).solution.values
    assert np.nanmax(np.abs(u - ref)) < 1e-8


def test_nonconvergence_reports_history():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, -3.0]]) * 1e-3)
    lin = _Linear(A, symmetric=True, preconditioner="none", maxiter=1)
    with pytest.raises(SolverError) as e:
        lin.solve(np.array([1.0, 1.0]))
    assert "did not converge" in str(e.value)
    assert len(e.value.history) >= 1
    with pytest.raises(ValueError):
        _Linear(A, True, preconditioner="magic")


def test_parabolic_exact_space_time_linear():
    grid = build_grid(Cylinder((0, 0), 0.0, 1.0), 1 / 16, 1 / 16)
    b = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0]}})
    exact = lambda X, t: X[..., 0] - t  # noqa: E731
    u = solve_parabolic(I2, b, grid, exact).solution.values
    X = grid.mesh()
    for k, t in enumerate(grid.times):
        assert np.max(np.abs(u[k][grid.inside] - exact(X[grid.inside], t))) <= 1e-9


def test_parabolic_constant_preserved():
    grid = build_grid(Cylinder((0, 0, 0), 0.0, 1.0), 1 / 8, 1 / 8)
    b = make_drift({"kind": "radial", "params": {"kappa": -1.0}}, n=3)
    u = solve_parabolic(I3, b, grid, lambda X, t: np.full(X.shape[:-1], 2.5)).solution.values
    assert np.allclose(u[:, grid.inside], 2.5, atol=1e-9)


def _heat_kernel(X, t, pole=(2.0, 0.0), t0=-2.0):
    s = t - t0
    d2 = np.sum((X - np.asarray(pole)) ** 2, axis=-1)
    return np.exp(-d2 / (4 * s)) / (4 * math.pi * s)


def test_heat_kernel_convergence():
    errs = []
    for h in (1 / 8, 1 / 16):
        grid = build_grid(Cylinder((0, 0), 0.0, 1.0), h, h * h * 4)
        u = solve_parabolic(I2, None, grid, _heat_kernel).solution.values
        X = grid.mesh()
        e = max(np.max(np.abs(u[k][grid.inside] - _heat_kernel(X[grid.inside], t))) for k, t in enumerate(grid.times))
        errs.append(e)
    # h^2 + tau with tau = 4 h^2: second order in h
    assert errs[0] / errs[1] > 3.0


def test_parabolic_many_matches_single_and_streams():
    grid = build_grid(Cylinder((0, 0), 0.0, 1.0), 1 / 8, 1 / 8)
    b = make_drift({"kind": "stream2d", "params": {"amp": 2.0}})
    pop = assemble_parabolic(I2, b, grid)
    op1 = pop.op(1)
    Xi = grid.origin + grid.h * np.stack(np.unravel_index(op1.inside_index, grid.shape), 1)
    Xb = grid.origin + grid.h * np.stack(np.unravel_index(op1.boundary_index, grid.shape), 1)
    rule = lambda X, t: np.cos(X[..., 0]) + t * X[..., 1]  # noqa: E731
    K = len(grid.times) - 1
    lat = np.stack([np.stack([rule(Xb, grid.times[k]), 1 + 0 * Xb[:, 0]], 1) for k in range(1, K + 1)])
    U = solve_parabolic_many(pop, np.stack([rule(Xi, grid.times[0]), 1 + 0 * Xi[:, 0]], 1), lat)
    ref = solve_parabolic(I2, b, grid, rule, op=pop).solution.values
    for k in range(K + 1):
        assert np.allclose(U[k][:, 0], ref[k].reshape(-1)[op1.inside_index], atol=1e-9)
    assert np.allclose(U[:, :, 1], 1.0, atol=1e-9)
    seen = []
    assert solve_parabolic_many(pop, U[0], lat, callback=lambda k, u: seen.append((k, u.copy()))) is None
    assert [k for k, _ in seen] == list(range(K + 1))
    assert np.allclose(seen[-1][1], U[-1])


def test_exports_roundtrip(tmp_path):
    grid = build_grid(Cylinder((0, 0), 0.0, 1.0), 1 / 4, 1 / 4)
    fld = DiscreteField.from_rule(grid, lambda X, t: X[..., 0] + t)
    export_binary(fld, tmp_path / "f.bin")
    doc = read_binary(tmp_path / "f.bin")
    assert doc["levels"] == len(grid.times) and doc["h"] == 0.25
    assert np.array_equal(doc["values"], fld.values)
    export_csv(fld, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,t,value"
    assert len(lines) - 1 == len(grid.times) * int(grid.active.sum())
    x1, x2, t, v = map(float, lines[1].split(","))
    assert v == pytest.approx(x1 + t)
    (tmp_path / "junk.bin").write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(ValueError, match="not a field file"):
        read_binary(tmp_path / "junk.bin")
