"""Finite-volume solver for divergence-form equations with drift.

The diffusion part ``-D_i(a_ij D_j u)`` is discretized as a weighted graph Laplacian on
the node lattice: axis edges carry the face conductance
``harmonic_mean(a_kk) - mean(sum_{l != k} |a_kl|)`` and, for non-diagonal tensors, the
diagonal edges ``e_k +/- e_l`` carry the positive/negative part of ``a_kl`` at the edge
midpoint.  The drift term ``b . Du`` is a nodal difference per direction, central when
the cell Peclet number ``|b_k| h / (2 w)`` is at most one (``w`` the smaller adjacent
conductance) and first-order upwind otherwise.  When the tensor is diagonally dominant
the matrix is an M-matrix, so discrete maximum and comparison principles hold.

Dirichlet data live on the boundary nodes (outside nodes adjacent to the region) and
enter the right-hand side through a coupling matrix, which makes many solves with the
same operator cheap.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import DriftField, EllipticTensor
from .geometry import DiscreteField, Grid

__all__ = [
    "DiscreteOperator",
    "ParabolicOperator",
    "SolveResult",
    "SolverError",
    "assemble_elliptic",
    "solve_elliptic",
    "assemble_parabolic",
    "solve_parabolic",
    "residual_check",
    "boundary_values",
    "export_csv",
    "export_binary",
    "read_binary",
]

TOL = 1e-10


class SolverError(RuntimeError):
    """Linear solve failure; carries the residual history."""

    def __init__(self, msg: str, history=None):
        super().__init__(msg)
        self.history = list(history or [])


# --------------------------------------------------------------------------
# linear algebra


class _Linear:
    """Krylov solver for a fixed matrix with a cached preconditioner."""

    def __init__(
        self, A: sp.csr_matrix, symmetric: bool, preconditioner: str = "auto", tol: float = TOL, maxiter: int = 2000, lu_limit: int = 40_000
    ):
        self.A = A.tocsr()
        self.symmetric = symmetric
        self.tol = tol
        self.maxiter = maxiter
        if preconditioner == "auto":
            preconditioner = "lu" if A.shape[0] <= lu_limit else "amg"
        self.kind = preconditioner
        N = A.shape[0]
        self._lu = None
        if preconditioner == "lu":
            lu = spla.splu(self.A.tocsc())
            self._lu = lu
            self.M = spla.LinearOperator((N, N), lu.solve)
        elif preconditioner == "amg":
            import pyamg

            ml = pyamg.ruge_stuben_solver(self.A)
            self.M = ml.aspreconditioner(cycle="V")
        elif preconditioner == "ilu":
            ilu = spla.spilu(self.A.tocsc(), drop_tol=1e-5, fill_factor=10)
            self.M = spla.LinearOperator((N, N), ilu.solve)
        elif preconditioner == "jacobi":
            d = self.A.diagonal()
            self.M = spla.LinearOperator((N, N), lambda x: x / d)
        elif preconditioner == "none":
            self.M = None
        else:
            raise ValueError(f"unknown preconditioner {preconditioner!r}")

    def solve(self, rhs: np.ndarray, x0: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
        nrm = float(np.linalg.norm(rhs))
        if nrm == 0.0:
            return np.zeros_like(rhs), 0, 0.0
        history = []

        def cb(xk):
            history.append(float(np.linalg.norm(rhs - self.A @ xk)) / nrm)

        method = spla.cg if self.symmetric else spla.bicgstab
        x = x0
        iters = 0
        for _ in range(3):  # restarts, then iterative refinement on the true residual
            x, info = method(self.A, rhs, x0=x, rtol=self.tol * 0.1, atol=0.0, maxiter=self.maxiter, M=self.M, callback=cb)
            iters = max(len(history), 1)
            res = float(np.linalg.norm(rhs - self.A @ x)) / nrm
            if res <= self.tol:
                return x, iters, res
        raise SolverError(f"linear solve did not converge: relative residual {res:.3e} > {self.tol:.1e}", history)

    def solve_block(self, R: np.ndarray, X0: np.ndarray | None = None) -> np.ndarray:
        """Solve for every column of ``R``; columns failing the residual test after the
        direct (LU) pass are redone with the Krylov solver."""
        R = np.asarray(R, dtype=float)
        if self._lu is None:
            X = np.empty_like(R)
            for j in range(R.shape[1]):
                X[:, j] = self.solve(R[:, j], None if X0 is None else X0[:, j])[0]
            return X
        X = self._lu.solve(R)
        nrm = np.linalg.norm(R, axis=0)
        res = np.linalg.norm(R - self.A @ X, axis=0)
        for j in np.nonzero(res > self.tol * nrm)[0]:
            X[:, j] = self.solve(R[:, j], X[:, j])[0]
        return X


# --------------------------------------------------------------------------
# assembly


@dataclass(eq=False)
class DiscreteOperator:
    """Sparse operator over inside nodes with boundary coupling.

    ``(L u)_inside = A @ u_inside + B @ u_boundary``; the Dirichlet problem is
    ``A x = f - B g``.
    """

    grid: Grid
    A: sp.csr_matrix
    B: sp.csr_matrix
    inside_index: np.ndarray  # flat lattice indices of unknowns
    boundary_index: np.ndarray  # flat lattice indices of boundary nodes
    forcing: np.ndarray
    symmetric: bool
    monotone: bool
    upwind_count: int
    max_peclet: float
    time: float | None = None
    meta: dict = field(default_factory=dict)
    _linear: dict = field(default_factory=dict, repr=False)

    @property
    def upwind(self) -> bool:
        return self.upwind_count > 0

    def linear(self, preconditioner: str = "auto", tol: float = TOL, shift: float | None = None) -> _Linear:
        """Cached solver for ``A`` (or ``I + shift A``)."""
        key = (preconditioner, tol, shift)
        if key not in self._linear:
            M = self.A if shift is None else (sp.identity(self.A.shape[0], format="csr") + shift * self.A)
            # sparse LU fill stays modest on planar lattices
            limit = 400_000 if self.grid.n == 2 else 40_000
            self._linear[key] = _Linear(M.tocsr(), self.symmetric, preconditioner, tol, lu_limit=limit)
        return self._linear[key]

    def restrict(self, fixed: np.ndarray) -> "DiscreteOperator":
        """Operator with the inside nodes in the full-lattice mask ``fixed`` turned into
        Dirichlet nodes (their data are then read like boundary data)."""
        fx = fixed.reshape(-1)[self.inside_index]
        free = ~fx
        Af = self.A[free]
        return DiscreteOperator(
            self.grid,
            Af[:, free].tocsr(),
            sp.hstack([self.B[free], Af[:, fx]]).tocsr(),
            self.inside_index[free],
            np.concatenate([self.boundary_index, self.inside_index[fx]]),
            self.forcing[free],
            self.symmetric,
            self.monotone,
            self.upwind_count,
            self.max_peclet,
            self.time,
            dict(self.meta, fixed_nodes=int(fx.sum())),
        )

    def apply(self, values: np.ndarray) -> np.ndarray:
        """``L u`` at inside nodes for full-lattice values ``u``."""
        flat = values.reshape(-1)
        return self.A @ flat[self.inside_index] + self.B @ flat[self.boundary_index]

    def scheme(self) -> dict:
        return {
            "flux_averaging": "harmonic",
            "drift": "peclet-switched central/upwind",
            "upwind_faces": self.upwind_count,
            "max_peclet": self.max_peclet,
            "symmetric": self.symmetric,
            "monotone": self.monotone,
            **self.meta,
        }


def _strides(shape) -> np.ndarray:
    return np.array([int(np.prod(shape[k + 1 :])) for k in range(len(shape))], dtype=np.int64)


def _named_nan(vals: np.ndarray, coords: np.ndarray, what: str):
    bad = ~np.isfinite(vals)
    if bad.ndim > 1:
        bad = bad.reshape(bad.shape[0], -1).any(axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"NaN coefficient ({what}) at node {i} x={tuple(np.round(coords[i], 12))}")


def assemble_elliptic(
    a: EllipticTensor,
    b: DriftField | None,
    grid: Grid,
    t: float | None = None,
    forcing: Callable | np.ndarray | None = None,
) -> DiscreteOperator:
    """Assemble ``-D_i(a_ij D_j u) + b_i D_i u`` over the inside nodes of ``grid``.

    ``forcing`` (rule ``f(x)`` or values at inside nodes) gives ``L u = f``; a
    nonnegative ``f`` produces supersolutions.
    """
    n, h = grid.n, grid.h
    shape = grid.shape
    st = _strides(shape)
    inside_flat = np.flatnonzero(grid.inside.reshape(-1))
    bnd_flat = np.flatnonzero(grid.boundary.reshape(-1))
    N, Nb = len(inside_flat), len(bnd_flat)
    in_id = np.full(grid.inside.size, -1, dtype=np.int64)
    in_id[inside_flat] = np.arange(N)
    bd_id = np.full(grid.inside.size, -1, dtype=np.int64)
    bd_id[bnd_flat] = np.arange(Nb)
    idx = np.stack(np.unravel_index(inside_flat, shape), axis=1)
    X = grid.origin + h * idx

    # conductance of axis faces (from each inside node, both directions)
    def coeff(points):
        A_ = a(points, t)
        _named_nan(A_, points, "tensor")
        return A_

    A_i = coeff(X)
    diag_i = np.einsum("pkk->pk", A_i)
    off_i = np.abs(A_i).sum(axis=2) - np.abs(diag_i)
    rows, cols, vals = [], [], []  # edge terms c (u_i - u_j)
    w_face = np.empty((N, n, 2))
    for k in range(n):
        for sgn_i, sgn in enumerate((-1, 1)):
            Xj = X.copy()
            Xj[:, k] += sgn * h
            A_j = coeff(Xj)
            dj = A_j[:, k, k]
            oj = np.abs(A_j[:, k, :]).sum(axis=1) - np.abs(dj)
            di = diag_i[:, k]
            harm = 2 * di * dj / (di + dj)
            w = harm - 0.5 * (off_i[:, k] + oj)
            w_face[:, k, sgn_i] = w
            rows.append(np.arange(N))
            cols.append(inside_flat + sgn * st[k])
            vals.append(w / h**2)
    cross = not a.is_diagonal
    if cross:
        for k in range(n):
            for l in range(k + 1, n):
                for s in (1, -1):
                    for sgn in (1, -1):
                        d = np.zeros(n)
                        d[k], d[l] = sgn, sgn * s
                        Am = coeff(X + 0.5 * h * d)
                        c = np.maximum(s * Am[:, k, l], 0.0)
                        rows.append(np.arange(N))
                        cols.append(inside_flat + int(sgn * st[k] + sgn * s * st[l]))
                        vals.append(c / h**2)

    upwind_count = 0
    max_pe = 0.0
    has_drift = b is not None
    if has_drift:
        bv = b(X, t, cap_h=h)
        _named_nan(bv, X, "drift")
        has_drift = bool(np.any(bv != 0))
    if has_drift:
        for k in range(n):
            bk = bv[:, k]
            wmin = w_face[:, k, :].min(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                pe = np.where(wmin > 0, np.abs(bk) * h / (2 * np.where(wmin > 0, wmin, 1.0)), np.inf)
            pe = np.where(bk == 0, 0.0, pe)
            central = pe <= 1.0
            finite = pe[np.isfinite(pe)]
            if finite.size:
                max_pe = max(max_pe, float(finite.max()))
            if np.any(~np.isfinite(pe)):
                max_pe = math.inf
            upwind_count += int(np.sum(~central))
            lo, hi = inside_flat - st[k], inside_flat + st[k]
            # central: b/(2h) (u_i - u_lo) - b/(2h) (u_i - u_hi)
            cc = np.where(central, bk / (2 * h), 0.0)
            rows += [np.arange(N), np.arange(N)]
            cols += [lo, hi]
            vals += [cc, -cc]
            # upwind
            up = ~central
            rows += [np.arange(N), np.arange(N)]
            cols += [lo, hi]
            vals += [np.where(up & (bk > 0), bk / h, 0.0), np.where(up & (bk < 0), -bk / h, 0.0)]

    r = np.concatenate(rows)
    cflat = np.concatenate(cols)
    v = np.concatenate(vals)
    keep = v != 0
    r, cflat, v = r[keep], cflat[keep], v[keep]
    ci = in_id[cflat]
    cb = bd_id[cflat]
    if np.any((ci < 0) & (cb < 0)):
        raise ValueError("stencil reaches an unclassified node")
    diag = np.bincount(r, weights=v, minlength=N)
    m_in = ci >= 0
    A = sp.coo_matrix((np.concatenate([diag, -v[m_in]]), (np.concatenate([np.arange(N), r[m_in]]), np.concatenate([np.arange(N), ci[m_in]]))), shape=(N, N)).tocsr()
    A.sum_duplicates()
    m_b = ~m_in
    B = sp.coo_matrix((-v[m_b], (r[m_b], cb[m_b])), shape=(N, Nb)).tocsr()

    f = np.zeros(N)
    if forcing is not None:
        f = np.asarray(forcing(X) if callable(forcing) else forcing, dtype=float).reshape(N)
        _named_nan(f, X, "forcing")
    monotone = bool(np.all(w_face >= 0)) and bool(np.all(A.data[A.indices != np.repeat(np.arange(N), np.diff(A.indptr))] <= 0))
    return DiscreteOperator(
        grid, A, B, inside_flat, bnd_flat, f, symmetric=not has_drift, monotone=monotone,
        upwind_count=upwind_count, max_peclet=max_pe, time=t, meta={"cross_edges": cross},
    )


# --------------------------------------------------------------------------
# solves


@dataclass(eq=False)
class SolveResult:
    solution: DiscreteField
    iterations: int
    residual: float
    upwind: bool
    scheme: dict
    operator: object = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "upwind": self.upwind, "scheme": self.scheme}


def boundary_values(grid: Grid, g, t: float | None = None, index: np.ndarray | None = None) -> np.ndarray:
    """Data ``g`` at the boundary nodes (rule ``g(x)``/``g(x, t)``, full-lattice array or DiscreteField)."""
    if index is None:
        index = np.flatnonzero(grid.boundary.reshape(-1))
    if isinstance(g, DiscreteField):
        g = g.values
    if callable(g):
        pts = grid.origin + grid.h * np.stack(np.unravel_index(index, grid.shape), 1)
        v = g(pts) if t is None else g(pts, t)
        return np.broadcast_to(np.asarray(v, dtype=float), (len(index),)).copy()
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        return np.full(len(index), float(g))
    if g.shape == grid.shape:
        return g.reshape(-1)[index]
    if g.shape[0] == len(index):
        return g
    raise ValueError("boundary data shape does not match grid")


def _assemble_field(grid: Grid, op: DiscreteOperator, x_in: np.ndarray, g_b: np.ndarray) -> np.ndarray:
    u = np.full(grid.inside.size, np.nan)
    u[op.inside_index] = x_in
    u[op.boundary_index] = g_b
    return u.reshape(grid.shape)


def solve_elliptic(
    a: EllipticTensor,
    b: DriftField | None,
    grid: Grid,
    g,
    forcing=None,
    preconditioner: str = "auto",
    tol: float = TOL,
    op: DiscreteOperator | None = None,
) -> SolveResult:
    """Solve ``L u = f`` in the region with ``u = g`` on the boundary nodes."""
    if op is None:
        op = assemble_elliptic(a, b, grid, forcing=forcing)
    gb = boundary_values(grid, g, index=op.boundary_index)
    rhs = op.forcing - op.B @ gb
    x, its, res = op.linear(preconditioner, tol).solve(rhs)
    field_ = DiscreteField(grid, _assemble_field(grid, op, x, gb))
    return SolveResult(field_, its, res, op.upwind, op.scheme(), op)


def solve_many(op: DiscreteOperator, G: np.ndarray, preconditioner: str = "auto", tol: float = TOL) -> np.ndarray:
    """Inside values for each column of boundary data ``G`` (shape ``(n_boundary, m)``)."""
    lin = op.linear(preconditioner, tol)
    return lin.solve_block(op.forcing[:, None] - op.B @ G)


def residual_check(op: DiscreteOperator, u, mask: np.ndarray | None = None) -> float:
    """Max of ``|L u - f|`` over inside nodes (optionally only where ``mask``)."""
    if isinstance(u, DiscreteField):
        u = u.values
    elif callable(u):
        u = np.asarray(u(op.grid.mesh()), dtype=float)
    u = np.asarray(u, dtype=float)
    if op.grid.is_spacetime:
        raise ValueError("use a spatial operator")
    r = np.abs(op.apply(u) - op.forcing)
    if mask is not None:
        r = r[mask.reshape(-1)[op.inside_index]]
    if r.size == 0:
        return 0.0
    r = np.where(np.isfinite(r), r, np.inf)
    return float(r.max())


# --------------------------------------------------------------------------
# parabolic


@dataclass(eq=False)
class ParabolicOperator:
    """Implicit Euler stepping ``(I + tau L) u^{k+1} = u^k + tau (f - B g^{k+1})``."""

    grid: Grid
    levels: list  # DiscreteOperator per level k >= 1 (shared when time independent)
    time_dependent: bool

    def restrict(self, fixed: np.ndarray) -> "ParabolicOperator":
        return ParabolicOperator(self.grid, [o.restrict(fixed) for o in self.levels], self.time_dependent)

    def op(self, k: int) -> DiscreteOperator:
        return self.levels[k - 1] if self.time_dependent else self.levels[0]

    def scheme(self) -> dict:
        up = sum(o.upwind_count for o in (self.levels if self.time_dependent else self.levels[:1]))
        d = self.levels[0].scheme()
        d.update({"time_stepping": "implicit Euler", "upwind_faces": up, "tau": self.grid.tau})
        return d


def _spatial_view(grid: Grid) -> Grid:
    return Grid(grid.region, grid.h, grid.origin, grid.shape, grid.inside, grid.boundary, None, None, grid.shift)


def assemble_parabolic(a: EllipticTensor, b: DriftField | None, grid: Grid, forcing=None) -> ParabolicOperator:
    if not grid.is_spacetime:
        raise ValueError("parabolic assembly needs a space-time grid")
    sgrid = _spatial_view(grid)
    tdep = (b is not None and b.time_dependent) or bool(a.params.get("time_amp", 0.0))
    if tdep:
        levels = [assemble_elliptic(a, b, sgrid, t=float(t), forcing=forcing) for t in grid.times[1:]]
    else:
        levels = [assemble_elliptic(a, b, sgrid, forcing=forcing)]
    return ParabolicOperator(grid, levels, tdep)


def solve_parabolic(
    a: EllipticTensor,
    b: DriftField | None,
    grid: Grid,
    lateral,
    bottom=None,
    forcing=None,
    preconditioner: str = "auto",
    tol: float = TOL,
    op: ParabolicOperator | None = None,
) -> SolveResult:
    """Solve on all time levels; ``lateral(x, t)`` on boundary nodes, ``bottom(x)`` at ``t_bottom``.

    ``bottom`` defaults to ``lateral(x, t_bottom)``.  Array data are accepted as full
    space-time arrays of shape ``(K+1,) + grid.shape``.
    """
    if op is None:
        op = assemble_parabolic(a, b, grid, forcing=forcing)
    times, tau = grid.times, grid.tau
    K = len(times) - 1
    op1 = op.op(1)
    X_in = grid.origin + grid.h * np.stack(np.unravel_index(op1.inside_index, grid.shape), 1)
    X_b = grid.origin + grid.h * np.stack(np.unravel_index(op1.boundary_index, grid.shape), 1)

    def lat(k):
        if callable(lateral):
            return np.broadcast_to(np.asarray(lateral(X_b, float(times[k])), dtype=float), (len(X_b),)).copy()
        arr = lateral.values if isinstance(lateral, DiscreteField) else np.asarray(lateral, dtype=float)
        return arr[k].reshape(-1)[op1.boundary_index]

    if bottom is None:
        if callable(lateral):
            bottom_in = np.asarray(lateral(X_in, float(times[0])), dtype=float)
        else:
            arr = lateral.values if isinstance(lateral, DiscreteField) else np.asarray(lateral, dtype=float)
            bottom_in = arr[0].reshape(-1)[op1.inside_index]
        bottom_b = lat(0)
    elif callable(bottom):
        bottom_in = np.asarray(bottom(X_in), dtype=float)
        bottom_b = np.asarray(bottom(X_b), dtype=float)
    else:
        arr = np.asarray(bottom.values if isinstance(bottom, DiscreteField) else bottom, dtype=float)
        bottom_in = arr.reshape(-1)[op1.inside_index]
        bottom_b = arr.reshape(-1)[op1.boundary_index]
    u = np.broadcast_to(bottom_in, (len(X_in),)).astype(float).copy()
    out = np.full((K + 1, grid.inside.size), np.nan)
    out[0, op1.inside_index] = u
    out[0, op1.boundary_index] = bottom_b
    total_its, worst = 0, 0.0
    for k in range(1, K + 1):
        ok = op.op(k)
        gk = lat(k)
        rhs = u + tau * (ok.forcing - ok.B @ gk)
        try:
            u, its, res = ok.linear(preconditioner, tol, shift=tau).solve(rhs, x0=u)
        except SolverError as e:
            raise SolverError(f"slab solve failed at level {k}: {e}", e.history) from e
        total_its += its
        worst = max(worst, res)
        out[k, op1.inside_index] = u
        out[k, op1.boundary_index] = gk
    field_ = DiscreteField(grid, out.reshape((K + 1,) + grid.shape))
    return SolveResult(field_, total_its, worst, any(o.upwind for o in op.levels), op.scheme(), op)


def solve_parabolic_many(
    op: ParabolicOperator, bottom_in: np.ndarray, lateral_b, preconditioner="auto", tol=TOL, callback: Callable | None = None
) -> np.ndarray | None:
    """Multi-column stepping: ``bottom_in`` ``(N, m)``, ``lateral_b`` ``(K, Nb, m)`` (or a
    callable ``k -> (Nb, m)``); returns ``(K+1, N, m)``.

    With ``callback(k, U_k)`` the levels are streamed to the callback instead of stored
    and ``None`` is returned.
    """
    tau = op.grid.tau
    K = len(op.grid.times) - 1
    lat = lateral_b if callable(lateral_b) else (lambda k: lateral_b[k - 1])
    U = None if callback is not None else np.empty((K + 1,) + bottom_in.shape)
    u = np.array(bottom_in, dtype=float)
    if callback is not None:
        callback(0, u)
    else:
        U[0] = u
    for k in range(1, K + 1):
        ok = op.op(k)
        lin = ok.linear(preconditioner, tol, shift=tau)
        rhs = u + tau * (ok.forcing[:, None] - ok.B @ lat(k))
        u = lin.solve_block(rhs, u)
        if callback is not None:
            callback(k, u)
        else:
            U[k] = u
    return U


# --------------------------------------------------------------------------
# export

_MAGIC = b"HLAB"
_HEADER = "<4sIII"  # magic, version, n, time levels (0 for spatial fields)


def export_csv(fld: DiscreteField, path, active_only: bool = True) -> None:
    """Write node coordinates (and time) with the value, one node per row."""
    grid = fld.grid
    mask = grid.active if active_only else np.ones(grid.shape, dtype=bool)
    X = grid.coords(mask)
    names = [f"x{k + 1}" for k in range(grid.n)]
    with open(path, "w", encoding="utf-8") as fh:
        if grid.is_spacetime:
            fh.write(",".join(names + ["t", "value"]) + "\n")
            for k, t in enumerate(grid.times):
                vals = fld.values[k][mask]
                for x, v in zip(X, vals):
                    fh.write(",".join(repr(float(c)) for c in x) + f",{float(t)!r},{float(v)!r}\n")
        else:
            fh.write(",".join(names + ["value"]) + "\n")
            for x, v in zip(X, fld.values[mask]):
                fh.write(",".join(repr(float(c)) for c in x) + f",{float(v)!r}\n")


def export_binary(fld: DiscreteField, path) -> None:
    """Compact little-endian layout.

    Header: ``b"HLAB"``, uint32 version (1), uint32 ``n``, uint32 number of time levels
    (0 for spatial fields), ``n`` uint32 lattice sizes, float64 ``h``, float64 ``tau``
    (NaN if spatial), ``n`` float64 origin coordinates, uint64 value count.  Then the
    float64 values in C node order (time level slowest), NaN off the region.
    """
    grid = fld.grid
    levels = len(grid.times) if grid.is_spacetime else 0
    vals = np.ascontiguousarray(fld.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEADER, _MAGIC, 1, grid.n, levels))
        fh.write(struct.pack(f"<{grid.n}I", *grid.shape))
        fh.write(struct.pack("<dd", grid.h, grid.tau if grid.tau is not None else math.nan))
        fh.write(struct.pack(f"<{grid.n}d", *grid.origin))
        fh.write(struct.pack("<Q", vals.size))
        fh.write(vals.tobytes())


def read_binary(path) -> dict:
    """Inverse of :func:`export_binary`: header fields and the value array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, n, levels = struct.unpack_from(_HEADER, data, 0)
    if magic != _MAGIC:
        raise ValueError("not a field file")
    off = struct.calcsize(_HEADER)
    shape = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    h, tau = struct.unpack_from("<dd", data, off)
    off += 16
    origin = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    (count,) = struct.unpack_from("<Q", data, off)
    off += 8
    vals = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    full = ((levels,) if levels else ()) + tuple(shape)
    return {"version": version, "n": n, "levels": levels, "shape": tuple(shape), "h": h, "tau": tau, "origin": origin, "values": vals.reshape(full)}
