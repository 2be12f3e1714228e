"""Lebesgue, anisotropic, Morrey and energy norms on gridded regions.

Integrals use the midpoint rule over the inside mask (weight ``h^n`` per node, and
``tau`` per time level ``k >= 1`` on space-time grids).  Drift fields are evaluated with
the capping convention of :class:`~harnack_lab.fields.DriftField` at the grid spacing;
non-finite values of plain rules are read as points of the singular set and count as 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .fields import DriftField
from .geometry import Ball, Cylinder, DiscreteField, Grid, build_grid

__all__ = [
    "NormParams",
    "NormReport",
    "check_elliptic_exponent",
    "check_parabolic_exponents",
    "lebesgue_norm",
    "anisotropic_norm",
    "morrey_norm",
    "parabolic_morrey_norm",
    "quantity_N",
    "quantity_N_hat",
    "v_norm",
    "field_magnitude",
    "singular_lq_integral",
]


@dataclass(frozen=True)
class NormParams:
    q: float
    ell: float = math.inf
    alpha: float = 0.0


def check_elliptic_exponent(q: float, n: int) -> float:
    """Validate ``n/2 < q <= n`` and return ``alpha = n/q - 1``."""
    if not q > n / 2:
        raise ValueError(f"inadmissible exponent: q={q} must exceed n/2={n / 2}")
    if q > n:
        raise ValueError(f"inadmissible exponent: q={q} must not exceed n={n}")
    return n / q - 1


def check_parabolic_exponents(q: float, ell: float, n: int) -> float:
    """Validate ``0 <= n/q + 2/ell - 1 < 1`` and return that value."""
    if q < 1 or ell < 1:
        raise ValueError(f"inadmissible exponents: q={q}, ell={ell} must be >= 1")
    alpha = n / q + 2 / ell - 1
    if alpha < 0:
        raise ValueError(f"inadmissible exponents: alpha = n/q + 2/ell - 1 = {alpha:.6g} < 0")
    if alpha >= 1:
        raise ValueError(f"inadmissible exponents: alpha = n/q + 2/ell - 1 = {alpha:.6g} >= 1")
    return alpha


@dataclass(frozen=True)
class NormReport:
    """Value of a norm with the achieving ball or cylinder (Morrey norms)."""

    value: float
    center: tuple[float, ...] | None = None
    radius: float | None = None
    apex: float | None = None
    resolution: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "maximizer": None
            if self.center is None
            else {"center": list(self.center), "radius": self.radius, "apex": self.apex},
            "resolution": dict(self.resolution),
        }


# --------------------------------------------------------------------------
# evaluation helpers


def field_magnitude(f, grid: Grid | None = None) -> tuple[np.ndarray, Grid]:
    """``|f|`` at every lattice node (and time level) of ``grid``."""
    if isinstance(f, DiscreteField):
        grid = grid or f.grid
        vals = np.abs(f.values)
        return np.where(np.isfinite(vals), vals, 0.0), grid
    if grid is None:
        raise ValueError("a grid is required to evaluate a rule")
    X = grid.mesh()
    times = grid.times if grid.is_spacetime else [None]
    out = []
    for t in times:
        if isinstance(f, DriftField):
            v = f(X, t, cap_h=grid.h)
        elif callable(f):
            v = f(X) if t is None else f(X, t)
        else:
            v = f if t is None else f[len(out)]
        v = np.asarray(v, dtype=float)
        if v.shape == grid.shape + (grid.n,):
            with np.errstate(invalid="ignore", over="ignore"):
                v = np.linalg.norm(v, axis=-1)
        v = np.broadcast_to(np.abs(v), grid.shape)
        out.append(np.where(np.isfinite(v), v, 0.0))
    vals = np.stack(out) if grid.is_spacetime else out[0]
    return vals, grid


def _level_weights(grid: Grid, tmask=None) -> np.ndarray:
    w = np.full(len(grid.times), grid.tau)
    w[0] = 0.0
    if tmask is not None:
        w = np.where(tmask, w, 0.0)
    return w


def _finite_power(x: float, p: float) -> float:
    return float(x**p) if x > 0 else 0.0


# --------------------------------------------------------------------------
# Lebesgue-type norms


def lebesgue_norm(f, q: float, grid: Grid | None = None, mask=None, tmask=None) -> float:
    """``||f||_q`` over the region (intersected with ``mask``); ``q = inf`` is the nodal max."""
    if q < 1:
        raise ValueError("q must be >= 1")
    vals, grid = field_magnitude(f, grid)
    m = grid.inside if mask is None else grid.inside & mask
    if not m.any():
        raise ValueError("empty region")
    if grid.is_spacetime:
        w = _level_weights(grid, tmask)
        sel = vals[w > 0][:, m]
        if sel.size == 0:
            raise ValueError("empty region")
        if math.isinf(q):
            return float(sel.max())
        s = float(np.sum(w[w > 0] * np.sum(sel**q, axis=1))) * grid.cell_volume
        return _finite_power(s, 1 / q)
    sel = vals[m]
    if math.isinf(q):
        return float(sel.max())
    return _finite_power(float(np.sum(sel**q)) * grid.cell_volume, 1 / q)


def anisotropic_norm(f, q: float, ell: float, grid: Grid | None = None, mask=None, tmask=None) -> float:
    """``|| ||f(., t)||_q ||_ell`` with inner spatial norm per level and outer time norm."""
    vals, grid = field_magnitude(f, grid)
    if not grid.is_spacetime:
        raise ValueError("anisotropic norm needs a space-time grid")
    if isinstance(f, DiscreteField) and f.grid is not grid and f.grid.shape != grid.shape:
        raise ValueError("field grid does not match")
    m = grid.inside if mask is None else grid.inside & mask
    w = _level_weights(grid, tmask)
    levels = np.nonzero(w > 0)[0]
    if not m.any() or levels.size == 0:
        raise ValueError("empty region")
    sel = vals[levels][:, m]
    if math.isinf(q):
        inner = sel.max(axis=1)
    else:
        inner = (np.sum(sel**q, axis=1) * grid.cell_volume) ** (1 / q)
    if math.isinf(ell):
        return float(inner.max())
    if not math.isinf(q) and ell == q:
        # same summation order as lebesgue_norm
        s = float(np.sum(w[levels] * np.sum(sel**q, axis=1))) * grid.cell_volume
        return _finite_power(s, 1 / q)
    return _finite_power(float(np.sum(w[levels] * inner**ell)), 1 / ell)


# --------------------------------------------------------------------------
# Morrey norms


def _ball_kernel(radius: float, h: float, n: int) -> np.ndarray:
    m = int(math.floor(radius / h))
    k = np.arange(-m, m + 1) * h
    d2 = sum(np.meshgrid(*[k**2] * n, indexing="ij"))
    return (d2 < radius**2 * (1 - 1e-12)).astype(float)


def _ball_sums(g: np.ndarray, radius: float, h: float, q: float) -> np.ndarray:
    """Per-node sum of ``g`` over lattice balls (``q = inf``: max)."""
    ker = _ball_kernel(radius, h, g.ndim)
    if math.isinf(q):
        return ndimage.maximum_filter(g, footprint=ker.astype(bool), mode="constant", cval=0.0)
    if ker.size == 1:
        return g.copy()
    return np.maximum(signal.fftconvolve(g, ker, mode="same"), 0.0)


def _radii(R: float, h: float, radii_per_octave: int, min_radius: float | None) -> list[float]:
    rmin = min_radius if min_radius is not None else 2 * h
    out, j = [], 0
    while True:
        r = R * 2.0 ** (-j / radii_per_octave)
        if r < rmin * (1 - 1e-12):
            break
        out.append(r)
        j += 1
    return out


def _center_candidates(grid: Grid, stride: int) -> np.ndarray:
    idx = np.indices(grid.shape)
    m = grid.inside.copy()
    for k in range(grid.n):
        m &= (idx[k] - grid.shape[k] // 2) % stride == 0
    return m


def morrey_norm(
    f,
    q: float,
    alpha: float,
    grid: Grid | None = None,
    stride: int = 1,
    radii_per_octave: int = 1,
    min_radius: float | None = None,
) -> NormReport:
    """``sup rho^{-alpha} ||f||_{q, B_rho(x)}`` over lattice balls inside the region.

    Candidate centres are inside nodes on a sublattice of step ``stride``; radii are
    ``R 2^{-j/radii_per_octave}`` down to ``min_radius`` (default ``2h``).  The result is
    a lower bound on the true supremum that never decreases under refinement of either
    lattice.  Ties go to the lexicographically first centre and the larger radius.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    vals, grid = field_magnitude(f, grid)
    if grid.is_spacetime:
        raise ValueError("use parabolic_morrey_norm on space-time grids")
    region = grid.region
    R = region.radius
    c0 = np.asarray(region.center, dtype=float)
    h = grid.h
    g = np.where(grid.inside, vals if math.isinf(q) else vals**q, 0.0)
    cand = _center_candidates(grid, stride)
    X = grid.mesh()
    dist = np.linalg.norm(X - c0, axis=-1)
    best, arg = 0.0, None
    radii = _radii(R, h, radii_per_octave, min_radius)
    for rho in radii:
        ok = cand & (dist + rho <= R * (1 + 1e-12))
        if not ok.any():
            continue
        S = _ball_sums(g, rho, h, q)
        if math.isinf(q):
            val = np.where(ok, S, -1.0) * rho**-alpha
        else:
            val = np.where(ok, (S * grid.cell_volume) ** (1 / q), -1.0) * rho**-alpha
        i = int(np.argmax(val))
        v = float(val.flat[i])
        if v > best:
            best, arg = v, (tuple(float(c) for c in X.reshape(-1, grid.n)[i]), rho)
    res = {"h": h, "stride": stride, "radii_per_octave": radii_per_octave, "radii": len(radii)}
    if arg is None:
        return NormReport(0.0, None, None, None, res)
    return NormReport(best, arg[0], arg[1], None, res)


def parabolic_morrey_norm(
    f,
    q: float,
    ell: float,
    alpha: float,
    grid: Grid | None = None,
    stride: int = 1,
    radii_per_octave: int = 1,
    min_radius: float | None = None,
) -> NormReport:
    """``sup rho^{-alpha} ||f||_{q, ell, Q_rho(x; t)}`` over sub-cylinders with apex ``t``.

    ``Q_rho(x; t) = B_rho(x) x ]t - rho^2, t[`` must lie in the grid cylinder.  Time
    integrals use the levels ``t_k`` in ``]t - rho^2, t]`` with weight ``tau``.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    vals, grid = field_magnitude(f, grid)
    if not grid.is_spacetime:
        raise ValueError("parabolic Morrey norm needs a space-time grid")
    cyl = grid.region
    Rs = cyl.radius
    c0 = np.asarray(cyl.center, dtype=float)
    h, tau, times = grid.h, grid.tau, grid.times
    K = len(times) - 1
    cand = _center_candidates(grid, stride)
    X = grid.mesh()
    dist = np.linalg.norm(X - c0, axis=-1)
    rmin = max(min_radius if min_radius is not None else 2 * h, math.sqrt(tau))
    best, arg = 0.0, None
    radii = [r for r in _radii(min(Rs, math.sqrt(cyl.duration)), h, radii_per_octave, rmin)]
    for rho in radii:
        ok = cand & (dist + rho <= Rs * (1 + 1e-12))
        if not ok.any():
            continue
        nlev = int(math.floor(rho**2 / tau + 1e-9))
        if nlev < 1:
            continue
        # per-level ball integrals, levels 1..K
        S = np.stack(
            [_ball_sums(np.where(grid.inside, vals[k] if math.isinf(q) else vals[k] ** q, 0.0), rho, h, q) for k in range(1, K + 1)]
        )
        inner = S if math.isinf(q) else (S * grid.cell_volume) ** (1 / q)
        for apex in range(nlev, K + 1):  # window levels apex-nlev+1 .. apex (1-based)
            win = inner[apex - nlev : apex]
            if math.isinf(ell):
                w = win.max(axis=0)
            else:
                w = (tau * np.sum(win**ell, axis=0)) ** (1 / ell)
            val = np.where(ok, w, -1.0) * rho**-alpha
            i = int(np.argmax(val))
            v = float(val.flat[i])
            if v > best:
                best = v
                arg = (tuple(float(c) for c in X.reshape(-1, grid.n)[i]), rho, float(times[apex]))
    res = {"h": h, "tau": tau, "stride": stride, "radii_per_octave": radii_per_octave, "radii": len(radii)}
    if arg is None:
        return NormReport(0.0, None, None, None, res)
    return NormReport(best, arg[0], arg[1], arg[2], res)


# --------------------------------------------------------------------------
# singular drifts


def _smooth_cut(d: np.ndarray, r1: float) -> np.ndarray:
    """1 on ``d <= r1/2``, 0 on ``d >= r1``, septic smoothstep in between."""
    s = np.clip((r1 - np.asarray(d, dtype=float)) / (0.5 * r1), 0.0, 1.0)
    return s**4 * (35 - 84 * s + 70 * s**2 - 20 * s**3)


def _frame(e: np.ndarray) -> np.ndarray:
    e = e / np.linalg.norm(e)
    a = np.eye(3)[int(np.argmin(np.abs(e)))]
    u1 = np.cross(e, a)
    u1 /= np.linalg.norm(u1)
    return np.stack([e, u1, np.cross(e, u1)])


def singular_lq_integral(
    b: DriftField, q: float, center, radius: float, h: float, t: float | None = None, tube: float = 0.25, nodes: int = 32
) -> float:
    """``int_{B_radius(center)} |b|^q dx`` for a drift with a point or line singularity.

    A smooth cutoff of width ``tube * radius`` around the singular set splits the integral:
    the outer part is summed on a lattice of spacing ``h``, the tube part in polar (line:
    cylindrical, point: spherical) coordinates with the substitution ``d = r s^p`` that
    removes the integrable singularity, Gauss-Legendre in ``s`` and uniform angles.
    """
    sing = b.singular_set(t)
    n = b.n
    c = np.asarray(center, dtype=float)
    r1 = tube * radius
    grid = build_grid(Ball(tuple(c), radius), h)
    X = grid.mesh()[grid.inside]
    d = b.singular_distance(X, t)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        mag = np.linalg.norm(b(X, t), axis=-1) ** q
    outer = float(np.sum(np.where(d > 0.5 * r1, (1 - _smooth_cut(d, r1)) * mag, 0.0))) * grid.cell_volume
    if sing is None:
        return outer
    codim = 2 if sing["kind"] == "line" else n
    if q >= codim:
        return math.inf
    p = max(1.0, math.ceil(2.0 / (codim - q)))
    s, ws = np.polynomial.legendre.leggauss(nodes)
    s, ws = 0.5 * (s + 1), 0.5 * ws
    dist = r1 * s**p
    ddist = r1 * p * s ** (p - 1) * ws
    ang = 2 * np.pi * (np.arange(2 * nodes) + 0.5) / (2 * nodes)
    wang = 2 * np.pi / (2 * nodes)
    if sing["kind"] == "line":
        F = _frame(np.asarray(sing["direction"], dtype=float))
        p0 = np.asarray(sing["point"], dtype=float)
        zc = float((c - p0) @ F[0])
        half = radius + r1
        nz = max(8, int(math.ceil(2 * half / (h / 2))))
        z = zc - half + (np.arange(nz) + 0.5) * (2 * half / nz)
        wz = 2 * half / nz
        D, A = np.meshgrid(dist, ang, indexing="ij")
        W = (ddist[:, None] * dist[:, None]) * wang * np.ones_like(A)
        offs = D[..., None] * (np.cos(A)[..., None] * F[1] + np.sin(A)[..., None] * F[2])
        total = 0.0
        for zk in z:
            P = p0 + zk * F[0] + offs
            ins = np.sum((P - c) ** 2, axis=-1) < radius**2
            if not ins.any():
                continue
            with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
                m = np.linalg.norm(b(P, t), axis=-1) ** q
            total += float(np.sum(np.where(ins, W * _smooth_cut(D, r1) * m, 0.0))) * wz
        return outer + total
    pc = np.asarray(sing["center"], dtype=float)
    if n == 2:
        D, A = np.meshgrid(dist, ang, indexing="ij")
        W = ddist[:, None] * dist[:, None] * wang * np.ones_like(A)
        P = pc + D[..., None] * np.stack([np.cos(A), np.sin(A)], -1)
    else:
        mu, wmu = np.polynomial.legendre.leggauss(nodes)
        D, M, A = np.meshgrid(dist, mu, ang, indexing="ij")
        W = (ddist[:, None, None] * dist[:, None, None] ** 2) * wmu[None, :, None] * wang
        sn = np.sqrt(1 - M**2)
        P = pc + D[..., None] * np.stack([sn * np.cos(A), sn * np.sin(A), M], -1)
    ins = np.sum((P - c) ** 2, axis=-1) < radius**2
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        m = np.linalg.norm(b(P, t), axis=-1) ** q
    return outer + float(np.sum(np.where(ins, W * _smooth_cut(D, r1) * m, 0.0)))


def _spatial_lq(b, q: float, center, rad: float, h: float) -> float:
    if isinstance(b, DriftField) and b.singular_set(None) is not None and not b.time_dependent and not math.isinf(q):
        return _finite_power(singular_lq_integral(b, q, center, rad, h), 1 / q)
    return lebesgue_norm(b, q, build_grid(Ball(center, rad), h))


# --------------------------------------------------------------------------
# scale-invariant drift quantities


def _drift_dim(b, center) -> int:
    if isinstance(b, DriftField):
        return b.n
    if center is not None:
        return len(center)
    raise ValueError("dimension unknown: pass a DriftField or a centre")


def quantity_N(b, R: float, lam: float, q: float, center=None, h: float | None = None, resolution: int = 32) -> float:
    """``R^{1 - n/q} ||b||_{q, B_{lam R}(center)}``.

    The ball is gridded with ``h = lam R / resolution`` unless ``h`` is given; steady
    drifts with a point or line singularity use :func:`singular_lq_integral`.
    """
    n = _drift_dim(b, center)
    check_elliptic_exponent(q, n)
    center = tuple(center) if center is not None else (0.0,) * n
    rad = lam * R
    return R ** (1 - n / q) * _spatial_lq(b, q, center, rad, h or rad / resolution)


def quantity_N_hat(
    b,
    R: float,
    lam: float,
    theta: float,
    q: float,
    ell: float,
    center=None,
    t0: float = 0.0,
    h: float | None = None,
    tau: float | None = None,
    resolution: int = 32,
) -> float:
    """``R^{-alpha} ||b||_{q, ell, Q_R^{lam, theta}(center; t0)}`` with ``alpha = n/q + 2/ell - 1``."""
    n = _drift_dim(b, center)
    alpha = check_parabolic_exponents(q, ell, n)
    center = tuple(center) if center is not None else (0.0,) * n
    rad = lam * R
    h = h or rad / resolution
    time_dep = isinstance(b, DriftField) and b.time_dependent
    if not time_dep:
        spatial = _spatial_lq(b, q, center, rad, h)
        length = theta * R**2
        return R**-alpha * spatial * (1.0 if math.isinf(ell) else length ** (1 / ell))
    cyl = Cylinder(center, t0, R, lam, theta)
    grid = build_grid(cyl, h, tau or h)
    return R**-alpha * anisotropic_norm(b, q, ell, grid)


def v_norm(f, grid: Grid | None = None) -> float:
    """``(||f||_{2, inf}^2 + ||Df||_{2, 2}^2)^{1/2}`` on a space-time grid, central differences."""
    if isinstance(f, DiscreteField):
        grid = grid or f.grid
        vals = f.values
    else:
        if grid is None:
            raise ValueError("a grid is required to evaluate a rule")
        vals = DiscreteField.from_rule(grid, f).values
    if not grid.is_spacetime:
        raise ValueError("v_norm needs a space-time grid")
    m = grid.inside
    sup2, grad2 = 0.0, 0.0
    for k in range(1, len(grid.times)):
        u = vals[k]
        sup2 = max(sup2, float(np.sum(u[m] ** 2)) * grid.cell_volume)
        g = np.gradient(u, grid.h)
        g2 = sum(gk[m] ** 2 for gk in g)
        grad2 += grid.tau * float(np.sum(g2)) * grid.cell_volume
    return math.sqrt(sup2 + grad2)
