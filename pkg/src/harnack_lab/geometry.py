"""Regions, uniform grids and the geometric constructions used by the estimates.

Balls and parabolic cylinders are realized on node-centred uniform Cartesian
lattices.  A node belongs to the region when it lies strictly inside the
analytic region; the nodes just outside (within one stencil step) carry
Dirichlet data.

The chain constructions are pure algebra along the ray through the starting
point, so their containment certificates are evaluated exactly with
:class:`fractions.Fraction`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, special

__all__ = [
    "Ball",
    "Cylinder",
    "Grid",
    "DiscreteField",
    "ChainPlan",
    "LayerSplit",
    "ball_measure",
    "build_grid",
    "ball_chain",
    "parabolic_chain",
    "layer_split",
    "dist_to_sphere",
    "d_par",
    "region_from_json",
    "grid_from_json",
]


def ball_measure(radius: float, n: int) -> float:
    """Lebesgue measure of a ball of the given radius in R^n."""
    return math.pi ** (n / 2) / special.gamma(n / 2 + 1) * radius**n


@dataclass(frozen=True)
class Ball:
    """Open ball ``B_R(center)`` in R^n, n in {2, 3}."""

    center: tuple[float, ...]
    R: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if not self.R > 0:
            raise ValueError(f"radius must be positive, got {self.R}")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def radius(self) -> float:
        return self.R

    @property
    def measure(self) -> float:
        return ball_measure(self.R, self.n)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sum((x - np.asarray(self.center)) ** 2, axis=-1) < self.R**2

    def to_dict(self) -> dict:
        return {"kind": "ball", "center": list(self.center), "R": self.R}


@dataclass(frozen=True)
class Cylinder:
    """Parabolic cylinder ``Q_R^{lam,theta}(x0; t0) = B_{lam R}(x0) x ]t0 - theta R^2, t0[``."""

    center: tuple[float, ...]
    t0: float
    R: float
    lam: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if not self.R > 0:
            raise ValueError(f"radius must be positive, got {self.R}")
        if self.lam < 1:
            raise ValueError(f"spatial factor lambda must be >= 1, got {self.lam}")
        if not self.theta > 0:
            raise ValueError(f"temporal factor theta must be positive, got {self.theta}")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def radius(self) -> float:
        """Spatial radius ``lam * R``."""
        return self.lam * self.R

    @property
    def t_bottom(self) -> float:
        return self.t0 - self.theta * self.R**2

    @property
    def duration(self) -> float:
        return self.theta * self.R**2

    @property
    def base(self) -> Ball:
        return Ball(self.center, self.radius)

    @property
    def measure(self) -> float:
        return ball_measure(self.radius, self.n) * self.duration

    @classmethod
    def standard(cls, center, t0: float, rho: float) -> "Cylinder":
        """``Q_rho(x; t) = B_rho(x) x ]t - rho^2, t[``."""
        return cls(center, t0, rho, 1.0, 1.0)

    def contains(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.sum((x - np.asarray(self.center)) ** 2, axis=-1) < self.radius**2
        t = np.asarray(t, dtype=float)
        return inside & (t > self.t_bottom) & (t < self.t0)

    def to_dict(self) -> dict:
        return {
            "kind": "cylinder",
            "center": list(self.center),
            "t0": self.t0,
            "R": self.R,
            "lambda": self.lam,
            "theta": self.theta,
        }


Region = Ball | Cylinder


def region_from_json(doc: dict | str) -> Region:
    if isinstance(doc, str):
        doc = json.loads(doc)
    kind = doc.get("kind")
    if kind == "ball":
        return Ball(tuple(doc["center"]), float(doc["R"]))
    if kind == "cylinder":
        return Cylinder(
            tuple(doc["center"]),
            float(doc.get("t0", 0.0)),
            float(doc["R"]),
            float(doc.get("lambda", 1.0)),
            float(doc.get("theta", 1.0)),
        )
    raise ValueError(f"unknown region kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node lattice realizing a ball or a cylinder.

    ``inside`` marks nodes strictly inside the spatial ball; ``boundary`` marks
    the outside nodes that are stencil neighbours (Chebyshev distance one) of
    an inside node.  For cylinders the same spatial masks hold on every time
    level ``times[1:]`` (lateral surface), while the whole level ``times[0]``
    is the bottom of the parabolic boundary.
    """

    region: Region
    h: float
    origin: np.ndarray
    shape: tuple[int, ...]
    inside: np.ndarray
    boundary: np.ndarray
    tau: float | None = None
    times: np.ndarray | None = None
    shift: float = 0.0

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def is_spacetime(self) -> bool:
        return self.times is not None

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @property
    def active(self) -> np.ndarray:
        return self.inside | self.boundary

    def axes(self) -> list[np.ndarray]:
        return [self.origin[k] + self.h * np.arange(self.shape[k]) for k in range(self.n)]

    def coords(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Coordinates of the nodes selected by ``mask`` (flat C order), shape (N, n)."""
        if mask is None:
            idx = np.indices(self.shape).reshape(self.n, -1).T
        else:
            idx = np.argwhere(mask)
        return self.origin + self.h * idx

    def mesh(self) -> np.ndarray:
        """Full coordinate array of shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def ball_mask(self, center, radius: float) -> np.ndarray:
        """Nodes strictly inside ``B_radius(center)`` (no intersection with ``inside``)."""
        axes = self.axes()
        d2 = np.zeros(self.shape)
        for k in range(self.n):
            shp = [1] * self.n
            shp[k] = -1
            d2 = d2 + ((axes[k] - center[k]) ** 2).reshape(shp)
        return d2 < radius**2

    def time_mask(self, t_lo: float, t_hi: float, closed_top: bool = True) -> np.ndarray:
        """Time levels ``k >= 1`` with ``t_lo < t_k <= t_hi`` (``< t_hi`` if not ``closed_top``)."""
        if self.times is None:
            raise ValueError("grid has no time levels")
        eps = 1e-9 * max(self.tau, 1e-300)
        t = self.times
        upper = t <= t_hi + eps if closed_top else t < t_hi - eps
        m = (t > t_lo + eps) & upper
        m[0] = False
        return m

    def discrete_measure(self) -> float:
        meas = self.n_inside * self.cell_volume
        if self.is_spacetime:
            meas *= self.tau * (len(self.times) - 1)
        return meas

    def to_dict(self) -> dict:
        doc = dict(self.region.to_dict())
        doc["h"] = self.h
        doc["tau"] = self.tau
        if self.shift:
            doc["shift"] = self.shift
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def grid_from_json(doc: dict | str) -> Grid:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return build_grid(region_from_json(doc), float(doc["h"]), doc.get("tau"), float(doc.get("shift", 0.0)))


def build_grid(region: Region, h: float, tau: float | None = None, shift: float = 0.0) -> Grid:
    """Realize ``region`` on a uniform lattice of spacing ``h`` centred on the region centre.

    With ``shift`` the lattice is offset by ``shift * h`` along every axis (``0.5`` gives
    a cell-centred lattice that avoids the centre point itself).

    Raises
    ------
    ValueError
        "grid too coarse" when ``h`` exceeds half the (spatial) radius,
        "degenerate region" when no node falls strictly inside.
    """
    if not h > 0:
        raise ValueError("spacing h must be positive")
    radius = region.radius
    if h > radius / 2:
        raise ValueError(f"grid too coarse: h={h} > radius/2={radius / 2}")
    n = region.n
    m = int(math.ceil(radius / h)) + 1
    shape = (2 * m + 1,) * n
    center = np.asarray(region.center, dtype=float)
    if not 0.0 <= shift < 1.0:
        raise ValueError("shift must lie in [0, 1)")
    origin = center + (shift - m) * h
    k = (np.arange(-m, m + 1) + shift) * h
    d2 = np.zeros(shape)
    for ax in range(n):
        shp = [1] * n
        shp[ax] = -1
        d2 = d2 + (k**2).reshape(shp)
    inside = d2 < radius**2
    if not inside.any():
        raise ValueError("degenerate region: no grid node inside")
    near = ndimage.binary_dilation(inside, structure=np.ones((3,) * n, dtype=bool))
    boundary = near & ~inside

    times = None
    if isinstance(region, Cylinder):
        if tau is None or not tau > 0:
            raise ValueError("cylinder grids need a positive time step tau")
        if tau > h * (1 + 1e-12):
            raise ValueError(f"time step tau={tau} must not exceed h={h}")
        K = int(math.ceil(region.duration / tau - 1e-9))
        tau = region.duration / K
        times = region.t_bottom + tau * np.arange(K + 1)
        times[-1] = region.t0
    else:
        tau = None
    return Grid(region, float(h), origin, shape, inside, boundary, tau, times, float(shift))


@dataclass(eq=False)
class DiscreteField:
    """Nodal values over a grid.

    ``values`` has shape ``grid.shape`` (space) or ``(len(grid.times),) + grid.shape``
    (space-time).  Nodes outside ``inside | boundary`` hold NaN unless the field was
    sampled from an analytic rule everywhere.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        expected = self.grid.shape
        if self.grid.is_spacetime:
            expected = (len(self.grid.times),) + expected
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grid {expected}")

    @classmethod
    def from_rule(cls, grid: Grid, rule: Callable) -> "DiscreteField":
        """Sample ``rule(x)`` (or ``rule(x, t)`` on space-time grids) at every lattice node."""
        X = grid.mesh()
        if grid.is_spacetime:
            vals = np.stack([np.asarray(rule(X, t), dtype=float) for t in grid.times])
        else:
            vals = np.asarray(rule(X), dtype=float)
        return cls(grid, np.broadcast_to(vals, _field_shape(grid)).copy())

    def region_values(self, mask: np.ndarray | None = None, tmask: np.ndarray | None = None) -> np.ndarray:
        """Values at nodes inside the region (optionally intersected with ``mask``)."""
        m = self.grid.inside if mask is None else (self.grid.inside & mask)
        if self.grid.is_spacetime:
            if tmask is None:
                tmask = np.ones(len(self.grid.times), dtype=bool)
                tmask[0] = False
            return self.values[tmask][:, m]
        return self.values[m]


def _field_shape(grid: Grid) -> tuple[int, ...]:
    if grid.is_spacetime:
        return (len(grid.times),) + grid.shape
    return grid.shape


# --------------------------------------------------------------------------
# distances


def dist_to_sphere(y, R: float) -> float:
    """``dist(y, dB_R)`` for ``y`` inside ``B_R`` (origin-centred)."""
    return R - float(np.linalg.norm(y))


def d_par(y, s: float, R: float, t_top: float = 0.0) -> float:
    """Largest ``rho`` with ``Q_rho(y; s)`` inside ``B_R x ]t_top - R^2, t_top[``.

    With ``R`` the spatial radius of the ambient standard cylinder (``Q_{2R}`` in the
    chain lemma has spatial radius ``2R`` and height ``4R^2``).
    """
    r = float(np.linalg.norm(y))
    return max(0.0, min(R - r, math.sqrt(max(0.0, s - (t_top - R**2)))))


# --------------------------------------------------------------------------
# chains


@dataclass(frozen=True)
class ChainPlan:
    """A chain of balls (or cylinders) marching from a small ball to the unit-scale region.

    ``radii[m]``, ``centers[m]`` and (parabolic) ``times[m]`` describe link ``m``.
    ``certificates`` holds the exact per-link containment checks.
    """

    count: int
    radii: tuple[float, ...]
    centers: tuple[np.ndarray, ...]
    times: tuple[float, ...] | None
    certificates: tuple[dict, ...]
    convention: str
    rho: float
    R: float

    @property
    def certified(self) -> bool:
        return all(all(c.values()) for c in self.certificates)

    @property
    def links(self) -> int:
        return len(self.radii)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "radii": list(self.radii),
            "centers": [list(map(float, c)) for c in self.centers],
            "times": None if self.times is None else list(self.times),
            "certificates": list(self.certificates),
            "convention": self.convention,
            "rho": self.rho,
            "R": self.R,
        }


def _fr(x: float) -> Fraction:
    return Fraction(float(x))


def _lens_fraction(r_small: float, r_big: float, d: float, n: int) -> float:
    """meas(B_{r_small}(a) & B_{r_big}(b)) / meas(B_{r_big}) with |a - b| = d."""
    r1, r2 = r_small, r_big
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r2 - r1):
        return ball_measure(min(r1, r2), n) / ball_measure(r2, n)
    if n == 3:
        v = math.pi * (r1 + r2 - d) ** 2 * (d * d + 2 * d * (r1 + r2) - 3 * (r1 - r2) ** 2) / (12 * d)
    else:
        c1 = np.clip((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1, 1)
        c2 = np.clip((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1, 1)
        v = (
            r1 * r1 * math.acos(c1)
            + r2 * r2 * math.acos(c2)
            - 0.5 * math.sqrt(max(0.0, (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)))
        )
    return v / ball_measure(r2, n)


def _dyadic_index(R: Fraction, rho: Fraction, upper_closed: bool) -> int:
    """Integer N with ``2^-(N+1) R < rho <= 2^-N R`` (``upper_closed``) or
    ``2^-(N+1) R <= rho < 2^-N R`` (otherwise)."""
    N = 0
    if upper_closed:
        while not (R / 2 ** (N + 1) < rho <= R / 2**N):
            N += 1
            if N > 200:
                raise ValueError("inconsistent chain input: rho out of dyadic range")
    else:
        while not (R / 2 ** (N + 1) <= rho < R / 2**N):
            N += 1
            if N > 200:
                raise ValueError("inconsistent chain input: rho out of dyadic range")
    return N


def ball_chain(y: Sequence[float], R: float, rho: float | None = None) -> ChainPlan:
    """Ball chain from ``B_rho(y)`` to ``B_R(0)`` inside ``B_{2R}``.

    ``rho`` must equal a quarter of ``dist(y, dB_{2R})``; it is computed when omitted.
    Uses the convention ``2^-(N+1) R < rho <= 2^-N R``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    d = float(np.linalg.norm(y))
    if not d < 2 * R:
        raise ValueError("inconsistent chain input: y outside B_{2R}")
    rho_exact = (2 * _fr(R) - _fr(d)) / 4
    if rho is not None and _fr(rho) != rho_exact and not math.isclose(rho, float(rho_exact), rel_tol=1e-12):
        raise ValueError(f"inconsistent chain input: rho={rho} but dist/4={float(rho_exact)}")
    conv = "2^-(N+1)R < rho <= 2^-N R"
    if d == 0.0:
        return ChainPlan(0, (), (), None, (), conv, float(rho_exact), R)

    Rf = _fr(R)
    N = _dyadic_index(Rf, rho_exact, upper_closed=True)
    e = y / d
    df = _fr(d)
    r = [Rf / 2**N]
    s = [2 * Rf * (1 - Fraction(1, 2**N))]  # distance of centre from origin along e
    for m in range(1, N + 1):
        r.append(2 * r[m - 1])
        s.append(s[m - 1] - r[m])

    certs = []
    first = {
        "in_B3rho_y": abs(s[0] - df) + r[0] <= 3 * rho_exact,
        "in_B2R": s[0] + r[0] <= 2 * Rf,
    }
    certs.append(first)
    for m in range(1, N + 1):
        overlap = _lens_fraction(float(r[m - 1]), float(r[m]), float(s[m - 1] - s[m]), n)
        certs.append(
            {
                "doubled_in_B2R": s[m] + 2 * r[m] <= 2 * Rf,
                "radius_doubles": r[m] == 2 * r[m - 1],
                "overlap_positive": overlap > 0.0,
            }
        )
    certs[-1]["final_is_B_R"] = s[-1] == 0 and r[-1] == Rf
    radii = tuple(float(v) for v in r)
    centers = tuple(float(v) * e for v in s)
    return ChainPlan(N, radii, centers, None, tuple(certs), conv, float(rho_exact), R)


def chain_overlaps(plan: ChainPlan, n: int) -> list[float]:
    """Overlap fractions ``meas(B_{r_{m-1}}(y_{m-1}) & B_{r_m}(y_m)) / meas(B_{r_m})``."""
    out = []
    for m in range(1, plan.links):
        d = float(np.linalg.norm(plan.centers[m] - plan.centers[m - 1]))
        out.append(_lens_fraction(plan.radii[m - 1], plan.radii[m], d, n))
    return out


def parabolic_chain(y: Sequence[float], s: float, R: float, rho: float | None = None) -> ChainPlan:
    """Cylinder chain ``Q^{4,1}_{r_m}(y_m; t_m)`` marching from ``(y; s)`` to the axis.

    ``(y; s)`` must lie in ``Q_R^{2,2}(0; -2R^2) = B_{2R} x ]-4R^2, -2R^2]``.  When
    ``rho`` is omitted it is a quarter of the parabolic distance to ``d'Q_{2R}``.
    Uses the convention ``2^-(N+1) R <= rho < 2^-N R``.
    """
    y = np.asarray(y, dtype=float)
    d = float(np.linalg.norm(y))
    if not (d < 2 * R and -4 * R * R < s <= -2 * R * R):
        raise ValueError("chain start out of range: (y; s) not in Q_R^{2,2}(0; -2R^2)")
    Rf, sf, df = _fr(R), _fr(s), _fr(d)
    if rho is None:
        rho = d_par(y, s, 2 * R) / 4
    if not 0 < rho <= R / 2:
        raise ValueError(f"chain start out of range: rho={rho} not in ]0, R/2]")
    rhof = _fr(rho)
    N = _dyadic_index(Rf, rhof, upper_closed=False)
    e = y / d if d > 0 else np.zeros_like(y)

    r = [Rf / 2 ** (N + 1)]
    c = [df]
    t = [sf + r[0] ** 2]
    for m in range(1, N + 1):
        r.append(2 * r[m - 1])
        c.append(c[m - 1] - min(2 * r[m], c[m - 1]))
        t.append(t[m - 1] + r[m] ** 2)

    certs = []
    for m in range(N + 1):
        certs.append(
            {
                "space_in_B2R": c[m] + 4 * r[m] <= 2 * Rf,
                "time_in_Q2R": t[m] - r[m] ** 2 >= -4 * Rf * Rf and t[m] <= 0,
            }
        )
    certs[-1]["next_radius_is_R"] = 2 * r[-1] == Rf
    certs[-1]["final_center_origin"] = c[-1] == 0
    certs[-1]["final_time_bound"] = t[-1] < sf + Rf * Rf / 3 and t[-1] <= -Fraction(5, 3) * Rf * Rf
    if not all(all(cc.values()) for cc in certs):
        raise ValueError("chain start out of range: containment certificate failed")
    return ChainPlan(
        N,
        tuple(float(v) for v in r),
        tuple(float(v) * e for v in c),
        tuple(float(v) for v in t),
        tuple(certs),
        "2^-(N+1)R <= rho < 2^-N R",
        float(rho),
        R,
    )


# --------------------------------------------------------------------------
# layer split


@dataclass(frozen=True)
class LayerSplit:
    """Spherical layer ``{r - 2 delta R < |x - c| < r + 2 delta R}`` with small drift norm."""

    M: int
    delta: float
    r: float
    inner: float
    outer: float
    norm: float
    total: float
    center: tuple[float, ...]
    weighted: bool

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _sphere_rule(n: int, n_polar: int = 24, n_azimuth: int = 48):
    """Unit directions and weights integrating over the unit sphere S^{n-1}."""
    if n == 2:
        phi = 2 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        w = np.full(n_azimuth, 2 * np.pi / n_azimuth)
        return dirs, w
    mu, wm = np.polynomial.legendre.leggauss(n_polar)
    phi = 2 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    sin_t = np.sqrt(1 - MU**2)
    dirs = np.stack([sin_t * np.cos(PHI), sin_t * np.sin(PHI), MU], axis=-1).reshape(-1, 3)
    w = (wm[:, None] * np.full(n_azimuth, 2 * np.pi / n_azimuth)[None, :]).reshape(-1)
    return dirs, w


def _shell_integrals(b, R: float, M: int, n: int, center, weighted: bool, n_radial: int = 4) -> np.ndarray:
    """Integrals of the layer density over the M equal shells of ``B_{2R} \\ B_R``."""
    dirs, wa = _sphere_rule(n)
    g, wg = np.polynomial.legendre.leggauss(n_radial)
    edges = R + R * np.arange(M + 1) / M
    lo, hi = edges[:-1], edges[1:]
    rr = 0.5 * (hi + lo)[:, None] + 0.5 * (hi - lo)[:, None] * g[None, :]  # (M, nr)
    wr = 0.5 * (hi - lo)[:, None] * wg[None, :] * rr ** (n - 1)
    out = np.empty(M)
    c = np.asarray(center, dtype=float)
    chunk = max(1, 2_000_000 // (n_radial * len(wa)))
    for i0 in range(0, M, chunk):
        r_blk = rr[i0 : i0 + chunk]
        pts = c + r_blk[..., None, None] * dirs[None, None, :, :]
        mag = np.linalg.norm(np.asarray(b(pts), dtype=float), axis=-1)
        if weighted:
            dens = mag**2 * np.log1p(R * mag)
        else:
            dens = mag**n
        out[i0 : i0 + chunk] = np.einsum("mra,a,mr->m", dens, wa, wr[i0 : i0 + chunk])
    return out


def layer_split(
    b,
    R: float,
    eps: float,
    n: int | None = None,
    center=None,
    M_max: int = 2**15,
    margin: float = 1e-4,
) -> LayerSplit:
    """Find a thin spherical layer of ``B_{2R} \\ B_R`` carrying a small drift norm.

    The annulus is cut into ``M`` shells of thickness ``R/M`` (``M`` the smallest power
    of two for which the pigeonhole bound guarantees a good layer); layers
    ``K = {r - R/M < |x| < r + R/M}`` centred at the interior shell interfaces are then
    scanned in increasing ``r``.  For ``n >= 3`` the layer norm is ``||b||_{n,K}``; for
    ``n = 2`` it is ``||b ln^{1/2}(1 + R|b|)||_{2,K}``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if n is None:
        n = getattr(b, "n", None)
        if n is None:
            raise ValueError("dimension n is required")
    center = tuple(np.zeros(n)) if center is None else tuple(float(c) for c in center)
    weighted = n == 2
    p = 2 if weighted else n

    probe = _shell_integrals(b, R, 256, n, center, weighted)
    total = float(probe.sum()) ** (1 / p)
    if total == 0.0:
        return LayerSplit(1, 0.5, 1.5 * R, 0.5 * R, 2.5 * R, 0.0, 0.0, center, weighted)

    target = eps * (1 - margin)
    M = 2
    while total * (2 / (M - 1)) ** (1 / p) > target:
        M *= 2
        if M > M_max:
            raise ValueError("drift too singular for layer split")
    shells = _shell_integrals(b, R, M, n, center, weighted)
    total = float(shells.sum()) ** (1 / p)
    layers = shells[:-1] + shells[1:]  # layer j (centred at interface j+1)
    ok = np.flatnonzero(layers ** (1 / p) <= target)
    if ok.size == 0:
        raise ValueError("drift too singular for layer split")
    j = int(ok[0])
    r = R + (j + 1) * R / M
    delta = 1 / (2 * M)
    return LayerSplit(
        M,
        delta,
        r,
        r - 2 * delta * R,
        r + 2 * delta * R,
        float(layers[j]) ** (1 / p),
        total,
        center,
        weighted,
    )
