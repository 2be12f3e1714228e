"""Coefficient fields: uniformly elliptic tensors and drift fields.

Fields are described by plain data (a kind plus parameters) so they can be
serialized and rebuilt; evaluation dispatches on the kind.  Arrays of points
have shape ``(..., n)``; tensors evaluate to ``(..., n, n)``, drifts to ``(..., n)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .geometry import Grid

__all__ = [
    "EllipticTensor",
    "DriftFamily",
    "DriftField",
    "DivergenceClass",
    "make_tensor",
    "make_drift",
    "validate_ellipticity",
    "validate_divergence",
    "EllipticityReport",
    "DivergenceReport",
    "tensor_from_dict",
    "drift_from_dict",
]


class DivergenceClass:
    ZERO = "zero"
    NONPOSITIVE = "nonpositive"
    NONPOSITIVE_SINGULAR = "nonpositive-with-singular-part"
    UNCONSTRAINED = "unconstrained"


# --------------------------------------------------------------------------
# elliptic tensors


def _rotation(n: int, angle, axis=None):
    c, s = np.cos(angle), np.sin(angle)
    shape = np.shape(angle)
    if n == 2:
        Q = np.empty(shape + (2, 2))
        Q[..., 0, 0], Q[..., 0, 1] = c, -s
        Q[..., 1, 0], Q[..., 1, 1] = s, c
        return Q
    k = np.asarray(axis if axis is not None else (0.0, 0.0, 1.0), dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    I = np.eye(3)
    c = np.asarray(c)[..., None, None]
    s = np.asarray(s)[..., None, None]
    return I + s * K + (1 - c) * (K @ K)


@dataclass(frozen=True)
class EllipticTensor:
    """Symmetric tensor field ``a_ij(x)`` (optionally times a scalar ``m(t)``) with constant ``nu``."""

    kind: str
    nu: float
    n: int
    params: dict = field(default_factory=dict)

    def _time_factor(self, t):
        amp = self.params.get("time_amp", 0.0)
        if t is None or amp == 0.0:
            return 1.0
        return 1.0 + amp * math.sin(2 * math.pi * self.params.get("time_freq", 1.0) * t)

    def diagonal_entries(self, x, t=None) -> np.ndarray | None:
        """Diagonal of the tensor when it is diagonal, else None."""
        x = np.asarray(x, dtype=float) * self.params.get("x_scale", 1.0)
        if self.kind == "identity":
            return np.ones(x.shape) * self._time_factor(t)
        if self.kind == "diagonal":
            base = np.broadcast_to(np.asarray(self.params.get("base", 1.0), dtype=float), (self.n,))
            amp = np.broadcast_to(np.asarray(self.params.get("amp", 0.0), dtype=float), (self.n,))
            wv = np.asarray(self.params.get("wavevector", np.zeros(self.n)), dtype=float)
            phase = self.params.get("phase", 0.0)
            s = np.sin(2 * np.pi * (x @ wv) + phase)[..., None]
            return base * (1 + amp * s) * self._time_factor(t)
        return None

    def __call__(self, x, t=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.diagonal_entries(x, t)
        if d is not None:
            out = np.zeros(x.shape + (self.n,))
            idx = np.arange(self.n)
            out[..., idx, idx] = d
            return out
        x = x * self.params.get("x_scale", 1.0)
        if self.kind == "rotation-mixed":
            lam = np.asarray(self.params["eigenvalues"], dtype=float)
            angle = self.params.get("angle", 0.0) + x @ np.asarray(
                self.params.get("angle_gradient", np.zeros(self.n)), dtype=float
            )
            Q = _rotation(self.n, angle, self.params.get("axis"))
            return (Q * lam) @ np.swapaxes(Q, -1, -2) * self._time_factor(t)
        raise ValueError(f"unknown tensor kind {self.kind!r}")

    def eigen_bounds(self) -> tuple[float, float]:
        """Analytic lower/upper eigenvalue bounds over all x (and t)."""
        ta = abs(self.params.get("time_amp", 0.0))
        tlo, thi = 1 - ta, 1 + ta
        if self.kind == "identity":
            return tlo, thi
        if self.kind == "diagonal":
            base = np.broadcast_to(np.asarray(self.params.get("base", 1.0), dtype=float), (self.n,))
            amp = np.abs(np.broadcast_to(np.asarray(self.params.get("amp", 0.0), dtype=float), (self.n,)))
            if not np.any(self.params.get("wavevector", np.zeros(self.n))):
                s = math.sin(self.params.get("phase", 0.0))
                vals = base * (1 + np.broadcast_to(np.asarray(self.params.get("amp", 0.0)), (self.n,)) * s)
                return float(vals.min()) * tlo, float(vals.max()) * thi
            return float((base * (1 - amp)).min()) * tlo, float((base * (1 + amp)).max()) * thi
        if self.kind == "rotation-mixed":
            lam = np.asarray(self.params["eigenvalues"], dtype=float)
            return float(lam.min()) * tlo, float(lam.max()) * thi
        raise ValueError(f"unknown tensor kind {self.kind!r}")

    def scaled(self, factor: float) -> "EllipticTensor":
        """The tensor ``a(factor * x)``."""
        params = dict(self.params, x_scale=self.params.get("x_scale", 1.0) * factor)
        return EllipticTensor(self.kind, self.nu, self.n, params)

    @property
    def is_diagonal(self) -> bool:
        return self.kind in ("identity", "diagonal")

    @property
    def is_constant_in_space(self) -> bool:
        if self.kind == "identity":
            return True
        if self.kind == "diagonal":
            return not np.any(self.params.get("wavevector", 0.0)) or not np.any(self.params.get("amp", 0.0))
        return not np.any(self.params.get("angle_gradient", 0.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "nu": self.nu, "n": self.n, "params": _plain(self.params)}


def tensor_from_dict(doc: dict | str) -> EllipticTensor:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return make_tensor(doc["kind"], doc["nu"], doc["n"], **doc.get("params", {}))


def make_tensor(kind: str, nu: float, n: int, check_samples: int = 4096, **params) -> EllipticTensor:
    """Build an elliptic tensor and certify ``nu |xi|^2 <= a xi.xi <= |xi|^2 / nu``.

    ``kind`` is ``identity``, ``diagonal`` (``base``, ``amp``, ``wavevector``, ``phase``:
    ``a_kk = base_k (1 + amp_k sin(2 pi w.x + phase))``) or ``rotation-mixed``
    (``eigenvalues``, ``angle``, ``angle_gradient``, ``axis``).
    """
    if not 0 < nu <= 1:
        raise ValueError(f"nu must lie in ]0, 1], got {nu}")
    if n not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    a = EllipticTensor(kind, float(nu), int(n), dict(params))
    a(np.zeros(n))  # unknown kinds fail here
    rep = validate_ellipticity(a, check_samples)
    lo, hi = a.eigen_bounds()
    lo, hi = min(lo, rep.min_quotient), max(hi, rep.max_quotient)
    tol = 1e-12
    if lo < nu - tol or hi > 1 / nu + tol:
        raise ValueError(f"ellipticity violated: eigenvalues in [{lo:.6g}, {hi:.6g}] not within [{nu:.6g}, {1 / nu:.6g}]")
    return a


@dataclass(frozen=True)
class EllipticityReport:
    nu: float
    min_quotient: float
    max_quotient: float
    sampled_min: float
    sampled_max: float
    samples: int
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def validate_ellipticity(a: EllipticTensor, samples: int = 1024, box: float = 2.0, seed: int = 0) -> EllipticityReport:
    """Extreme Rayleigh quotients of ``a`` over sampled points.

    ``min_quotient``/``max_quotient`` come from the eigenvalues at the sampled points (the
    exact extremes over directions); ``sampled_*`` from random unit directions.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = a.n
    pts = rng.uniform(-box, box, size=(samples, n))
    side = max(2, int(round(samples ** (1 / n))))
    lattice = np.stack(np.meshgrid(*[np.linspace(-box, box, side)] * n, indexing="ij"), -1).reshape(-1, n)
    pts = np.concatenate([pts, lattice])
    ts = rng.uniform(-1, 1, size=len(pts)) if a.params.get("time_amp", 0.0) else [None]
    mins, maxs, smin, smax = [], [], [], []
    for t in np.unique(ts) if ts[0] is not None else ts:
        A = a(pts, t)
        ev = np.linalg.eigvalsh(A)
        mins.append(ev[:, 0].min())
        maxs.append(ev[:, -1].max())
        xi = rng.normal(size=(len(pts), n))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        rq = np.einsum("pi,pij,pj->p", xi, A, xi)
        smin.append(rq.min())
        smax.append(rq.max())
        if len(mins) > 16:
            break
    lo, hi = float(min(mins)), float(max(maxs))
    tol = 1e-12
    return EllipticityReport(
        a.nu, lo, hi, float(min(smin)), float(max(smax)), len(pts), lo >= a.nu - tol and hi <= 1 / a.nu + tol
    )


# --------------------------------------------------------------------------
# drift fields


@dataclass(frozen=True)
class DriftFamily:
    """Plain description of a drift: ``kind`` in {constant, stream2d, potential3d,
    radial, axisymmetric, moving_frame} plus parameters."""

    kind: str
    params: dict = field(default_factory=dict)


def _safe_ratio(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


_DIV_TOL_CONST = {
    "constant": 1e-9,
    "stream2d": 1.0,
    "potential3d": 1.0,
    "radial": 1.0,
    "axisymmetric": 1.0,
    "moving_frame": 1.0,
    "scaled": 1.0,
    "planar_slice": 1.0,
}


@dataclass(frozen=True)
class DriftField:
    """Vector field ``b(x)`` or ``b(x; t)`` with declared divergence class.

    ``singular`` describes the singular support: ``None``, ``{"kind": "point",
    "center": c}`` or ``{"kind": "line", "point": p, "direction": d}``.
    """

    family: DriftFamily
    n: int
    divergence_class: str
    singular: dict | None = None

    @property
    def kind(self) -> str:
        return self.family.kind

    @property
    def params(self) -> dict:
        return self.family.params

    @property
    def time_dependent(self) -> bool:
        if self.kind == "moving_frame":
            return bool(np.any(self.params.get("velocity", 0.0))) or self._base().time_dependent
        if self.kind in ("scaled", "planar_slice"):
            return self._base().time_dependent
        return False

    @property
    def divergence_tol_const(self) -> float:
        return _DIV_TOL_CONST[self.kind]

    def _base(self) -> "DriftField":
        return drift_from_dict(self.params["base"])

    def singular_set(self, t: float | None = None) -> dict | None:
        """Singular support in the field's own coordinates at time ``t``."""
        if self.kind == "planar_slice":
            base = self._base().singular_set(t)
            if base is None:
                return None
            if base["kind"] == "line":
                return {"kind": "point", "center": tuple(base["point"][:2])}
            return {"kind": "point", "center": tuple(base["center"][:2])}
        if self.kind == "scaled":
            base = self._base().singular_set(t)
            if base is None:
                return None
            s = self.params["factor"]
            key = "center" if base["kind"] == "point" else "point"
            return dict(base, **{key: tuple(float(v) for v in np.asarray(base[key]) / s)})
        if self.kind == "moving_frame":
            base = self._base().singular_set(t)
            if base is None:
                return None
            shift = np.asarray(self.params["offset"], dtype=float) + np.asarray(self.params["velocity"]) * (t or 0.0)
            key = "center" if base["kind"] == "point" else "point"
            return dict(base, **{key: tuple(float(v) for v in np.asarray(base[key]) + shift)})
        return self.singular

    def singular_distance(self, x, t: float | None = None) -> np.ndarray:
        """Distance from points to the singular support (inf when there is none)."""
        x = np.asarray(x, dtype=float)
        sing = self.singular_set(t)
        if sing is None:
            return np.full(x.shape[:-1], np.inf)
        if sing["kind"] == "point":
            return np.linalg.norm(x - np.asarray(sing["center"]), axis=-1)
        p = np.asarray(sing["point"], dtype=float)
        d = np.asarray(sing["direction"], dtype=float)
        d = d / np.linalg.norm(d)
        v = x - p
        return np.linalg.norm(v - (v @ d)[..., None] * d, axis=-1)

    def raw(self, x, t=None) -> np.ndarray:
        """Uncapped values (zero exactly on the singular set)."""
        return self(x, t)

    def __call__(self, x, t=None, cap_h: float | None = None) -> np.ndarray:
        """Evaluate the drift; off the singular set only.

        With ``cap_h`` the magnitude is capped at ``1/cap_h`` at points within
        ``cap_h`` of the singular support (value 0 on the support itself).
        """
        x = np.asarray(x, dtype=float)
        p = self.params
        k = self.kind
        if k == "scaled":
            s = p["factor"]
            return s * self._base()(s * x, t, None if cap_h is None else s * cap_h)
        if k == "planar_slice":
            z = np.zeros(x.shape[:-1] + (1,))
            return self._base()(np.concatenate([x, z], axis=-1), t, cap_h)[..., :2]
        if k == "moving_frame":
            off = np.asarray(p["offset"], dtype=float)
            vel = np.asarray(p["velocity"], dtype=float)
            return self._base()(x - off - vel * (0.0 if t is None else t), t, cap_h) + vel
        b = self._eval(x)
        if cap_h is not None and self.singular is not None:
            near = self.singular_distance(x) <= cap_h * (1 + 1e-12)
            if np.any(near):
                mag = np.linalg.norm(b[near], axis=-1)
                scale = np.minimum(1.0, _safe_ratio(1.0 / cap_h, mag))
                b[near] *= scale[:, None]
        return b

    def _eval(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        k = self.kind
        if k == "constant":
            return np.broadcast_to(np.asarray(p["vector"], dtype=float), x.shape).copy()
        if k == "stream2d":
            A = p.get("amp", 1.0)
            kk = np.asarray(p.get("k", (1.0, 1.0)), dtype=float)
            ph = np.asarray(p.get("phase", (0.0, 0.0)), dtype=float)
            s1, c1 = np.sin(kk[0] * x[..., 0] + ph[0]), np.cos(kk[0] * x[..., 0] + ph[0])
            s2, c2 = np.sin(kk[1] * x[..., 1] + ph[1]), np.cos(kk[1] * x[..., 1] + ph[1])
            out = np.stack([A * kk[1] * s1 * c2, -A * kk[0] * c1 * s2], axis=-1)
            sink = p.get("sink", 0.0)
            if sink:
                out = out - sink * (x - np.asarray(p.get("sink_center", (0.0, 0.0))))
            return out
        if k == "potential3d":
            A, B, C = p.get("abc", (1.0, 1.0, 1.0))
            kw = p.get("k", 1.0)
            X, Y, Z = kw * x[..., 0], kw * x[..., 1], kw * x[..., 2]
            out = np.stack(
                [A * np.sin(Z) + C * np.cos(Y), B * np.sin(X) + A * np.cos(Z), C * np.sin(Y) + B * np.cos(X)], axis=-1
            ) * p.get("amp", 1.0)
            sink = p.get("sink", 0.0)
            if sink:
                out = out - sink * (x - np.asarray(p.get("sink_center", (0.0, 0.0, 0.0))))
            return out
        if k == "radial":
            c = np.asarray(p.get("center", np.zeros(self.n)), dtype=float)
            v = x - c
            r2 = np.sum(v * v, axis=-1)
            return p["kappa"] * v * _safe_ratio(1.0, r2)[..., None]
        if k == "axisymmetric":
            eps = p["eps"]
            xp = x[..., :2]
            r2 = np.sum(xp * xp, axis=-1)
            out = np.zeros(x.shape)
            out[..., :2] = eps * 2 * xp * _safe_ratio(1.0, r2)[..., None]
            return out + _background(p.get("background", {"kind": "zero"}), x)
        raise ValueError(f"unknown drift kind {k!r}")

    def scaled(self, factor: float) -> "DriftField":
        """The field ``factor * b(factor * x)`` (keeps the scale-invariant quantities)."""
        return make_drift(DriftFamily("scaled", {"base": self.to_dict(), "factor": float(factor)}))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "params": _plain(self.params)}


def _background(v: dict, x: np.ndarray) -> np.ndarray:
    """Background velocity: ``zero``, ``rigid`` (``omega``), ``lamb_oseen`` (``circulation``,
    ``width``), ``axial_shear`` (``speed``, ``width``) or ``linear`` (``matrix``, ``v = M x``)."""
    kind = v.get("kind", "zero")
    out = np.zeros(x.shape)
    if kind == "zero":
        return out
    x1, x2 = x[..., 0], x[..., 1]
    if kind == "rigid":
        w = v.get("omega", 1.0)
        out[..., 0], out[..., 1] = -w * x2, w * x1
        return out
    if kind == "lamb_oseen":
        G, s = v.get("circulation", 1.0), v.get("width", 1.0)
        r2 = x1 * x1 + x2 * x2
        # v_theta / rho = G (1 - exp(-r^2/s^2)) / r^2, finite at the axis
        f = np.where(r2 > 1e-300, G * -np.expm1(-r2 / s**2) / np.where(r2 > 0, r2, 1.0), G / s**2)
        out[..., 0], out[..., 1] = -f * x2, f * x1
        return out
    if kind == "linear":
        return x @ np.asarray(v["matrix"], dtype=float).T
    if kind == "axial_shear":
        U, s = v.get("speed", 1.0), v.get("width", 1.0)
        out[..., 2] = U * np.exp(-(x1 * x1 + x2 * x2) / s**2)
        return out
    raise ValueError(f"unknown background velocity kind {kind!r}")


def make_drift(family: DriftFamily | dict, n: int | None = None) -> DriftField:
    """Build a drift field and set its divergence class and singular support.

    ``constant`` (``vector``), ``stream2d`` (``amp``, ``k``, ``phase``, optional ``sink >= 0``),
    ``potential3d`` (ABC ``curl`` part ``abc``, ``k``, ``amp``; optional ``sink >= 0`` adding the
    superharmonic gradient ``-sink (x - c)``), ``radial`` (``kappa``, ``center``),
    ``axisymmetric`` (``eps``, ``background``), ``moving_frame`` (``base``, ``offset``,
    ``velocity``: ``b(x - offset - velocity t) + velocity``) and ``scaled`` (``base``,
    ``factor``: ``factor b(factor x)``) and ``planar_slice`` (``base``: the in-plane part of a
    three-dimensional field at ``x_3 = 0``, which drives ``x_3``-independent solutions).
    """
    if isinstance(family, dict):
        family = DriftFamily(family["kind"], dict(family.get("params", {})))
    k, p = family.kind, family.params
    singular = None
    if k == "constant":
        vec = np.asarray(p["vector"], dtype=float)
        n = vec.size
        cls = DivergenceClass.ZERO
    elif k == "stream2d":
        n = 2
        cls = DivergenceClass.NONPOSITIVE if p.get("sink", 0.0) > 0 else DivergenceClass.ZERO
        if p.get("sink", 0.0) < 0:
            raise ValueError("sink strength must be nonnegative")
    elif k == "potential3d":
        n = 3
        cls = DivergenceClass.NONPOSITIVE if p.get("sink", 0.0) > 0 else DivergenceClass.ZERO
        if p.get("sink", 0.0) < 0:
            raise ValueError("sink strength must be nonnegative")
    elif k == "radial":
        if n is None:
            n = len(p.get("center", ())) or None
        if n is None:
            raise ValueError("radial drift needs a dimension or a centre")
        kappa = float(p["kappa"])
        center = tuple(float(c) for c in p.get("center", np.zeros(n)))
        p = dict(p, center=center)
        singular = {"kind": "point", "center": center}
        if kappa == 0:
            cls, singular = DivergenceClass.ZERO, None
        elif kappa > 0:
            cls = DivergenceClass.UNCONSTRAINED
        elif n == 2:
            cls = DivergenceClass.NONPOSITIVE_SINGULAR
        else:
            cls = DivergenceClass.NONPOSITIVE
    elif k == "axisymmetric":
        n = 3
        eps = p["eps"]
        if eps not in (-1, 1, -1.0, 1.0):
            raise ValueError("axisymmetric drift needs eps = +1 or -1")
        singular = {"kind": "line", "point": (0.0, 0.0, 0.0), "direction": (0.0, 0.0, 1.0)}
        cls = DivergenceClass.NONPOSITIVE_SINGULAR if eps < 0 else DivergenceClass.UNCONSTRAINED
    elif k in ("moving_frame", "scaled", "planar_slice"):
        base = p["base"] if isinstance(p["base"], DriftField) else make_drift(p["base"])
        n = base.n
        if k == "planar_slice":
            if base.n != 3:
                raise ValueError("planar slice needs a three-dimensional base field")
            n = 2
        p = dict(p, base=base.to_dict())
        if k == "scaled" and not p.get("factor", 0) > 0:
            raise ValueError("scale factor must be positive")
        cls = base.divergence_class
        singular = base.singular_set(None)
        if k == "planar_slice" and singular is not None:
            sing2 = singular.get("point", singular.get("center"))
            singular = {"kind": "point", "center": tuple(sing2[:2])}
    else:
        raise ValueError(f"unknown drift kind {k!r}")
    return DriftField(DriftFamily(k, dict(p)), int(n), cls, singular)


def drift_from_dict(doc: dict | str) -> DriftField:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return make_drift(DriftFamily(doc["kind"], dict(doc.get("params", {}))), doc.get("n"))


def radial_divergence(kappa: float, n: int, r) -> np.ndarray:
    """Pointwise divergence of ``kappa x/|x|^2`` off the origin."""
    return kappa * (n - 2) / np.asarray(r, dtype=float) ** 2


# --------------------------------------------------------------------------
# divergence certification


@dataclass(frozen=True)
class DivergenceReport:
    declared: str
    pairings: np.ndarray
    centers: np.ndarray
    tol: float
    max_pairing: float
    min_pairing: float
    class_certified: bool
    structure_condition: bool

    def to_dict(self) -> dict:
        return {
            "declared": self.declared,
            "tests": int(self.pairings.size),
            "tol": self.tol,
            "max_pairing": self.max_pairing,
            "min_pairing": self.min_pairing,
            "class_certified": self.class_certified,
            "structure_condition": self.structure_condition,
        }


def _box_line_distance(lo, hi, sing: dict) -> np.ndarray:
    """Distance between boxes ``[lo, hi]`` and the singular support (point or line)."""
    if sing["kind"] == "point":
        c = np.asarray(sing["center"], dtype=float)
        d = np.maximum(np.maximum(lo - c, 0), c - hi)
        return np.linalg.norm(d, axis=-1)
    # line parallel to a coordinate axis
    dvec = np.asarray(sing["direction"], dtype=float)
    ax = int(np.argmax(np.abs(dvec)))
    c = np.asarray(sing["point"], dtype=float)
    keep = [i for i in range(lo.shape[-1]) if i != ax]
    d = np.maximum(np.maximum(lo[..., keep] - c[keep], 0), c[keep] - hi[..., keep])
    return np.linalg.norm(d, axis=-1)


def validate_divergence(
    b: DriftField,
    grid: Grid,
    width: int = 2,
    stride: int | None = None,
    t: float | None = None,
    avoid_singular: bool = False,
    tol: float | None = None,
) -> DivergenceReport:
    """Certify the divergence class by weak pairings with tensor-product hat functions.

    Each test function ``eta`` is a hat of half-width ``width * h`` centred at a grid
    node whose support lies inside the region.  The pairing ``-sum b . grad(eta) h^n``
    (cell-centre quadrature, where ``grad(eta)`` is exact) is normalized by
    ``int eta = (width h)^n``.  The class is certified when all normalized pairings
    are ``<= tol`` (nonpositive classes) or ``|.| <= tol`` (zero), ``tol = C h``.
    """
    h = grid.h
    n = grid.n
    stride = stride or width
    w = width * h
    region = grid.region
    c0 = np.asarray(region.center)
    centers = grid.coords(grid.inside)
    lattice_idx = np.argwhere(grid.inside)
    keep = np.all(lattice_idx % stride == 0, axis=1)
    centers = centers[keep]
    keep = np.linalg.norm(centers - c0, axis=1) + math.sqrt(n) * w < region.radius
    centers = centers[keep]
    sing = b.singular_set(t)
    if sing is not None and centers.size:
        dist = _box_line_distance(centers - w, centers + w, sing)
        near = dist < 2 * h
        if np.any(near):
            if not avoid_singular:
                raise ValueError("test family intersects singular set")
            centers = centers[~near]
    if centers.size == 0:
        raise ValueError("no admissible test functions in region")

    offs = (np.arange(-width, width) + 0.5) * h
    Q = np.stack(np.meshgrid(*[offs] * n, indexing="ij"), -1).reshape(-1, n)  # local quad points
    fac = 1 - np.abs(Q) / w
    dfac = -np.sign(Q) / w
    grad = np.empty_like(Q)
    for k in range(n):
        g = dfac[:, k].copy()
        for l in range(n):
            if l != k:
                g = g * fac[:, l]
        grad[:, k] = g
    pair = np.empty(len(centers))
    chunk = max(1, 400_000 // len(Q))
    for i0 in range(0, len(centers), chunk):
        c = centers[i0 : i0 + chunk]
        pts = c[:, None, :] + Q[None, :, :]
        bv = b(pts, t)
        pair[i0 : i0 + chunk] = -np.einsum("cqk,qk->c", bv, grad) * h**n / w**n
    if tol is None:
        tol = b.divergence_tol_const * h
    mx, mn = float(pair.max()), float(pair.min())
    structure = mx <= tol
    if b.divergence_class == DivergenceClass.ZERO:
        certified = max(abs(mx), abs(mn)) <= tol
    elif b.divergence_class in (DivergenceClass.NONPOSITIVE, DivergenceClass.NONPOSITIVE_SINGULAR):
        certified = structure
    else:
        certified = True
    return DivergenceReport(b.divergence_class, pair, centers, float(tol), mx, mn, bool(certified), bool(structure))


def _plain(obj: Any):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
