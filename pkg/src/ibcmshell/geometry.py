"""Surface maps, planar curves, composed maps, and differential-geometry frames.

All evaluators are vectorized over point arrays and return derivative bundles
("jets") up to third order. Composed maps expand the chain rule analytically;
finite differences appear only in the verification helper at the bottom.
"""

from dataclasses import dataclass, field

import numpy as np

from .bspline import KnotVector, TensorSplineSpace, gauss_rule_01, l2_project_edge
from .errors import GeometryFailure, InvalidInput, SingularGeometry

__all__ = [
    "MapJet",
    "PlaneMap",
    "CylinderMap",
    "SplineSurfaceMap",
    "ComposedMap",
    "SegmentCurve",
    "CircleCurve",
    "SplineCurve2D",
    "fit_curve",
    "offset_curve",
    "RuledPatchMap",
    "compose_jets",
    "FrameBundle",
    "surface_frame",
    "CurveFrameBundle",
    "curve_frames",
    "fd_jet",
]


@dataclass
class MapJet:
    """Derivatives of a map R^2 -> R^m at a batch of points.

    Shapes: x (N, m); d1 (N, 2, m); d2 (N, 2, 2, m); d3 (N, 2, 2, 2, m).
    Derivative axes are symmetric. Higher entries are None when not requested.
    """

    x: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None


class SurfaceMap:
    """Base class; subclasses provide ``jet(xi1, xi2, order)``."""

    #: parametric rectangle ((xi1b, xi1t), (xi2b, xi2t))
    bounds = ((0.0, 1.0), (0.0, 1.0))
    #: True when the jet is point-independent (flat plane): enables caching
    constant_jet = False

    def jet(self, xi1, xi2, order: int) -> MapJet:
        raise NotImplementedError


class PlaneMap(SurfaceMap):
    """Flat immersion (xi1, xi2) -> (xi1, xi2, 0)."""

    constant_jet = True

    def __init__(self, bounds=((0.0, 1.0), (0.0, 1.0))):
        self.bounds = bounds

    def jet(self, xi1, xi2, order=1):
        xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))
        xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
        n = xi1.size
        x = np.stack([xi1, xi2, np.zeros(n)], axis=-1)
        jet = MapJet(x)
        if order >= 1:
            d1 = np.zeros((n, 2, 3))
            d1[:, 0, 0] = 1.0
            d1[:, 1, 1] = 1.0
            jet.d1 = d1
        if order >= 2:
            jet.d2 = np.zeros((n, 2, 2, 3))
        if order >= 3:
            jet.d3 = np.zeros((n, 2, 2, 2, 3))
        return jet


class CylinderMap(SurfaceMap):
    """Cylinder of radius R with axis along the rotated e3 direction.

    Profile x = Rot * (-R cos(s + phase), -R sin(s + phase), xi2) with
    s = xi1 / R for arc-length parameterization, s = xi1 otherwise.
    """

    def __init__(self, radius, xi1_range, xi2_range, arclength=False, phase=0.0,
                 rotation=None):
        self.R = float(radius)
        self.bounds = (tuple(xi1_range), tuple(xi2_range))
        self.k = 1.0 / self.R if arclength else 1.0
        self.phase = float(phase)
        self.rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)

    def jet(self, xi1, xi2, order=1):
        xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))
        xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
        R, k = self.R, self.k
        s = k * xi1 + self.phase
        c, sn = np.cos(s), np.sin(s)
        n = xi1.size
        z = np.zeros(n)

        def rot(v):  # v: (n, 3) in profile coordinates
            return v @ self.rot.T

        x = rot(np.stack([-R * c, -R * sn, xi2], axis=-1))
        jet = MapJet(x)
        if order >= 1:
            d1 = np.zeros((n, 2, 3))
            d1[:, 0, :] = rot(np.stack([R * k * sn, -R * k * c, z], axis=-1))
            d1[:, 1, :] = rot(np.stack([z, z, np.ones(n)], axis=-1))
            jet.d1 = d1
        if order >= 2:
            d2 = np.zeros((n, 2, 2, 3))
            d2[:, 0, 0, :] = rot(np.stack([R * k**2 * c, R * k**2 * sn, z], axis=-1))
            jet.d2 = d2
        if order >= 3:
            d3 = np.zeros((n, 2, 2, 2, 3))
            d3[:, 0, 0, 0, :] = rot(np.stack([-R * k**3 * sn, R * k**3 * c, z], axis=-1))
            jet.d3 = d3
        return jet


class SplineSurfaceMap(SurfaceMap):
    """Surface given by a tensor spline space and control points (n1*n2, 3)."""

    def __init__(self, space: TensorSplineSpace, control: np.ndarray):
        self.space = space
        self.control = np.asarray(control, dtype=float)
        if self.control.shape != (space.kv1.n * space.kv2.n, 3):
            raise InvalidInput("control array must be (n1*n2, 3), i fastest")
        self.bounds = (space.kv1.domain, space.kv2.domain)

    def jet(self, xi1, xi2, order=1):
        xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))
        xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
        idx, tabs = self.space.eval_scalar(xi1, xi2, order)
        ctrl = self.control[idx]  # (N, nloc, 3)

        def comb(d1, d2):
            return np.einsum("nk,nki->ni", tabs[(d1, d2)], ctrl)

        jet = MapJet(comb(0, 0))
        n = xi1.size
        if order >= 1:
            jet.d1 = np.stack([comb(1, 0), comb(0, 1)], axis=1)
        if order >= 2:
            d2 = np.empty((n, 2, 2, 3))
            d2[:, 0, 0] = comb(2, 0)
            d2[:, 0, 1] = d2[:, 1, 0] = comb(1, 1)
            d2[:, 1, 1] = comb(0, 2)
            jet.d2 = d2
        if order >= 3:
            d3 = np.empty((n, 2, 2, 2, 3))
            d300, d210 = comb(3, 0), comb(2, 1)
            d120, d030 = comb(1, 2), comb(0, 3)
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        m = i + j + k
                        d3[:, i, j, k] = (d300, d210, d120, d030)[m]
            jet.d3 = d3
        return jet


# ---------------------------------------------------------------------------
# planar curves (eta -> xi space) and planar maps (boundary layers)
# ---------------------------------------------------------------------------


class PlanarCurve:
    """Base class for curves in the parametric plane; provides jets in t."""

    t0 = 0.0
    t1 = 1.0

    def jet(self, t, order: int) -> MapJet:
        raise NotImplementedError

    def point(self, t):
        return self.jet(t, 0).x

    def velocity(self, t):
        return self.jet(t, 1).d1[:, 0, :]


class SegmentCurve(PlanarCurve):
    """Straight segment traced affinely over [t0, t1]."""

    def __init__(self, p0, p1, t0=0.0, t1=1.0):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.t0, self.t1 = float(t0), float(t1)

    def jet(self, t, order=1):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = (t - self.t0) / (self.t1 - self.t0)
        x = self.p0[None, :] + s[:, None] * (self.p1 - self.p0)[None, :]
        jet = MapJet(x)
        n = t.size
        if order >= 1:
            d1 = np.zeros((n, 1, 2))
            d1[:, 0, :] = (self.p1 - self.p0) / (self.t1 - self.t0)
            jet.d1 = d1
        if order >= 2:
            jet.d2 = np.zeros((n, 1, 1, 2))
        if order >= 3:
            jet.d3 = np.zeros((n, 1, 1, 1, 2))
        return jet


class CircleCurve(PlanarCurve):
    """Circular arc c + R (cos(a + b t), sin(a + b t)); full circle by default.

    With b > 0 the curve runs counter-clockwise, leaving the disk interior on
    its left.
    """

    def __init__(self, center, radius, t0=0.0, t1=2.0 * np.pi, a=0.0, b=1.0):
        self.c = np.asarray(center, dtype=float)
        self.R = float(radius)
        self.t0, self.t1 = float(t0), float(t1)
        self.a, self.b = float(a), float(b)

    @property
    def closed(self):
        return abs(abs(self.b * (self.t1 - self.t0)) - 2.0 * np.pi) < 1e-12

    def jet(self, t, order=1):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        R, b = self.R, self.b
        ph = self.a + b * t
        c, s = np.cos(ph), np.sin(ph)
        x = self.c[None, :] + R * np.stack([c, s], axis=-1)
        jet = MapJet(x)
        n = t.size
        if order >= 1:
            jet.d1 = (R * b * np.stack([-s, c], axis=-1))[:, None, :]
        if order >= 2:
            jet.d2 = (-R * b**2 * np.stack([c, s], axis=-1))[:, None, None, :]
        if order >= 3:
            jet.d3 = (R * b**3 * np.stack([s, -c], axis=-1))[:, None, None, None, :]
        return jet


class SplineCurve2D(PlanarCurve):
    """Planar spline curve from a knot vector and control points (n, 2)."""

    def __init__(self, kv: KnotVector, control):
        self.kv = kv
        self.control = np.asarray(control, dtype=float)
        if self.control.shape != (kv.n, 2):
            raise InvalidInput("control array must be (n, 2)")
        self.t0, self.t1 = kv.domain

    def jet(self, t, order=1):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        first, tab = self.kv.eval_basis(t, order)
        p = self.kv.p
        cols = first[:, None] + np.arange(p + 1)[None, :]
        ctrl = self.control[cols]  # (N, p+1, 2)

        def comb(d):
            return np.einsum("nk,nki->ni", tab[:, d, :], ctrl)

        jet = MapJet(comb(0))
        if order >= 1:
            jet.d1 = comb(1)[:, None, :]
        if order >= 2:
            jet.d2 = comb(2)[:, None, None, :]
        if order >= 3:
            jet.d3 = comb(3)[:, None, None, None, :]
        return jet


def fit_curve(fn, kv: KnotVector, check_tol=None, n_check=400) -> SplineCurve2D:
    """L2-fit the callable t -> (N, 2) points onto the spline space of ``kv``.

    When ``check_tol`` is given the max deviation over a dense sample is
    verified and a GeometryFailure raised beyond it.
    """
    cx = l2_project_edge(kv, lambda t: np.asarray(fn(t))[:, 0])
    cy = l2_project_edge(kv, lambda t: np.asarray(fn(t))[:, 1])
    curve = SplineCurve2D(kv, np.stack([cx, cy], axis=-1))
    if check_tol is not None:
        ts = np.linspace(kv.domain[0], kv.domain[1], n_check)
        dev = np.abs(curve.point(ts) - np.asarray(fn(ts))).max()
        if dev > check_tol:
            raise GeometryFailure(f"curve fit residual {dev:.3e} > {check_tol:.3e}")
    return curve


def refit_curve(curve: PlanarCurve, kv: KnotVector, check_tol=None) -> SplineCurve2D:
    return fit_curve(lambda t: curve.point(t), kv, check_tol=check_tol)


def offset_curve(curve: PlanarCurve, delta: float, kv: KnotVector,
                 side: str = "left") -> SplineCurve2D:
    """Spline fit of the parallel curve at distance ``delta``.

    ``side='left'`` offsets along the 90-degree counter-clockwise rotation of
    the velocity. Circle and segment offsets are exact parallel curves of the
    underlying primitive; generic curves are offset point-wise and refit.
    """
    sgn = 1.0 if side == "left" else -1.0

    def pts(t):
        jet = curve.jet(t, 1)
        v = jet.d1[:, 0, :]
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(nv <= 0.0):
            raise SingularGeometry("zero curve velocity while offsetting")
        m = sgn * np.stack([-v[:, 1], v[:, 0]], axis=-1) / nv
        return jet.x + delta * m

    return fit_curve(pts, kv)


class PlanarMap:
    """Base class for maps (eta1, eta2) -> xi-plane with jets up to order 3."""

    bounds = ((0.0, 1.0), (0.0, 1.0))

    def jet(self, e1, e2, order: int) -> MapJet:
        raise NotImplementedError


class RuledPatchMap(PlanarMap):
    """Ruled blend (1-eta2) c0(eta1) + eta2 c1(eta1) between two curves."""

    def __init__(self, c0: PlanarCurve, c1: PlanarCurve):
        if abs(c0.t0 - c1.t0) > 1e-12 or abs(c0.t1 - c1.t1) > 1e-12:
            raise InvalidInput("ruled curves must share the parameter interval")
        self.c0, self.c1 = c0, c1
        self.bounds = ((c0.t0, c0.t1), (0.0, 1.0))

    def jet(self, e1, e2, order=1):
        e1 = np.atleast_1d(np.asarray(e1, dtype=float))
        e2 = np.atleast_1d(np.asarray(e2, dtype=float))
        j0 = self.c0.jet(e1, order)
        j1 = self.c1.jet(e1, order)
        w = e2[:, None]
        jet = MapJet((1.0 - w) * j0.x + w * j1.x)
        n = e1.size
        if order >= 1:
            d1 = np.zeros((n, 2, 2))
            d1[:, 0, :] = (1.0 - w) * j0.d1[:, 0] + w * j1.d1[:, 0]
            d1[:, 1, :] = j1.x - j0.x
            jet.d1 = d1
        if order >= 2:
            d2 = np.zeros((n, 2, 2, 2))
            d2[:, 0, 0] = (1.0 - w) * j0.d2[:, 0, 0] + w * j1.d2[:, 0, 0]
            d2[:, 0, 1] = d2[:, 1, 0] = j1.d1[:, 0] - j0.d1[:, 0]
            jet.d2 = d2
        if order >= 3:
            d3 = np.zeros((n, 2, 2, 2, 2))
            d3[:, 0, 0, 0] = (1.0 - w) * j0.d3[:, 0, 0, 0] + w * j1.d3[:, 0, 0, 0]
            m = j1.d2[:, 0, 0] - j0.d2[:, 0, 0]
            d3[:, 0, 0, 1] = d3[:, 0, 1, 0] = d3[:, 1, 0, 0] = m
            jet.d3 = d3
        return jet


def compose_jets(outer: MapJet, inner: MapJet, order: int) -> MapJet:
    """Chain-rule expansion of x(eta) = F(xi(eta)) up to third order."""
    jet = MapJet(outer.x)
    if order >= 1:
        jet.d1 = np.einsum("nlc,nal->nac", outer.d1, inner.d1)
    if order >= 2:
        jet.d2 = (
            np.einsum("nlmc,nal,nbm->nabc", outer.d2, inner.d1, inner.d1)
            + np.einsum("nlc,nabl->nabc", outer.d1, inner.d2)
        )
    if order >= 3:
        t1 = np.einsum("nlmkc,nal,nbm,ngk->nabgc", outer.d3, inner.d1, inner.d1, inner.d1)
        t2 = (
            np.einsum("nlmc,nabl,ngm->nabgc", outer.d2, inner.d2, inner.d1)
            + np.einsum("nlmc,nagl,nbm->nabgc", outer.d2, inner.d2, inner.d1)
            + np.einsum("nlmc,nbgl,nam->nabgc", outer.d2, inner.d2, inner.d1)
        )
        t3 = np.einsum("nlc,nabgl->nabgc", outer.d1, inner.d3)
        jet.d3 = t1 + t2 + t3
    return jet


class ComposedMap(SurfaceMap):
    """Surface map F(inner(eta)) for boundary layers."""

    def __init__(self, outer: SurfaceMap, inner: PlanarMap):
        self.outer = outer
        self.inner = inner
        self.bounds = inner.bounds

    def jet(self, e1, e2, order=1):
        ij = self.inner.jet(e1, e2, order)
        oj = self.outer.jet(ij.x[:, 0], ij.x[:, 1], order)
        return compose_jets(oj, ij, order)


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


@dataclass
class FrameBundle:
    """Per-point differential-geometry data of a surface map.

    Index conventions (N = number of points, Greek in {0,1}, Cartesian last):
    a[n,al]      covariant basis vectors          (N,2,3)
    a3[n]        unit normal                      (N,3)
    g / ginv     co/contravariant metric          (N,2,2)
    sqa[n]       area measure |a1 x a2|           (N,)
    acon[n,al]   contravariant basis              (N,2,3)
    b / bmix     curvature b_ab and b^a_b         (N,2,2)
    da[n,al,be]  a_{al,be}                        (N,2,2,3)
    da3[n,al]    a_{3,al}                         (N,2,3)
    gam[n,g,a,b] Christoffel a^g . a_{a,b}        (N,2,2,2)

    Third-order extras (present when order=3):
    dda[n,a,b,g]      a_{a,bg}                    (N,2,2,2,3)
    dg[n,a,b,m]       metric derivative           (N,2,2,2)
    dginv[n,a,b,m]                                (N,2,2,2)
    dacon[n,a,m]      a^a_{,m}                    (N,2,2,3)
    db[n,a,b,m]       b_{ab,m}                    (N,2,2,2)
    dgam[n,g,a,b,m]   Christoffel derivative      (N,2,2,2,2)
    """

    a: np.ndarray
    a3: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    sqa: np.ndarray
    acon: np.ndarray
    b: np.ndarray
    bmix: np.ndarray
    da: np.ndarray
    da3: np.ndarray
    gam: np.ndarray
    order: int = 2
    dda: np.ndarray | None = None
    dg: np.ndarray | None = None
    dginv: np.ndarray | None = None
    dacon: np.ndarray | None = None
    db: np.ndarray | None = None
    dgam: np.ndarray | None = None

    def take(self, sl):
        """Sub-bundle on a slice/index of the point axis (views)."""
        kw = {}
        for name in ("a", "a3", "g", "ginv", "sqa", "acon", "b", "bmix",
                     "da", "da3", "gam", "dda", "dg", "dginv", "dacon", "db", "dgam"):
            v = getattr(self, name)
            kw[name] = None if v is None else v[sl]
        kw["order"] = self.order
        return FrameBundle(**kw)


def surface_frame(map_or_jet, pts=None, order: int = 2) -> FrameBundle:
    """Frame bundle from a map (evaluated at ``pts``) or a precomputed jet."""
    if isinstance(map_or_jet, MapJet):
        jet = map_or_jet
    else:
        xi1, xi2 = pts
        jet = map_or_jet.jet(xi1, xi2, order)
    a = jet.d1
    da = jet.d2
    v = np.cross(a[:, 0, :], a[:, 1, :])
    sqa = np.linalg.norm(v, axis=-1)
    scale = np.linalg.norm(a, axis=(1, 2))
    bad = sqa <= 1e-14 * scale**2
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SingularGeometry(f"degenerate metric at point {jet.x[k]}")
    a3 = v / sqa[:, None]
    g = np.einsum("nai,nbi->nab", a, a)
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    ginv = np.empty_like(g)
    ginv[:, 0, 0] = g[:, 1, 1] / det
    ginv[:, 1, 1] = g[:, 0, 0] / det
    ginv[:, 0, 1] = ginv[:, 1, 0] = -g[:, 0, 1] / det
    acon = np.einsum("nab,nbi->nai", ginv, a)
    b = np.einsum("ni,nabi->nab", a3, da)
    bmix = np.einsum("nag,ngb->nab", ginv, b)
    dv = np.stack(
        [np.cross(da[:, 0, m], a[:, 1]) + np.cross(a[:, 0], da[:, 1, m]) for m in range(2)],
        axis=1,
    )  # (N,2,3): v_{,m}
    # a3_{,m} = v_{,m}/|v| - a3 (a3 . v_{,m})/|v|
    da3 = (dv - a3[:, None, :] * np.einsum("ni,nmi->nm", a3, dv)[:, :, None]) / sqa[:, None, None]
    gam = np.einsum("ngi,nabi->ngab", acon, da)
    fb = FrameBundle(a=a, a3=a3, g=g, ginv=ginv, sqa=sqa, acon=acon, b=b,
                     bmix=bmix, da=da, da3=da3, gam=gam, order=order)
    if order >= 3:
        dda = jet.d3
        dg = np.einsum("nami,nbi->nabm", da, a) + np.einsum("nai,nbmi->nabm", a, da)
        dginv = -np.einsum("nac,ncdm,ndb->nabm", ginv, dg, ginv)
        # a^a_{,m} = (a^{av})_{,m} a_v + a^{av} a_{v,m}
        dacon = np.einsum("navm,nvi->nami", dginv, a) + np.einsum(
            "nav,nvmi->nami", ginv, da
        )
        db = np.einsum("nmi,nabi->nabm", da3, da) + np.einsum("ni,nabmi->nabm", a3, dda)
        dgam = np.einsum("ngmi,nabi->ngabm", dacon, da) + np.einsum(
            "ngi,nabmi->ngabm", acon, dda
        )
        fb.dda, fb.dg, fb.dginv, fb.dacon, fb.db, fb.dgam = dda, dg, dginv, dacon, db, dgam
    return fb


@dataclass
class CurveFrameBundle:
    """Frame data along a curve on a surface, per quadrature point.

    t, n are 3-vectors; n lies in the tangent plane and n = sign * (t x a3).
    jac is the physical arc-length rate |dx/ds|. The *_d fields are arc-length
    parameter derivatives d/ds (not yet divided by jac) used by the ersatz
    flux; xi_d holds the parametric velocity of the curve.
    """

    t: np.ndarray
    n: np.ndarray
    jac: np.ndarray
    n_low: np.ndarray
    n_up: np.ndarray
    t_low: np.ndarray
    t_up: np.ndarray
    xi_d: np.ndarray
    n_low_d: np.ndarray | None = None
    t_low_d: np.ndarray | None = None


def curve_frames(fb: FrameBundle, cjet: MapJet, sign: float = 1.0,
                 second_order: bool = False) -> CurveFrameBundle:
    """Curve frame from the surface frame at the curve points and curve jets.

    ``cjet`` is the jet of the parametric curve s -> xi (or eta); derivative
    axes are collapsed (d1[:, 0], d2[:, 0, 0]).
    """
    xi_d = cjet.d1[:, 0, :]
    xp = np.einsum("nli,nl->ni", fb.a, xi_d)
    jac = np.linalg.norm(xp, axis=-1)
    if np.any(jac <= 0.0):
        raise SingularGeometry("zero curve velocity")
    t = xp / jac[:, None]
    n = sign * np.cross(t, fb.a3)
    n_low = np.einsum("ni,nai->na", n, fb.a)
    n_up = np.einsum("ni,nai->na", n, fb.acon)
    t_low = np.einsum("ni,nai->na", t, fb.a)
    t_up = np.einsum("ni,nai->na", t, fb.acon)
    out = CurveFrameBundle(t=t, n=n, jac=jac, n_low=n_low, n_up=n_up,
                           t_low=t_low, t_up=t_up, xi_d=xi_d)
    if second_order:
        xi_dd = cjet.d2[:, 0, 0, :]
        xpp = np.einsum("nlmi,nl,nm->ni", fb.da, xi_d, xi_d) + np.einsum(
            "nli,nl->ni", fb.a, xi_dd
        )
        t_d = (xpp - t * np.einsum("ni,ni->n", t, xpp)[:, None]) / jac[:, None]
        a3_d = np.einsum("nmi,nm->ni", fb.da3, xi_d)
        n_d = sign * (np.cross(t_d, fb.a3) + np.cross(t, a3_d))
        a_d = np.einsum("nlmi,nm->nli", fb.da, xi_d)  # d/ds of a_l
        out.n_low_d = np.einsum("ni,nai->na", n_d, fb.a) + np.einsum(
            "ni,nai->na", n, a_d
        )
        out.t_low_d = np.einsum("ni,nai->na", t_d, fb.a) + np.einsum(
            "ni,nai->na", t, a_d
        )
    return out


# ---------------------------------------------------------------------------
# verification helper
# ---------------------------------------------------------------------------


def fd_jet(map_obj, xi1, xi2, order: int, h: float = 1e-5) -> MapJet:
    """Central finite-difference jet of a surface/planar map (tests only).

    Each order is the central difference of the *analytic* next-lower jet, so
    the roundoff floor stays at eps/h for every order (nested differencing of
    raw values would drown third derivatives in noise).
    """
    xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))
    xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))

    def lower(d1, d2, k):
        return map_obj.jet(xi1 + d1, xi2 + d2, k)

    jet = MapJet(lower(0.0, 0.0, 0).x)
    e = [(h, 0.0), (0.0, h)]
    if order >= 1:
        jet.d1 = np.stack(
            [(lower(dx, dy, 0).x - lower(-dx, -dy, 0).x) / (2 * h) for dx, dy in e],
            axis=1,
        )
    if order >= 2:
        d2 = np.stack(
            [(lower(dx, dy, 1).d1 - lower(-dx, -dy, 1).d1) / (2 * h) for dx, dy in e],
            axis=-2,
        )
        jet.d2 = 0.5 * (d2 + np.swapaxes(d2, 1, 2))
    if order >= 3:
        d3 = np.stack(
            [(lower(dx, dy, 2).d2 - lower(-dx, -dy, 2).d2) / (2 * h) for dx, dy in e],
            axis=-2,
        )
        jet.d3 = d3
    return jet
