"""IBCM domain substructuring.

Background-grid element classification against trimming/offset curves,
transfinite tiles for high-order cut-cell quadrature, ruled boundary layers
between a boundary curve and its offset, and segmentation of interfaces into
single-owner pieces.

All curves live in the parametric plane; trimming in physical space (map
inversion) is out of scope.
"""

import bisect
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path as MplPath
from scipy.optimize import brentq

from .bspline import KnotVector, gauss_rule_01, make_open_knot_vector
from .errors import InvalidInput, InvalidOffset, RefineRequired, SegmentationFailure
from .geometry import (
    CircleCurve,
    PlanarCurve,
    RuledPatchMap,
    SegmentCurve,
    SplineCurve2D,
    offset_curve,
    refit_curve,
)

__all__ = [
    "Grid2D",
    "CircleZone",
    "LoopZone",
    "BelowGraphZone",
    "RectZone",
    "Classification",
    "classify_elements",
    "CurvePiece",
    "Tile",
    "tile_cut_cells",
    "tile_rule",
    "cell_rule",
    "active_area",
    "BoundaryLayer",
    "build_boundary_layer",
    "Interface",
    "InterfaceSide",
    "segment_interface",
    "sampled_min_distance",
]

ENTIRE, PARTIAL, EMPTY = "entire", "partial", "empty"


@dataclass(frozen=True)
class Grid2D:
    """Rectangular background grid from two strictly increasing break arrays."""

    breaks1: np.ndarray
    breaks2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "breaks1", np.asarray(self.breaks1, dtype=float))
        object.__setattr__(self, "breaks2", np.asarray(self.breaks2, dtype=float))
        if np.any(np.diff(self.breaks1) <= 0) or np.any(np.diff(self.breaks2) <= 0):
            raise InvalidInput("grid breaks must be strictly increasing")

    @property
    def shape(self):
        return self.breaks1.size - 1, self.breaks2.size - 1

    @property
    def ncells(self):
        n1, n2 = self.shape
        return n1 * n2

    def cell_id(self, cx, cy):
        return cx + cy * self.shape[0]

    def cell_bounds(self, cid):
        n1 = self.shape[0]
        cx, cy = cid % n1, cid // n1
        return (
            (self.breaks1[cx], self.breaks1[cx + 1]),
            (self.breaks2[cy], self.breaks2[cy + 1]),
        )

    def locate(self, pts):
        """Cell id containing each point (half-open convention)."""
        pts = np.atleast_2d(pts)
        ix = np.clip(np.searchsorted(self.breaks1, pts[:, 0], side="right") - 1,
                     0, self.shape[0] - 1)
        iy = np.clip(np.searchsorted(self.breaks2, pts[:, 1], side="right") - 1,
                     0, self.shape[1] - 1)
        return ix + iy * self.shape[0]

    def centers(self):
        c1 = 0.5 * (self.breaks1[:-1] + self.breaks1[1:])
        c2 = 0.5 * (self.breaks2[:-1] + self.breaks2[1:])
        X, Y = np.meshgrid(c1, c2, indexing="xy")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)


# ---------------------------------------------------------------------------
# zones: excluded regions bounded by trimming/offset curves
# ---------------------------------------------------------------------------


class Zone:
    """An excluded region; the active domain is the grid minus all zones."""

    curve: PlanarCurve | None = None

    def contains(self, pts):
        raise NotImplementedError

    def boundary_curves(self):
        return [self.curve] if self.curve is not None else []


@dataclass
class CircleZone(Zone):
    """Exact disk; used by the trimmed single-patch comparison runs."""

    center: tuple
    radius: float

    def __post_init__(self):
        self.curve = CircleCurve(self.center, self.radius)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) < self.radius


@dataclass
class LoopZone(Zone):
    """Region enclosed by a closed parametric-plane curve (spline loop)."""

    loop: PlanarCurve
    n_poly: int = 2048

    def __post_init__(self):
        self.curve = self.loop
        ts = np.linspace(self.loop.t0, self.loop.t1, self.n_poly)
        self._path = MplPath(self.loop.point(ts))

    def contains(self, pts):
        return self._path.contains_points(np.atleast_2d(pts))


@dataclass
class BelowGraphZone(Zone):
    """Region xi2 < g(xi1) below a graph curve parameterized by xi1."""

    graph: PlanarCurve

    def __post_init__(self):
        self.curve = self.graph

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        g = self.graph.point(pts[:, 0])[:, 1]
        return pts[:, 1] < g


@dataclass
class RectZone(Zone):
    """Axis-aligned rectangle; edges grid-aligned rectangles never cut cells."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        self.curve = None
        self._edges = [
            SegmentCurve((self.x0, self.y0), (self.x1, self.y0)),
            SegmentCurve((self.x1, self.y0), (self.x1, self.y1)),
            SegmentCurve((self.x1, self.y1), (self.x0, self.y1)),
            SegmentCurve((self.x0, self.y1), (self.x0, self.y0)),
        ]

    def boundary_curves(self):
        return self._edges

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] > self.x0) & (pts[:, 0] < self.x1)
            & (pts[:, 1] > self.y0) & (pts[:, 1] < self.y1)
        )


# ---------------------------------------------------------------------------
# curve / grid-line crossings
# ---------------------------------------------------------------------------


def _curve_line_crossings(curve: PlanarCurve, axis: int, value: float):
    """Parameters where a curve crosses the line coord[axis] == value."""
    if isinstance(curve, SegmentCurve):
        p0, p1 = curve.p0, curve.p1
        d = p1[axis] - p0[axis]
        if abs(d) < 1e-14:
            return []  # parallel (collinear overlap handled by the caller)
        s = (value - p0[axis]) / d
        if -1e-12 <= s <= 1.0 + 1e-12:
            return [curve.t0 + np.clip(s, 0.0, 1.0) * (curve.t1 - curve.t0)]
        return []
    if isinstance(curve, CircleCurve):
        c = curve.c[axis]
        u = (value - c) / curve.R
        if abs(u) > 1.0:
            return []
        base = np.arccos(u) if axis == 0 else np.arcsin(u)
        cands = []
        if axis == 0:
            phis = [base, -base]
        else:
            phis = [base, np.pi - base]
        for ph in phis:
            # t from a + b t = ph (mod 2 pi)
            t = (ph - curve.a) / curve.b
            period = 2.0 * np.pi / abs(curve.b)
            k0 = np.floor((curve.t0 - t) / period)
            for k in range(int(k0) - 1, int(k0) + int((curve.t1 - curve.t0) / period) + 3):
                tk = t + k * period
                if curve.t0 - 1e-12 <= tk <= curve.t1 + 1e-12:
                    cands.append(float(np.clip(tk, curve.t0, curve.t1)))
        return cands
    # generic curve: bracket sign changes on a dense per-span sample, then refine
    if isinstance(curve, SplineCurve2D):
        breaks = curve.kv.breaks
        nper = 4 * (curve.kv.p + 1)
    else:
        breaks = np.linspace(curve.t0, curve.t1, 65)
        nper = 8
    out = []

    def f(t):
        return curve.point(np.atleast_1d(t))[0, axis] - value

    for k in range(breaks.size - 1):
        ts = np.linspace(breaks[k], breaks[k + 1], nper + 1)
        vals = curve.point(ts)[:, axis] - value
        sg = np.sign(vals)
        for i in range(nper):
            if sg[i] == 0.0:
                out.append(float(ts[i]))
            elif sg[i] * sg[i + 1] < 0.0:
                out.append(float(brentq(f, ts[i], ts[i + 1], xtol=1e-14)))
    if vals[-1] == 0.0:
        out.append(float(breaks[-1]))
    return out


def _grid_crossings(curve: PlanarCurve, grid: Grid2D):
    """Sorted unique crossing parameters of a curve with all grid lines."""
    params = []
    for axis, brs in ((0, grid.breaks1), (1, grid.breaks2)):
        for v in brs:
            params.extend(_curve_line_crossings(curve, axis, v))
    params.sort()
    # dedupe within parameter tolerance (grazing corners)
    out, snapped = [], 0
    for t in params:
        if out and t - out[-1] < 1e-10:
            snapped += 1
            continue
        out.append(t)
    return np.array(out), snapped


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class CellInfo:
    kind: str
    arcs: list = field(default_factory=list)  # (zone_id, curve, t0, t1)


@dataclass
class Classification:
    grid: Grid2D
    zones: list
    cells: list
    crossings: dict  # (zone_id, curve_index) -> crossing parameter array
    warnings: list = field(default_factory=list)

    def cells_of_kind(self, kind):
        return [i for i, c in enumerate(self.cells) if c.kind == kind]

    def is_active_pts(self, pts):
        pts = np.atleast_2d(pts)
        act = np.ones(pts.shape[0], dtype=bool)
        for z in self.zones:
            act &= ~z.contains(pts)
        return act


def _on_grid_line(p, grid, tol=1e-12):
    return (
        np.any(np.abs(grid.breaks1 - p[0]) < tol)
        or np.any(np.abs(grid.breaks2 - p[1]) < tol)
    )


def classify_elements(grid: Grid2D, zones: list) -> Classification:
    """Classify cells into entire/partial/empty and attach cut arcs.

    Cells untouched by any curve are classified by a center containment test;
    every arc between two consecutive grid crossings lands in exactly one
    cell informed by its midpoint (arcs running along grid lines are ignored).
    """
    cells = [CellInfo(ENTIRE) for _ in range(grid.ncells)]
    crossings = {}
    warnings = []
    for zid, zone in enumerate(zones):
        for cix, curve in enumerate(zone.boundary_curves()):
            T, snapped = _grid_crossings(curve, grid)
            if snapped:
                warnings.append(
                    f"zone {zid}: {snapped} crossing(s) snapped within 1e-10"
                )
            crossings[(zid, cix)] = T
            closed = np.allclose(curve.point([curve.t0])[0],
                                 curve.point([curve.t1])[0], atol=1e-12)
            if T.size == 0:
                if closed:
                    raise RefineRequired(
                        "closed trimming curve lies inside a single cell"
                    )
                arcs = [(curve.t0, curve.t1)]
            else:
                arcs = [(T[i], T[i + 1]) for i in range(T.size - 1)]
                if closed:
                    arcs.append((T[-1], T[0] + (curve.t1 - curve.t0)))
                else:
                    if T[0] > curve.t0 + 1e-12:
                        arcs.insert(0, (curve.t0, T[0]))
                    if T[-1] < curve.t1 - 1e-12:
                        arcs.append((T[-1], curve.t1))
            period = curve.t1 - curve.t0
            for (ta, tb) in arcs:
                if tb - ta < 1e-12:
                    continue
                tm = 0.5 * (ta + tb)
                tm_eval = tm if tm <= curve.t1 else tm - period
                pm = curve.point([tm_eval])[0]
                if _on_grid_line(pm, grid):
                    continue  # arc collinear with a grid line: no cut
                cid = int(grid.locate(pm[None, :])[0])
                cells[cid].kind = PARTIAL
                cells[cid].arcs.append((zid, curve, ta, tb))
    centers = grid.centers()
    inside = np.zeros(grid.ncells, dtype=bool)
    for z in zones:
        inside |= z.contains(centers)
    for cid in range(grid.ncells):
        if cells[cid].kind != PARTIAL:
            cells[cid].kind = EMPTY if inside[cid] else ENTIRE
    return Classification(grid, zones, cells, crossings, warnings)


# ---------------------------------------------------------------------------
# tiles
# ---------------------------------------------------------------------------


class CurvePiece(PlanarCurve):
    """Sub-arc of a curve reparameterized affinely onto [0, 1]."""

    def __init__(self, curve: PlanarCurve, ta: float, tb: float, reverse=False):
        self.curve, self.ta, self.tb = curve, float(ta), float(tb)
        self.reverse = reverse
        self.t0, self.t1 = 0.0, 1.0

    def _map(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = 1.0 - t if self.reverse else t
        tt = self.ta + s * (self.tb - self.ta)
        period = self.curve.t1 - self.curve.t0
        return np.where(tt > self.curve.t1 + 1e-14, tt - period, tt)

    def jet(self, t, order=1):
        scale = (self.tb - self.ta) * (-1.0 if self.reverse else 1.0)
        jet = self.curve.jet(self._map(t), order)
        if order >= 1:
            jet.d1 = jet.d1 * scale
        if order >= 2:
            jet.d2 = jet.d2 * scale**2
        if order >= 3:
            jet.d3 = jet.d3 * scale**3
        return jet


@dataclass
class Tile:
    """Transfinite integration cell: ruled blend with positive Jacobian.

    ``pmap`` maps the unit square into the active part of the owner cell; the
    curved edge (when present) evaluates the exact trimming primitive, so the
    only quadrature error on a tile is the Gauss rule itself.
    """

    cell: int
    pmap: RuledPatchMap
    curve_interval: tuple | None = None  # (zone_id, ta, tb) on the trimming curve

    def rule(self, q: int):
        return tile_rule(self, q)


def _det2(d1):
    return d1[:, 0, 0] * d1[:, 1, 1] - d1[:, 0, 1] * d1[:, 1, 0]


def _tile_from(bottom, top, cell, interval=None, sample=4):
    tile = Tile(cell, RuledPatchMap(bottom, top), interval)
    x, w = gauss_rule_01(sample)
    X, Y = np.meshgrid(x, x, indexing="ij")
    det = _det2(tile.pmap.jet(X.ravel(), Y.ravel(), 1).d1)
    if np.all(det > 0.0):
        return tile
    tile = Tile(cell, RuledPatchMap(top, bottom), interval)
    det = _det2(tile.pmap.jet(X.ravel(), Y.ravel(), 1).d1)
    if np.all(det > 0.0):
        return tile
    raise RefineRequired(f"tile with sign-changing Jacobian in cell {cell}")


def _point_curve(p):
    return SegmentCurve(p, p)


def _boundary_chain(bounds):
    """Cell corners in ccw order and the edge each one starts."""
    (x0, x1), (y0, y1) = bounds
    corners = [np.array([x0, y0]), np.array([x1, y0]),
               np.array([x1, y1]), np.array([x0, y1])]
    return corners


def _edge_of_point(p, bounds, tol):
    (x0, x1), (y0, y1) = bounds
    if abs(p[1] - y0) < tol:
        return 0  # bottom
    if abs(p[0] - x1) < tol:
        return 1  # right
    if abs(p[1] - y1) < tol:
        return 2  # top
    if abs(p[0] - x0) < tol:
        return 3  # left
    return -1


def _boundary_coord(p, edge, bounds):
    """Position of p along the ccw boundary, in [edge, edge+1)."""
    (x0, x1), (y0, y1) = bounds
    if edge == 0:
        f = (p[0] - x0) / (x1 - x0)
    elif edge == 1:
        f = (p[1] - y0) / (y1 - y0)
    elif edge == 2:
        f = (x1 - p[0]) / (x1 - x0)
    else:
        f = (y1 - p[1]) / (y1 - y0)
    return edge + f


def tiles_for_cell(cls: Classification, cid: int) -> list:
    """Decompose the active part of a partial cell into tiles.

    Supported topologies: a single arc through two distinct edges (0..3 cell
    corners on the active side). Anything else raises RefineRequired.
    """
    info = cls.cells[cid]
    if len(info.arcs) != 1:
        raise RefineRequired(
            f"cell {cid}: {len(info.arcs)} arcs (supported: exactly one); refine the grid"
        )
    zid, curve, ta, tb = info.arcs[0]
    zone = cls.zones[zid]
    bounds = cls.grid.cell_bounds(cid)
    (x0, x1), (y0, y1) = bounds
    tol = 1e-9 * max(x1 - x0, y1 - y0)
    piece = CurvePiece(curve, ta, tb)
    P0 = piece.point([0.0])[0]
    P1 = piece.point([1.0])[0]
    e0 = _edge_of_point(P0, bounds, 1e3 * tol)
    e1 = _edge_of_point(P1, bounds, 1e3 * tol)
    if e0 < 0 or e1 < 0:
        raise RefineRequired(f"cell {cid}: arc endpoint not on a cell edge")
    # active side: offset the arc midpoint along its normal
    mj = piece.jet(np.array([0.5]), 1)
    v = mj.d1[0, 0]
    nrm = np.array([-v[1], v[0]]) / max(np.linalg.norm(v), 1e-300)
    eps = 10 * tol
    probe = mj.x[0] + eps * nrm
    if bool(zone.contains(probe[None, :])[0]):
        nrm = -nrm
        probe = mj.x[0] + eps * nrm
    # corners on the active side: walk the ccw boundary from P1 to P0 both
    # ways and keep the path whose polygon contains the probe point
    corners = _boundary_chain(bounds)
    c1 = _boundary_coord(P1, e1, bounds)
    c0 = _boundary_coord(P0, e0, bounds)
    ccw_corners = []
    c = np.ceil(c1 - 1e-12)
    while c < (c0 if c0 > c1 else c0 + 4) - 1e-12:
        ccw_corners.append(corners[int(c) % 4])
        c += 1.0
    cw_corners = []
    c = np.floor(c1 + 1e-12)
    while c > (c0 if c0 < c1 else c0 - 4) + 1e-12:
        cw_corners.append(corners[int(np.mod(c, 4))])
        c -= 1.0
    ts = np.linspace(0.0, 1.0, 33)
    arcpts = piece.point(ts)
    chosen = None
    for cand in (ccw_corners, cw_corners):
        poly = np.vstack([arcpts, np.array(cand).reshape(-1, 2)]) if cand else arcpts
        if MplPath(poly).contains_points(probe[None, :])[0]:
            chosen = cand
            break
    if chosen is None:
        raise RefineRequired(f"cell {cid}: could not resolve active side")
    k = len(chosen)
    interval = (zid, ta, tb)
    if k == 0:
        raise RefineRequired(
            f"cell {cid}: same-edge cut (lens) not supported; refine the grid"
        )
    if k == 1:
        return [_tile_from(piece, _point_curve(chosen[0]), cid, interval)]
    if k == 2:
        # boundary path runs P1 -> chosen[0] -> chosen[1] -> P0, so the far
        # edge must run chosen[1] -> chosen[0] to match the piece direction
        far = SegmentCurve(chosen[1], chosen[0])
        return [_tile_from(piece, far, cid, interval)]
    if k == 3:
        vb = chosen[1]
        tiles = [_tile_from(piece, _point_curve(vb), cid, interval)]
        tiles.append(_tile_from(SegmentCurve(P1, chosen[0]), _point_curve(vb), cid))
        tiles.append(_tile_from(SegmentCurve(chosen[2], P0), _point_curve(vb), cid))
        return tiles
    raise RefineRequired(f"cell {cid}: unsupported cut topology (k={k})")


def tile_cut_cells(cls: Classification) -> dict:
    return {cid: tiles_for_cell(cls, cid) for cid in cls.cells_of_kind(PARTIAL)}


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def cell_rule(bounds, n1: int, n2: int | None = None):
    """Tensor Gauss rule on a rectangle: points (n,2) and weights."""
    if n2 is None:
        n2 = n1
    (x0, x1), (y0, y1) = bounds
    g1, w1 = gauss_rule_01(n1)
    g2, w2 = gauss_rule_01(n2)
    X = x0 + (x1 - x0) * g1
    Y = y0 + (y1 - y0) * g2
    pts = np.stack(np.meshgrid(X, Y, indexing="ij"), axis=-1).reshape(-1, 2)
    w = ((x1 - x0) * w1)[:, None] * ((y1 - y0) * w2)[None, :]
    return pts, w.ravel()


def tile_rule(tile: Tile, q: int):
    """Gauss rule of q+2 points per direction mapped through the tile."""
    n = q + 2
    g, w = gauss_rule_01(n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    jet = tile.pmap.jet(X.ravel(), Y.ravel(), 1)
    det = _det2(jet.d1)
    wt = (w[:, None] * w[None, :]).ravel() * det
    if np.any(det <= 0.0):
        raise RefineRequired(f"non-positive tile Jacobian in cell {tile.cell}")
    return jet.x, wt


def active_area(cls: Classification, tiles: dict, q: int = 3) -> float:
    """Parametric-plane area of the active region (entire cells + tiles)."""
    total = 0.0
    for cid in cls.cells_of_kind(ENTIRE):
        (x0, x1), (y0, y1) = cls.grid.cell_bounds(cid)
        total += (x1 - x0) * (y1 - y0)
    for cid, tl in tiles.items():
        for t in tl:
            _, w = tile_rule(t, q)
            total += w.sum()
    return total


# ---------------------------------------------------------------------------
# boundary layers
# ---------------------------------------------------------------------------


def sampled_min_distance(curve_a: PlanarCurve, curve_b: PlanarCurve, n: int = 2048):
    ta = np.linspace(curve_a.t0, curve_a.t1, n)
    tb = np.linspace(curve_b.t0, curve_b.t1, n)
    pa = curve_a.point(ta)
    pb = curve_b.point(tb)
    dmin = np.inf
    for k in range(0, n, 256):
        d = np.linalg.norm(pa[k : k + 256, None, :] - pb[None, :, :], axis=-1)
        dmin = min(dmin, d.min())
    return float(dmin)


@dataclass
class BoundaryLayer:
    """Ruled patch between a boundary curve and its offset.

    ``curve_b`` traces the (refit) boundary at eta2=0, ``curve_off`` the
    offset at eta2=1; both live on the eta1 break knots so the layer geometry
    is a member of its own approximation space.
    """

    index: int
    curve_b: SplineCurve2D
    curve_off: SplineCurve2D
    pmap: RuledPatchMap
    breaks1: np.ndarray
    breaks2: np.ndarray
    closed: bool = False

    @property
    def grid(self):
        return Grid2D(self.breaks1, self.breaks2)


def build_boundary_layer(boundary, n1: int, n2: int, p: int, index: int = 0,
                         delta: float | None = None, offset=None,
                         offset_side: str = "left", closed: bool | None = None,
                         check: bool = True) -> BoundaryLayer:
    """Fit the boundary (and offset) onto the layer knots and build the map.

    Provide either ``delta`` (parallel offset distance, ``offset_side`` picks
    the normal direction) or an explicit ``offset`` curve. The boundary must
    be oriented with the active region on its left (clockwise for holes), so
    the default left offset points into the domain and the ruled map keeps a
    positive Jacobian.
    """
    if (delta is None) == (offset is None):
        raise InvalidInput("give exactly one of delta or offset")
    breaks1 = np.linspace(boundary.t0, boundary.t1, n1 + 1)
    kv = make_open_knot_vector(breaks1, p)
    cb = refit_curve(boundary, kv)
    if offset is not None:
        coff = refit_curve(offset, kv)
    else:
        coff = offset_curve(cb, delta, kv, side=offset_side)
    if closed is None:
        closed = bool(
            np.allclose(boundary.point([boundary.t0])[0],
                        boundary.point([boundary.t1])[0], atol=1e-9)
        )
    pmap = RuledPatchMap(cb, coff)
    layer = BoundaryLayer(index, cb, coff, pmap,
                          breaks1, np.linspace(0.0, 1.0, n2 + 1), closed)
    if check:
        gp, _ = gauss_rule_01(p + 2)
        e1 = (breaks1[:-1, None] + np.diff(breaks1)[:, None] * gp[None, :]).ravel()
        for s in gp:
            det = _det2(pmap.jet(e1, np.full(e1.size, s), 1).d1)
            if np.any(det <= 0.0):
                raise InvalidOffset(
                    f"layer {index}: ruled map folds (det <= 0); reduce the offset"
                )
        if sampled_min_distance(cb, coff) < 1e-9:
            raise InvalidOffset(f"layer {index}: offset touches its boundary curve")
    return layer


# ---------------------------------------------------------------------------
# interface segmentation
# ---------------------------------------------------------------------------


@dataclass
class InterfaceSide:
    """One side of an interface: a patch and the curve in its coordinates.

    ``curve`` maps the shared interface parameter to this side's parametric
    plane. ``owner_breaks`` are parameters where the curve changes owner
    (element edges / grид crossings on this side); ``locate`` maps a parameter
    to an owner id and is used for bookkeeping checks only.
    """

    patch: int
    curve: PlanarCurve
    owner_breaks: np.ndarray
    locate: callable = None
    sign: float = 1.0


@dataclass
class Interface:
    """Segmented interface; each segment has one owner per side."""

    plus: InterfaceSide
    minus: InterfaceSide
    segments: list  # (s0, s1, owner_plus, owner_minus)
    kind: str = "coupling"  # coupling | seam | dirichlet

    @property
    def total_param_length(self):
        return sum(s1 - s0 for s0, s1, _, _ in self.segments)


def segment_interface(plus: InterfaceSide, minus: InterfaceSide,
                      s_range: tuple, tol: float = 1e-10) -> Interface:
    """Merge both sides' breakpoints into single-owner segments."""
    s0, s1 = s_range
    pts = [s0, s1]
    for brk in (plus.owner_breaks, minus.owner_breaks):
        for t in np.asarray(brk, dtype=float):
            if s0 - tol < t < s1 + tol:
                pts.append(min(max(t, s0), s1))
    pts = sorted(pts)
    merged = []
    for t in pts:
        if merged and t - merged[-1] < tol:
            continue
        merged.append(t)
    if merged[-1] < s1 - tol:
        merged.append(s1)
    segments = []
    for a, b in zip(merged[:-1], merged[1:]):
        if b - a < tol:
            continue
        mid = 0.5 * (a + b)
        own_p = plus.locate(mid) if plus.locate else None
        own_m = minus.locate(mid) if minus.locate else None
        if (plus.locate and own_p is None) or (minus.locate and own_m is None):
            raise SegmentationFailure(
                f"segment ({a:.6g},{b:.6g}) has no owner on one side"
            )
        segments.append((a, b, own_p, own_m))
    return Interface(plus, minus, segments)
