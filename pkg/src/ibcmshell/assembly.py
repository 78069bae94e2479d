"""Discrete variational statements and the linear solve.

A ``ShellModel`` collects patches (immersed interior patches and conformal
boundary layers), interface specifications, boundary conditions and loads;
``assemble`` produces the symmetric stiffness and right-hand side;
``solve`` runs Jacobi scaling plus a sparse Cholesky, which doubles as the
positive-definiteness gate.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from cvxopt import cholmod, matrix as cvxmat, spmatrix

from .bspline import KnotVector, TensorSplineSpace, gauss_rule_01, l2_project_edge, make_open_knot_vector
from .domain import (
    ENTIRE,
    Classification,
    Grid2D,
    Interface,
    InterfaceSide,
    cell_rule,
    segment_interface,
    tile_rule,
)
from .errors import (
    AssemblyFailure,
    CannotCoupleStrongly,
    InvalidInput,
    InvalidLoad,
    UnsupportedConfiguration,
)
from .geometry import ComposedMap, SegmentCurve, compose_jets, curve_frames, surface_frame
from .material import covariant_tensors
from .shell import (
    NCOMP,
    BasisData,
    ExactField,
    basis_data,
    displacement_rows,
    kl_flux_rows,
    kl_flux_values,
    kl_strain_rows,
    kl_strain_values,
    kl_theta_values,
    rm_flux_rows,
    rm_strain_rows,
    rm_strain_values,
    stress_tensors,
    theta_n_rows,
    theta_vector_rows_kl,
    theta_vector_rows_rm,
)

__all__ = [
    "NitscheParams",
    "Patch",
    "ShellModel",
    "SPDReport",
    "FieldSolution",
]

EDGES = ("w", "e", "s", "n")


@dataclass
class NitscheParams:
    """Penalty/average configuration: mu_u = beta E tau / h, mu_th = beta E tau^3 / h."""

    beta: float = 10.0
    gamma1: float = 1.0
    gamma2: float = 1.0

    def mus(self, E: float, tau: float, h: float):
        mu_u = self.beta * E * tau / h
        return mu_u, mu_u * tau * tau


class Patch:
    """One analysis patch: spline space on its own grid plus a surface map."""

    def __init__(self, name, breaks1, breaks2, degree, smap, theory, gs,
                 cls: Classification | None = None, tiles: dict | None = None,
                 inner=None):
        if theory not in NCOMP:
            raise InvalidInput(f"unknown theory {theory!r}")
        if theory == "kl" and degree < 2:
            raise InvalidInput("Kirchhoff-Love needs degree >= 2 (C^1)")
        self.name = name
        self.p = degree
        self.kv1 = make_open_knot_vector(breaks1, degree)
        self.kv2 = make_open_knot_vector(breaks2, degree)
        self.space = TensorSplineSpace(self.kv1, self.kv2)
        self.grid = Grid2D(breaks1, breaks2)
        self.smap = smap
        self.inner = inner  # planar map for layers (None on interior patches)
        self.theory = theory
        self.ncomp = NCOMP[theory]
        self.gs = gs
        self.cls = cls
        self.tiles = tiles if tiles is not None else {}
        self._const_ct = None

    # -- quadrature batches -------------------------------------------------
    def active_cells(self):
        if self.cls is None:
            return range(self.grid.ncells)
        return self.cls.cells_of_kind(ENTIRE)

    def interior_rules(self, npts):
        """Yield (pts, weights) per entire cell and per tile."""
        for cid in self.active_cells():
            yield cell_rule(self.grid.cell_bounds(cid), npts)
        for cid, tl in self.tiles.items():
            for t in tl:
                yield tile_rule(t, npts - 2)

    def frame_order(self, flux: bool = False):
        return 3 if (self.theory == "kl" and flux) else 2

    def basis_order(self, flux: bool = False):
        if self.theory == "kl":
            return 3 if flux else 2
        return 1

    def material_at(self, fb, derivatives=False):
        return covariant_tensors(self.gs, fb, derivatives=derivatives)

    # -- DOF helpers ---------------------------------------------------------
    def edge_scalar_ids(self, edge: str):
        n1, n2 = self.space.shape
        if edge == "w":
            return np.arange(n2) * n1
        if edge == "e":
            return np.arange(n2) * n1 + (n1 - 1)
        if edge == "s":
            return np.arange(n1)
        if edge == "n":
            return np.arange(n1) + (n2 - 1) * n1
        raise InvalidInput(f"edge must be one of {EDGES}")

    def edge_kv(self, edge: str) -> KnotVector:
        return self.kv2 if edge in ("w", "e") else self.kv1

    def edge_curve(self, edge: str) -> SegmentCurve:
        (x0, x1), (y0, y1) = (
            (self.grid.breaks1[0], self.grid.breaks1[-1]),
            (self.grid.breaks2[0], self.grid.breaks2[-1]),
        )
        if edge == "w":
            return SegmentCurve((x0, y0), (x0, y1), y0, y1)
        if edge == "e":
            return SegmentCurve((x1, y0), (x1, y1), y0, y1)
        if edge == "s":
            return SegmentCurve((x0, y0), (x1, y0), x0, x1)
        if edge == "n":
            return SegmentCurve((x0, y1), (x1, y1), x0, x1)
        raise InvalidInput(f"edge must be one of {EDGES}")

    def edge_element_breaks(self, edge: str):
        return self.grid.breaks2 if edge in ("w", "e") else self.grid.breaks1

    def surface_jet(self, x1, x2, order):
        return self.smap.jet(x1, x2, order)


@dataclass
class InterfaceTerm:
    """One Nitsche-coupled interface (or weak-Dirichlet edge when minus is data)."""

    iface: Interface
    h: float
    couple_u: bool = True
    couple_theta: bool = True
    data: object = None  # exact field for weak Dirichlet; None for coupling


@dataclass
class SPDReport:
    spd: bool
    message: str = ""
    residual: float = np.nan
    cond_estimate: float = np.nan
    n_dofs: int = 0
    factor_seconds: float = 0.0

    @property
    def severely_ill_conditioned(self):
        return not self.spd or (np.isfinite(self.cond_estimate) and self.cond_estimate > 1e13)


class FieldSolution:
    """Solved coefficient fields with point evaluators."""

    def __init__(self, model, x_full):
        self.model = model
        self.x_full = x_full

    def coeffs(self, pidx):
        """Coefficient array (n1*n2, ncomp); masked-out functions read zero."""
        patch = self.model.patches[pidx]
        n1, n2 = patch.space.shape
        out = np.zeros((n1 * n2, patch.ncomp))
        act = patch.space._act_index
        sel = act >= 0
        base = self.model.dofmap.offset[pidx]
        for c in range(patch.ncomp):
            out[sel, c] = self.x_full[base + act[sel] * patch.ncomp + c]
        return out

    def field(self, pidx, x1, x2, order=1) -> ExactField:
        """Discrete field samples (u and derivatives; theta for RM patches)."""
        patch = self.model.patches[pidx]
        bd = basis_data(patch.space, x1, x2, order)
        co = self.coeffs(pidx)[bd.idx]  # (N, nloc, ncomp)
        u = np.einsum("nj,njc->nc", bd.N, co[..., :3])
        du = np.einsum("nja,njc->nac", bd.dN, co[..., :3])
        f = ExactField(u=u, du=du)
        if order >= 2:
            f.d2u = np.einsum("njab,njc->nabc", bd.d2N, co[..., :3])
        if order >= 3:
            f.d3u = np.einsum("njabg,njc->nabgc", bd.d3N, co[..., :3])
        if patch.theory == "rm":
            fb = surface_frame(patch.smap, (x1, x2), order=2)
            th_low = np.einsum("nj,njc->nc", bd.N, co[..., 3:5])
            f.theta = np.einsum("nc,nci->ni", th_low, fb.acon)
            if order >= 2:
                # dtheta not assembled here; RM evaluators need only values
                f.dtheta = None
        return f

    def theta_low(self, pidx, x1, x2):
        patch = self.model.patches[pidx]
        bd = basis_data(patch.space, x1, x2, 0)
        co = self.coeffs(pidx)[bd.idx]
        return np.einsum("nj,njc->nc", bd.N, co[..., 3:5])

    def stresses(self, pidx, x1, x2):
        """Generalized stresses (Nf, Mf[, Q]) at points of a patch."""
        patch = self.model.patches[pidx]
        fb = surface_frame(patch.smap, (x1, x2), order=2)
        ct = patch.material_at(fb)
        if patch.theory == "kl":
            f = self.field(pidx, x1, x2, order=2)
            eps, kap = kl_strain_values(f, fb)
            return stress_tensors(ct, eps, kap)
        f = self.field(pidx, x1, x2, order=1)
        bdth = basis_data(patch.space, x1, x2, 1)
        co = self.coeffs(pidx)[bdth.idx]
        th_low = np.einsum("nj,njc->nc", bdth.N, co[..., 3:5])
        dth_low = np.einsum("nja,njc->nca", bdth.dN, co[..., 3:5])
        eps = 0.5 * (np.einsum("nai,nbi->nab", fb.a, f.du)
                     + np.einsum("nbi,nai->nab", fb.a, f.du))
        tmp = dth_low.transpose(0, 2, 1) - np.einsum("ngab,ng->nab", fb.gam, th_low) \
            + np.einsum("nai,nbi->nab", fb.da3, f.du)
        kap = 0.5 * (tmp + tmp.transpose(0, 2, 1))
        gam = np.einsum("ni,nai->na", fb.a3, f.du) + th_low
        return stress_tensors(ct, eps, kap, gam)


class DofMap:
    """Global numbering with union-find identification and fixed values."""

    def __init__(self, patches):
        self.offset = []
        n = 0
        for p in patches:
            self.offset.append(n)
            n += p.space.n_scalar * p.ncomp
        self.n_glob = n
        self.parent = np.arange(n)
        self.fixed_mask = np.zeros(n, bool)
        self.fixed_val = np.zeros(n)
        self.patches = patches

    def gids(self, pidx, scalar_ids, comp):
        act = self.patches[pidx].space._act_index[scalar_ids]
        if np.any(act < 0):
            raise InvalidInput("requested DOF of a masked-out basis function")
        return self.offset[pidx] + act * self.patches[pidx].ncomp + comp

    def _find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def merge(self, ga, gb):
        ra, rb = self._find(ga), self._find(gb)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def fix(self, gid, value):
        self.fixed_mask[gid] = True
        self.fixed_val[gid] = value

    def finalize(self):
        rep = np.array([self._find(i) for i in range(self.n_glob)])
        # fixed status/values propagate to the class representative
        for g in np.nonzero(self.fixed_mask)[0]:
            r = rep[g]
            if self.fixed_mask[r] and self.fixed_val[r] != self.fixed_val[g]:
                if abs(self.fixed_val[r] - self.fixed_val[g]) > 1e-9 * (
                    1.0 + abs(self.fixed_val[r])
                ):
                    raise InvalidInput("conflicting fixed values in one class")
            self.fixed_mask[r] = True
            self.fixed_val[r] = self.fixed_val[g]
        self.rep = rep
        free = np.unique(rep[~self.fixed_mask[rep]])
        self.solve_index = np.full(self.n_glob, -1, dtype=int)
        self.solve_index[free] = np.arange(free.size)
        self.n_free = free.size
        self.free_reps = free

    def expand(self, x_red):
        x = np.where(self.fixed_mask[self.rep], self.fixed_val[self.rep], 0.0)
        sel = self.solve_index[self.rep] >= 0
        x[sel] = x_red[self.solve_index[self.rep][sel]]
        return x


class ShellModel:
    """Multi-patch IBCM shell problem."""

    def __init__(self, nitsche: NitscheParams | None = None):
        self.patches: list[Patch] = []
        self.interfaces: list[InterfaceTerm] = []
        self.strong_bcs = []   # (pidx, edge, comps, value_callable_by_comp | exact)
        self.strong_pairs = []  # (gidA, gidB)
        self.pins = []         # (gid, value)
        self.loads = []        # callables, see add_* helpers
        self.exact = None      # manufactured solution (verify.ManufacturedSolution)
        self.nitsche = nitsche or NitscheParams()
        self.quad_bump = 2     # manufactured/elevated quadrature adds p+quad_bump+1
        self.dofmap: DofMap | None = None

    # -- construction -------------------------------------------------------
    def add_patch(self, patch: Patch) -> int:
        self.patches.append(patch)
        return len(self.patches) - 1

    def layer_edge_side(self, pidx, edge: str) -> InterfaceSide:
        """Interface side living on a full patch edge, parameterized by the
        edge coordinate."""
        patch = self.patches[pidx]
        curve = patch.edge_curve(edge)
        return InterfaceSide(
            patch=pidx,
            curve=curve,
            owner_breaks=patch.edge_element_breaks(edge),
            locate=lambda s, b=patch.edge_element_breaks(edge): int(
                np.clip(np.searchsorted(b, s) - 1, 0, b.size - 2)
            ),
        )

    def trimmed_side(self, pidx, curve, zone_key=None) -> InterfaceSide:
        """Interface side on an immersed patch along a trimming curve."""
        patch = self.patches[pidx]
        if patch.cls is None:
            raise InvalidInput("trimmed_side needs a classified patch")
        breaks = []
        if zone_key is not None and zone_key in patch.cls.crossings:
            breaks = patch.cls.crossings[zone_key]
        return InterfaceSide(
            patch=pidx,
            curve=curve,
            owner_breaks=np.asarray(breaks, dtype=float),
            locate=lambda s: int(patch.grid.locate(curve.point([s]))[0]),
        )

    def add_interface(self, plus: InterfaceSide, minus: InterfaceSide,
                      s_range, h: float, couple_u=True, couple_theta=True,
                      data=None):
        iface = segment_interface(plus, minus, s_range)
        self.interfaces.append(InterfaceTerm(iface, h, couple_u, couple_theta, data))
        return iface

    def add_weak_dirichlet(self, side: InterfaceSide, s_range, h: float,
                           data="zero", couple_u=True, couple_theta=True):
        """Nitsche-imposed Dirichlet data on one side (trimmed or rotation-only).

        ``data``: "zero" (homogeneous), "exact" (trace of the manufactured
        solution), or a callable (patch, fb, cf, s) -> dict(u, th, thn).
        """
        iface = segment_interface(side, InterfaceSide(-1, side.curve,
                                                      np.empty(0)), s_range)
        self.interfaces.append(
            InterfaceTerm(iface, h, couple_u, couple_theta, data=data)
        )
        return iface

    def add_strong_dirichlet(self, pidx, edge, comps, values):
        """values: callable(comp, t_array) -> data, or 0 for homogeneous."""
        self.strong_bcs.append((pidx, edge, tuple(comps), values))

    def couple_edges_strong(self, pa, edge_a, pb, edge_b, comps):
        """Identify matching edge DOFs across a conformal interface.

        Requires matching degree, function count and knots on the shared edge;
        resolution to global ids is deferred until the DOF map exists.
        """
        A, B = self.patches[pa], self.patches[pb]
        kva, kvb = A.edge_kv(edge_a), B.edge_kv(edge_b)
        if kva.p != kvb.p or kva.n != kvb.n or not np.allclose(
            kva.knots - kva.knots[0], kvb.knots - kvb.knots[0],
            atol=1e-9 * max(1.0, abs(kva.knots[-1] - kva.knots[0])),
        ):
            raise CannotCoupleStrongly(
                f"edge spaces differ: {A.name}.{edge_a} vs {B.name}.{edge_b}"
            )
        sa = A.edge_scalar_ids(edge_a)
        sb = B.edge_scalar_ids(edge_b)
        for c in comps:
            self.strong_pairs.append(((pa, sa, c), (pb, sb, c)))

    def pin(self, pidx, i, j, comp, value=0.0):
        self.pins.append((pidx, i, j, comp, value))

    def add_body_load(self, pidx, fn):
        """fn(fb, x (N,3)) -> force density (N,3) [per unit area]."""
        self.loads.append(("body", pidx, fn))

    def add_edge_load(self, pidx, edge, fn):
        """fn(fb, x (N,3)) -> edge force density (N,3) [per unit length]."""
        self.loads.append(("edge", pidx, edge, fn))

    def add_point_load(self, pidx, xi, vec):
        self.loads.append(("point", pidx, np.asarray(xi, float), np.asarray(vec, float)))

    def add_corner_force(self, pidx, xi, magnitude):
        """KL corner force: magnitude times the surface normal at the corner."""
        self.loads.append(("corner", pidx, np.asarray(xi, float), float(magnitude)))

    # -- exact-field sampling -------------------------------------------------
    def sample_exact(self, exact, patch: Patch, x1, x2, order=2) -> ExactField:
        """Exact field in a patch's own coordinates (chain rule on layers)."""
        if patch.inner is None:
            uj = exact.ujet(x1, x2, order)
        else:
            ij = patch.inner.jet(x1, x2, min(order, 3))
            uj = compose_jets(exact.ujet(ij.x[:, 0], ij.x[:, 1], order), ij, order)
        f = ExactField(u=uj.x, du=uj.d1, d2u=uj.d2, d3u=uj.d3)
        if patch.theory == "rm" and getattr(exact, "thetajet", None) is not None:
            if patch.inner is None:
                tj = exact.thetajet(x1, x2, 1)
            else:
                ij = patch.inner.jet(x1, x2, 1)
                tj = compose_jets(exact.thetajet(ij.x[:, 0], ij.x[:, 1], 1), ij, 1)
            f.theta, f.dtheta = tj.x, tj.d1
        return f

    # -- assembly -------------------------------------------------------------
    def _resolve_pairs(self):
        out = []
        for (pa, sa, ca), (pb, sb, cb) in self.strong_pairs:
            ga = self.dofmap.gids(pa, sa, ca)
            gb = self.dofmap.gids(pb, sb, cb)
            out.extend(zip(ga.tolist(), gb.tolist()))
        return out

    def finalize_masks(self):
        """Activity masks from basis values at every active quadrature point."""
        for pidx, patch in enumerate(self.patches):
            if patch.cls is None:
                continue
            nz = np.zeros(patch.space.shape[0] * patch.space.shape[1], bool)
            npts = patch.p + 1
            for pts, w in patch.interior_rules(npts):
                idx, tabs = patch.space.eval_scalar(pts[:, 0], pts[:, 1], 0)
                nz[idx[np.abs(tabs[(0, 0)]) > 1e-14]] = True
            for term in self.interfaces:
                for side in (term.iface.plus, term.iface.minus):
                    if side.patch != pidx:
                        continue
                    for (a, b, _, _) in term.iface.segments:
                        g, _ = gauss_rule_01(patch.p + 2)
                        s = a + (b - a) * g
                        q = side.curve.point(s)
                        idx, tabs = patch.space.eval_scalar(q[:, 0], q[:, 1], 0)
                        nz[idx[np.abs(tabs[(0, 0)]) > 1e-14]] = True
            patch.space.active = nz.reshape(patch.space.shape[::-1]).T
            patch.space.finalize_active()

    def _interior_rows(self, patch, bd, fb):
        if patch.theory == "kl":
            eps, kap = kl_strain_rows(bd, fb)
            return eps, kap, None
        return rm_strain_rows(bd, fb)

    def _exact_strains(self, patch, f, fb):
        if patch.theory == "kl":
            eps, kap = kl_strain_values(f, fb)
            return eps, kap, None
        return rm_strain_values(f, fb)

    def _cell_gids(self, pidx, idx0, ncomp):
        act = self.patches[pidx].space._act_index[idx0]
        gid = np.where(
            act[:, None] >= 0,
            self.dofmap.offset[pidx] + act[:, None] * ncomp + np.arange(ncomp)[None, :],
            -1,
        )
        return gid.reshape(-1)

    def assemble(self):
        """Assemble stiffness triplets and right-hand side on raw global ids."""
        dm = self.dofmap = DofMap(self.patches)
        rows, cols, vals = [], [], []
        b = np.zeros(dm.n_glob)

        def scatter(gids, Kloc, bloc=None):
            keep = gids >= 0
            if not np.all(keep):
                Kloc = Kloc[np.ix_(keep, keep)]
                if bloc is not None:
                    bloc = bloc[keep]
                gids = gids[keep]
            if not np.all(np.isfinite(Kloc)):
                raise AssemblyFailure("non-finite stiffness entries")
            r = np.repeat(gids, gids.size)
            c = np.tile(gids, gids.size)
            rows.append(r)
            cols.append(c)
            vals.append(Kloc.reshape(-1))
            if bloc is not None:
                b[gids] += bloc

        # interior bilinear form (and manufactured interior RHS)
        for pidx, patch in enumerate(self.patches):
            npts = patch.p + 1
            border = 2 if patch.theory == "kl" else 1
            for pts, w in patch.interior_rules(npts):
                fb = surface_frame(patch.smap, (pts[:, 0], pts[:, 1]), order=2)
                ct = patch.material_at(fb)
                bd = basis_data(patch.space, pts[:, 0], pts[:, 1], border)
                eps, kap, gam = self._interior_rows(patch, bd, fb)
                wq = w * fb.sqa
                if patch.theory == "kl":
                    Nf, Mf = stress_tensors(ct, eps, kap)
                    K = np.einsum("nabi,nabj,n->ij", eps, Nf, wq) + np.einsum(
                        "nabi,nabj,n->ij", kap, Mf, wq
                    )
                else:
                    Nf, Mf, Q = stress_tensors(ct, eps, kap, gam)
                    K = (
                        np.einsum("nabi,nabj,n->ij", eps, Nf, wq)
                        + np.einsum("nabi,nabj,n->ij", kap, Mf, wq)
                        + np.einsum("nai,naj,n->ij", gam, Q, wq)
                    )
                gids = self._cell_gids(pidx, bd.idx[0], patch.ncomp)
                scatter(gids, K)
            if self.exact is not None:
                nq = patch.p + 1 + self.quad_bump
                for pts, w in patch.interior_rules(nq):
                    fb = surface_frame(patch.smap, (pts[:, 0], pts[:, 1]), order=2)
                    ct = patch.material_at(fb)
                    bd = basis_data(patch.space, pts[:, 0], pts[:, 1], 2 if patch.theory == "kl" else 1)
                    eps, kap, gam = self._interior_rows(patch, bd, fb)
                    fex = self.sample_exact(self.exact, patch, pts[:, 0], pts[:, 1], order=2)
                    e_ex, k_ex, g_ex = self._exact_strains(patch, fex, fb)
                    wq = w * fb.sqa
                    if patch.theory == "kl":
                        N_ex, M_ex = stress_tensors(ct, e_ex, k_ex)
                        bl = np.einsum("nabi,nab,n->i", eps, N_ex, wq) + np.einsum(
                            "nabi,nab,n->i", kap, M_ex, wq
                        )
                    else:
                        N_ex, M_ex, Q_ex = stress_tensors(ct, e_ex, k_ex, g_ex)
                        bl = (
                            np.einsum("nabi,nab,n->i", eps, N_ex, wq)
                            + np.einsum("nabi,nab,n->i", kap, M_ex, wq)
                            + np.einsum("nai,na,n->i", gam, Q_ex, wq)
                        )
                    gids = self._cell_gids(pidx, bd.idx[0], patch.ncomp)
                    keep = gids >= 0
                    b[gids[keep]] += bl[keep]

        # interface terms
        for term in self.interfaces:
            self._assemble_interface(term, scatter, b)

        # loads
        for load in self.loads:
            self._assemble_load(load, b)

        K = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dm.n_glob, dm.n_glob),
        ).tocsr()

        # strong conditions
        for (pidx, edge, comps, values) in self.strong_bcs:
            self._apply_strong_bc(pidx, edge, comps, values)
        for ga, gb in self._resolve_pairs():
            dm.merge(ga, gb)
        for (pidx, i, j, comp, val) in self.pins:
            patch = self.patches[pidx]
            g = dm.gids(pidx, np.array([i + j * patch.space.shape[0]]), comp)[0]
            dm.fix(g, val)
        dm.finalize()
        return K, b

    # -- interface machinery --------------------------------------------------
    def _side_eval(self, side: InterfaceSide, s, need_flux, outward=True):
        """Rows and frames for one side at interface parameters s.

        ``outward=True`` orients the in-plane normal out of this side's active
        domain (flux side); ``outward=False`` orients it entering the domain
        (the convention for the second patch of an interface).
        """
        patch = self.patches[side.patch]
        cj = side.curve.jet(s, 2)
        pts = cj.x
        fb = surface_frame(patch.smap, (pts[:, 0], pts[:, 1]),
                           order=patch.frame_order(flux=need_flux))
        bd = basis_data(patch.space, pts[:, 0], pts[:, 1],
                        patch.basis_order(flux=need_flux))
        # orientation from a parametric probe next to the mid-segment point
        mid = len(s) // 2
        v = cj.d1[mid, 0]
        m = np.array([-v[1], v[0]])
        m /= np.linalg.norm(m)
        eps_probe = 1e-6 * max(
            patch.grid.breaks1[-1] - patch.grid.breaks1[0],
            patch.grid.breaks2[-1] - patch.grid.breaks2[0],
        )
        inside = self._point_in_patch(patch, pts[mid] + eps_probe * m)
        cf0 = curve_frames(fb.take(slice(mid, mid + 1)),
                           _jet_slice(cj, mid), sign=1.0)
        into = np.einsum("nli,nl->ni", fb.take(slice(mid, mid + 1)).a,
                         (m * (1.0 if inside else -1.0))[None, :])
        dot = float(np.einsum("ni,ni->", cf0.n, into))
        sign = -np.sign(dot) if outward else np.sign(dot)
        cf = curve_frames(fb, cj, sign=float(sign), second_order=need_flux)
        return patch, fb, bd, cf

    def _point_in_patch(self, patch, q):
        (b1, b2) = patch.grid.breaks1, patch.grid.breaks2
        if not (b1[0] <= q[0] <= b1[-1] and b2[0] <= q[1] <= b2[-1]):
            return False
        if patch.cls is not None:
            return bool(patch.cls.is_active_pts(q[None, :])[0])
        return True

    def _side_rows(self, patch, fb, bd, cf, need_flux):
        """(u_rows, th_rows(vector), thn_rows(scalar), Fu, Fth_vec, Fthn)."""
        u_rows = displacement_rows(bd, patch.ncomp)
        Fu = Fth = Fthn = None
        if patch.theory == "rm":
            th_rows = theta_vector_rows_rm(bd, fb)
            thn_rows = None
            if need_flux:
                ct = patch.material_at(fb)
                eps, kap, gam = rm_strain_rows(bd, fb)
                Nf, Mf, Q = stress_tensors(ct, eps, kap, gam)
                Fu, Fth = rm_flux_rows(Nf, Mf, Q, fb, cf)
        else:
            th_rows = theta_vector_rows_kl(bd, fb)
            thn_rows = theta_n_rows(bd, fb, cf)
            if need_flux:
                ct = patch.material_at(fb, derivatives=True)
                Fu, Fthn, thn_rows = _reorder_kl_flux(kl_flux_rows(bd, fb, cf, ct))
        return u_rows, th_rows, thn_rows, Fu, Fth, Fthn

    def _exact_side_values(self, patch, fb, cf, s, side, need_flux):
        cj = side.curve.jet(s, 2)
        f = self.sample_exact(self.exact, patch, cj.x[:, 0], cj.x[:, 1],
                              order=3 if patch.theory == "kl" else 2)
        u = f.u
        if patch.theory == "rm":
            th = f.theta
            thn = None
            Fu = Fth = Fthn = None
            if need_flux:
                ct = patch.material_at(fb)
                eps, kap, gam = rm_strain_values(f, fb)
                Nf, Mf, Q = stress_tensors(ct, eps, kap, gam)
                Fu, Fth = rm_flux_rows(Nf, Mf, Q, fb, cf)
        else:
            th = kl_theta_values(f, fb)
            th_low = -np.einsum("ni,nai->na", fb.a3, f.du)
            thn = np.einsum("na,na->n", th_low, cf.n_up)
            Fu = Fth = Fthn = None
            if need_flux:
                ct = patch.material_at(fb, derivatives=True)
                Fu, Fthn_val, thn = kl_flux_values(f, fb, cf, ct)
                Fthn = Fthn_val
        return u, th, thn, Fu, Fth, Fthn

    def _assemble_interface(self, term: InterfaceTerm, scatter, b):
        np_ = self.nitsche
        if np_.gamma2 != 1.0:
            raise UnsupportedConfiguration(
                "only one-sided averages (gamma2=1) are supported"
            )
        iface = term.iface
        plus = iface.plus
        minus = iface.minus
        weak_bc = minus.patch < 0
        patch_p = self.patches[plus.patch]
        E = patch_p.gs.laminate.max_young
        tau = patch_p.gs.laminate.thickness
        mu_u, mu_th = np_.mus(E, tau, term.h)
        mixed = (not weak_bc) and (
            patch_p.theory != self.patches[minus.patch].theory
        )
        if mixed and patch_p.theory != "rm":
            raise UnsupportedConfiguration(
                "mixed KL-RM interfaces need the RM patch on the flux side"
            )
        for (s0, s1, _, _) in iface.segments:
            g, w = gauss_rule_01(patch_p.p + 2)
            s = s0 + (s1 - s0) * g
            pa, fb_p, bd_p, cf_p = self._side_eval(plus, s, True, outward=True)
            up, thp, thnp, Fup, Fthp, Fthnp = self._side_rows(pa, fb_p, bd_p, cf_p, True)
            wq = (s1 - s0) * w * cf_p.jac
            gid_p = self._cell_gids(plus.patch, bd_p.idx[0], pa.ncomp)
            if weak_bc:
                data = self._weak_data(term, pa, fb_p, cf_p, s, plus)
                Kb, bb = self._nitsche_blocks_one_sided(
                    pa, up, thp, thnp, Fup, Fthp, Fthnp,
                    data, wq, mu_u, mu_th,
                    term.couple_u, term.couple_theta, np_.gamma1,
                )
                scatter(gid_p, Kb, bb)
                continue
            pb, fb_m, bd_m, cf_m = self._side_eval(minus, s, False, outward=False)
            um, thm, thnm, *_ = self._side_rows(pb, fb_m, bd_m, cf_m, False)
            gid_m = self._cell_gids(minus.patch, bd_m.idx[0], pb.ncomp)
            gids = np.concatenate([gid_p, gid_m])
            ndp = up.shape[-1]
            ndm = um.shape[-1]
            nseg = s.size
            K = np.zeros((ndp + ndm, ndp + ndm))
            bl = np.zeros(ndp + ndm)
            if term.couple_u:
                Ju = np.concatenate([up, -um], axis=-1)
                Fu = np.concatenate([Fup, np.zeros((nseg, 3, ndm))], axis=-1)
                K += _nit_block(Ju, Fu, wq, mu_u, np_.gamma1)
                if self.exact is not None:
                    Fex = self._exact_flux_plus(pa, plus, fb_p, cf_p, s)["Fu"]
                    bl += -np.einsum("nij,ni,n->j", Ju, Fex, wq)
            if term.couple_theta:
                if pa.theory == "kl" and pb.theory == "kl":
                    Jt = np.concatenate([thnp, -thnm], axis=-1)
                    Ft = np.concatenate([Fthnp, np.zeros((nseg, ndm))], axis=-1)
                    K += _nit_block_scalar(Jt, Ft, wq, mu_th, np_.gamma1)
                    if self.exact is not None:
                        Fex = self._exact_flux_plus(pa, plus, fb_p, cf_p, s)["Fthn"]
                        bl += -np.einsum("nj,n,n->j", Jt, Fex, wq)
                else:
                    # vector rotation coupling: RM-RM, or mixed with the KL
                    # side's rotation reconstructed from displacements
                    if Fthp is None:
                        raise UnsupportedConfiguration(
                            "vector rotation coupling requires an RM flux side"
                        )
                    Jt = np.concatenate([thp, -thm], axis=-1)
                    Ft = np.concatenate([Fthp, np.zeros((nseg, 3, ndm))], axis=-1)
                    K += _nit_block(Jt, Ft, wq, mu_th, np_.gamma1)
                    if self.exact is not None:
                        Fex = self._exact_flux_plus(pa, plus, fb_p, cf_p, s)["Fth"]
                        bl += -np.einsum("nij,ni,n->j", Jt, Fex, wq)
            scatter(gids, K, bl if self.exact is not None else None)

    def _exact_flux_plus(self, patch, plus, fb, cf, s):
        key = (id(plus), float(s[0]), float(s[-1]))
        if getattr(self, "_flux_cache_key", None) == key:
            return self._flux_cache
        u, th, thn, Fu, Fth, Fthn = self._exact_side_values(
            patch, fb, cf, s, plus, True
        )
        self._flux_cache = {"Fu": Fu, "Fth": Fth, "Fthn": Fthn}
        self._flux_cache_key = key
        return self._flux_cache

    def _weak_data(self, term, patch, fb, cf, s, side):
        """Dirichlet data (and exact fluxes in manufactured mode) for weak BCs.

        Returns dict with u (N,3), th (N,3), thn (N,) and, when the model has
        a manufactured solution, the exact fluxes for the consistency term.
        """
        n = s.size
        if term.data == "exact":
            if self.exact is None:
                raise InvalidInput("'exact' weak data needs a manufactured solution")
            u, th, thn, Fu, Fth, Fthn = self._exact_side_values(
                patch, fb, cf, s, side, True
            )
            return {"u": u, "th": th, "thn": thn, "Fu": Fu, "Fth": Fth, "Fthn": Fthn}
        if term.data is None or term.data == "zero":
            return {"u": np.zeros((n, 3)), "th": np.zeros((n, 3)),
                    "thn": np.zeros(n), "Fu": None, "Fth": None, "Fthn": None}
        out = term.data(patch, fb, cf, s)
        out.setdefault("Fu", None)
        out.setdefault("Fth", None)
        out.setdefault("Fthn", None)
        return out

    def _nitsche_blocks_one_sided(self, patch, up, thp, thnp, Fup, Fthp, Fthnp,
                                  data, wq, mu_u, mu_th,
                                  couple_u, couple_theta, gamma1):
        nd = up.shape[-1]
        K = np.zeros((nd, nd))
        bl = np.zeros(nd)
        if couple_u:
            K += _nit_block(up, Fup, wq, mu_u, gamma1)
            bl += -gamma1 * np.einsum("nij,ni,n->j", Fup, data["u"], wq) + mu_u * np.einsum(
                "nij,ni,n->j", up, data["u"], wq
            )
            if data["Fu"] is not None:
                bl += -np.einsum("nij,ni,n->j", up, data["Fu"], wq)
        if couple_theta:
            if patch.theory == "kl":
                K += _nit_block_scalar(thnp, Fthnp, wq, mu_th, gamma1)
                bl += -gamma1 * np.einsum("nj,n,n->j", Fthnp, data["thn"], wq) \
                    + mu_th * np.einsum("nj,n,n->j", thnp, data["thn"], wq)
                if data["Fthn"] is not None:
                    bl += -np.einsum("nj,n,n->j", thnp, data["Fthn"], wq)
            else:
                K += _nit_block(thp, Fthp, wq, mu_th, gamma1)
                bl += -gamma1 * np.einsum("nij,ni,n->j", Fthp, data["th"], wq) \
                    + mu_th * np.einsum("nij,ni,n->j", thp, data["th"], wq)
                if data["Fth"] is not None:
                    bl += -np.einsum("nij,ni,n->j", thp, data["Fth"], wq)
        return K, bl

    # -- loads ----------------------------------------------------------------
    def _assemble_load(self, load, b):
        kind = load[0]
        if kind == "body":
            _, pidx, fn = load
            patch = self.patches[pidx]
            for pts, w in patch.interior_rules(patch.p + 1 + self.quad_bump):
                fb = surface_frame(patch.smap, (pts[:, 0], pts[:, 1]), order=2)
                bd = basis_data(patch.space, pts[:, 0], pts[:, 1], 0)
                f = np.asarray(fn(fb, patch.smap.jet(pts[:, 0], pts[:, 1], 0).x))
                if f.shape[-1] != 3:
                    raise InvalidLoad("body load must produce (N,3) forces")
                u_rows = displacement_rows(bd, patch.ncomp)
                bl = np.einsum("nij,ni,n->j", u_rows, f, w * fb.sqa)
                gids = self._cell_gids(pidx, bd.idx[0], patch.ncomp)
                keep = gids >= 0
                b[gids[keep]] += bl[keep]
        elif kind == "edge":
            _, pidx, edge, fn = load
            patch = self.patches[pidx]
            curve = patch.edge_curve(edge)
            breaks = patch.edge_element_breaks(edge)
            for e in range(breaks.size - 1):
                g, w = gauss_rule_01(patch.p + 2)
                s = breaks[e] + (breaks[e + 1] - breaks[e]) * g
                cj = curve.jet(s, 1)
                fb = surface_frame(patch.smap, (cj.x[:, 0], cj.x[:, 1]), order=2)
                xp = np.einsum("nli,nl->ni", fb.a, cj.d1[:, 0, :])
                jac = np.linalg.norm(xp, axis=-1)
                bd = basis_data(patch.space, cj.x[:, 0], cj.x[:, 1], 0)
                f = np.asarray(fn(fb, patch.smap.jet(cj.x[:, 0], cj.x[:, 1], 0).x))
                u_rows = displacement_rows(bd, patch.ncomp)
                bl = np.einsum(
                    "nij,ni,n->j", u_rows, f, (breaks[e + 1] - breaks[e]) * w * jac
                )
                gids = self._cell_gids(pidx, bd.idx[0], patch.ncomp)
                keep = gids >= 0
                b[gids[keep]] += bl[keep]
        elif kind == "point":
            _, pidx, xi, vec = load
            patch = self.patches[pidx]
            bd = basis_data(patch.space, np.array([xi[0]]), np.array([xi[1]]), 0)
            gids = self._cell_gids(pidx, bd.idx[0], patch.ncomp)
            rows = displacement_rows(bd, patch.ncomp)
            bl = np.einsum("nij,ni->j", rows, vec[None, :])
            keep = gids >= 0
            b[gids[keep]] += bl[keep]
        elif kind == "corner":
            _, pidx, xi, mag = load
            patch = self.patches[pidx]
            fb = surface_frame(patch.smap, (np.array([xi[0]]), np.array([xi[1]])), 2)
            self._assemble_load(("point", pidx, xi, mag * fb.a3[0]), b)

    # -- strong Dirichlet -------------------------------------------------------
    def _apply_strong_bc(self, pidx, edge, comps, values):
        patch = self.patches[pidx]
        kv = patch.edge_kv(edge)
        sids = patch.edge_scalar_ids(edge)
        curve = patch.edge_curve(edge)
        for comp in comps:
            if values == 0:
                coef = np.zeros(kv.n)
            else:
                coef = l2_project_edge(kv, lambda t: values(comp, t))
            gids = self.dofmap.gids(pidx, sids, comp)
            for g_, c_ in zip(gids, coef):
                self.dofmap.fix(g_, c_)

    def exact_trace(self, pidx, edge):
        """Edge data callables from the manufactured solution."""
        patch = self.patches[pidx]
        curve = patch.edge_curve(edge)

        def values(comp, t):
            cj = curve.jet(t, 0)
            f = self.sample_exact(self.exact, patch, cj.x[:, 0], cj.x[:, 1], order=1)
            if comp < 3:
                return f.u[:, comp]
            fb = surface_frame(patch.smap, (cj.x[:, 0], cj.x[:, 1]), order=2)
            return np.einsum("ni,ni->n", f.theta, fb.a[:, comp - 3, :])

        return values

    # -- solve ------------------------------------------------------------------
    def solve(self, diagnostic=False):
        K, b = self.assemble()
        dm = self.dofmap
        x_red, report = solve_reduced(K, b, dm)
        if not report.spd and not diagnostic:
            return None, report
        x_full = dm.expand(x_red) if x_red is not None else dm.expand(
            np.zeros(dm.n_free)
        )
        return FieldSolution(self, x_full), report


def _jet_slice(cj, k):
    from .geometry import MapJet

    out = MapJet(cj.x[k : k + 1])
    out.d1 = cj.d1[k : k + 1]
    if cj.d2 is not None:
        out.d2 = cj.d2[k : k + 1]
    return out


def _reorder_kl_flux(res):
    Tn, Mnn, thn = res
    return Tn, Mnn, thn


def _nit_block(J, F, wq, mu, gamma1):
    """Vector-valued Nitsche block: -J.F - g1 F.J + mu J.J summed over points."""
    return (
        -np.einsum("nij,nik,n->jk", J, F, wq)
        - gamma1 * np.einsum("nij,nik,n->kj", J, F, wq)
        + mu * np.einsum("nij,nik,n->jk", J, J, wq)
    )


def _nit_block_scalar(J, F, wq, mu, gamma1):
    return (
        -np.einsum("nj,nk,n->jk", J, F, wq)
        - gamma1 * np.einsum("nj,nk,n->kj", J, F, wq)
        + mu * np.einsum("nj,nk,n->jk", J, J, wq)
    )


def _reduce_system(K: sp.csr_matrix, b: np.ndarray, dm: DofMap):
    rep = dm.rep
    si = dm.solve_index
    coo = K.tocoo()
    r = si[rep[coo.row]]
    c = si[rep[coo.col]]
    fixed_c = dm.fixed_mask[rep[coo.col]]
    keep = (r >= 0) & (c >= 0)
    Kff = sp.coo_matrix(
        (coo.data[keep], (r[keep], c[keep])), shape=(dm.n_free, dm.n_free)
    ).tocsr()
    bf = np.zeros(dm.n_free)
    sel = si[rep] >= 0
    np.add.at(bf, si[rep[np.nonzero(sel)[0]]], b[sel])
    move = (r >= 0) & fixed_c
    if np.any(move):
        np.add.at(bf, r[move], -coo.data[move] * dm.fixed_val[rep[coo.col[move]]])
    return Kff, bf


def solve_reduced(K, b, dm: DofMap):
    """Jacobi-scaled sparse Cholesky with SPD gate and condition estimate."""
    Kff, bf = _reduce_system(K, b, dm)
    n = Kff.shape[0]
    diag = Kff.diagonal()
    if np.any(diag <= 0.0):
        return None, SPDReport(False, "non-positive diagonal entry", n_dofs=n)
    d = 1.0 / np.sqrt(diag)
    D = sp.diags(d)
    Ks = (D @ Kff @ D).tocoo()
    bs = d * bf
    A = spmatrix(Ks.data, Ks.row.astype(int), Ks.col.astype(int), (n, n))
    t0 = time.perf_counter()
    try:
        F = cholmod.symbolic(A)
        cholmod.numeric(A, F)
    except ArithmeticError as exc:
        return None, SPDReport(False, f"Cholesky breakdown: {exc}", n_dofs=n,
                               factor_seconds=time.perf_counter() - t0)
    tfac = time.perf_counter() - t0
    rhs = cvxmat(bs)
    cholmod.solve(F, rhs)
    y = np.array(rhs).ravel()
    x = d * y
    Ks_csr = Ks.tocsr()
    rnorm = np.linalg.norm(Ks_csr @ y - bs) / max(np.linalg.norm(bs), 1e-300)
    # condition estimate of the scaled matrix: power iteration for the top,
    # inverse iteration through the factor for the bottom
    rng = np.random.default_rng(0)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    lmax = 1.0
    for _ in range(20):
        v = Ks_csr @ v
        lmax = np.linalg.norm(v)
        v /= max(lmax, 1e-300)
    u = rng.normal(size=n)
    u /= np.linalg.norm(u)
    lmin = 1.0
    for _ in range(20):
        um = cvxmat(u)
        cholmod.solve(F, um)
        u2 = np.array(um).ravel()
        nrm = np.linalg.norm(u2)
        lmin = 1.0 / max(nrm, 1e-300)
        u = u2 / nrm
    report = SPDReport(True, "ok", residual=float(rnorm),
                       cond_estimate=float(lmax / lmin), n_dofs=n,
                       factor_seconds=tfac)
    return x, report
