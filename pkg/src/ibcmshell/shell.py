"""Generalized strain, stress, and flux operators for RM and KL kinematics.

Everything is expressed per quadrature point as linear "rows" over the local
DOFs: an array ``X[n, ..., dof]`` gives the operator applied to each basis
function, with DOFs ordered scalar-major, component-fastest
(dof = j * ncomp + comp). Displacement components are Cartesian; RM rotation
components are covariant on the patch's own basis. Parallel *_values
functions evaluate the same operators on a smooth exact field.

Strain and moment tensors are kept in full (2, 2) index form; Voigt appears
only inside the material matrices.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

__all__ = [
    "BasisData",
    "ExactField",
    "rm_strain_rows",
    "kl_strain_rows",
    "rm_strain_values",
    "kl_strain_values",
    "stress_tensors",
    "rm_flux_rows",
    "kl_flux_rows",
    "theta_vector_rows_rm",
    "theta_vector_rows_kl",
    "corner_force",
]

NCOMP = {"kl": 3, "rm": 5}


@dataclass
class BasisData:
    """Scalar basis values/derivatives at a batch of points of one patch.

    idx: (N, nloc) lexicographic scalar function ids; N/dN/d2N/d3N as needed.
    """

    idx: np.ndarray
    N: np.ndarray
    dN: np.ndarray | None = None
    d2N: np.ndarray | None = None
    d3N: np.ndarray | None = None

    @property
    def nloc(self):
        return self.N.shape[1]


def basis_data(space, x1, x2, order: int) -> BasisData:
    """Pack TensorSplineSpace tables into symmetric derivative arrays."""
    idx, tabs = space.eval_scalar(x1, x2, order)
    n, nloc = tabs[(0, 0)].shape
    bd = BasisData(idx=idx, N=tabs[(0, 0)])
    if order >= 1:
        bd.dN = np.stack([tabs[(1, 0)], tabs[(0, 1)]], axis=-1)
    if order >= 2:
        d2 = np.empty((n, nloc, 2, 2))
        d2[..., 0, 0] = tabs[(2, 0)]
        d2[..., 0, 1] = d2[..., 1, 0] = tabs[(1, 1)]
        d2[..., 1, 1] = tabs[(0, 2)]
        bd.d2N = d2
    if order >= 3:
        d3 = np.empty((n, nloc, 2, 2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    m = i + j + k
                    d3[..., i, j, k] = tabs[(3 - m, m)]
        bd.d3N = d3
    return bd


@dataclass
class ExactField:
    """Smooth field samples: u (N,3) with derivatives; optional rotations.

    du (N,2,3), d2u (N,2,2,3), d3u (N,2,2,2,3); theta/dtheta are the rotation
    vector and its parametric gradient (tangent-plane, Euclidean components).
    """

    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray | None = None
    d3u: np.ndarray | None = None
    theta: np.ndarray | None = None
    dtheta: np.ndarray | None = None


def _sym2(T):
    return 0.5 * (T + np.swapaxes(T, 1, 2))


# ---------------------------------------------------------------------------
# strain operators
# ---------------------------------------------------------------------------


def rm_strain_rows(bd: BasisData, fb):
    """Membrane/bending/shear rows for (u1,u2,u3,th1,th2) DOFs.

    eps, kap: (N,2,2,ndof); gam: (N,2,ndof), ndof = 5*nloc.
    """
    n, nloc = bd.N.shape
    ndof = 5 * nloc
    eps = np.zeros((n, 2, 2, ndof))
    kap = np.zeros((n, 2, 2, ndof))
    gam = np.zeros((n, 2, ndof))
    # u block: 2 eps_ab = a_a . u_,b + a_b . u_,a
    eu = np.einsum("nai,njb->nabij", fb.a, bd.dN)
    ku = np.einsum("nai,njb->nabij", fb.da3, bd.dN)
    gu = np.einsum("ni,nja->naij", fb.a3, bd.dN)  # a3 . u_,a rows
    # theta block (covariant components c = 0,1)
    # 2 kap_ab += th_{a,b} + th_{b,a} - 2 Gam^c_ab th_c
    kt = np.zeros((n, 2, 2, 2, nloc))  # [a, b, c, j]
    for a in range(2):
        for b in range(2):
            for c in range(2):
                t = -fb.gam[:, c, a, b, None] * bd.N
                if a == c:
                    t = t + 0.5 * bd.dN[:, :, b]
                if b == c:
                    t = t + 0.5 * bd.dN[:, :, a]
                kt[:, a, b, c, :] = t
    for comp in range(3):
        eps[..., comp::5] = _sym2(eu[..., comp, :])
        kap[..., comp::5] = _sym2(ku[..., comp, :])
        gam[..., comp::5] = gu[..., comp, :]
    for c in range(2):
        kap[..., (3 + c)::5] = kt[:, :, :, c, :]
        gam[:, c, (3 + c)::5] += bd.N
    return eps, kap, gam


def kl_strain_rows(bd: BasisData, fb):
    """Membrane/bending rows for (u1,u2,u3) DOFs; requires d2N.

    Substituting th_a = -a3 . u_,a into the RM bending strain collapses to
    kap_ab = -a3 . (u_,ab - Gam^g_ab u_,g), the covariant second derivative
    projected on the normal; the a3_{,a} terms cancel exactly.
    """
    n, nloc = bd.N.shape
    ndof = 3 * nloc
    eps = np.zeros((n, 2, 2, ndof))
    kap = np.zeros((n, 2, 2, ndof))
    eu = np.einsum("nai,njb->nabij", fb.a, bd.dN)
    # cov2[n,j,a,b] = u_,ab - Gam^g_ab u_,g (scalar part)
    cov2 = bd.d2N - np.einsum("ngab,njg->njab", fb.gam, bd.dN)
    ku = -np.einsum("ni,njab->nabij", fb.a3, cov2)
    for comp in range(3):
        eps[..., comp::3] = _sym2(eu[..., comp, :])
        kap[..., comp::3] = ku[..., comp, :]
    return eps, kap


def rm_strain_values(f: ExactField, fb):
    """RM generalized strains of a smooth field (theta given as a vector)."""
    eps = _sym2(np.einsum("nai,nbi->nab", fb.a, f.du))
    th_low = np.einsum("ni,nai->na", f.theta, fb.a)
    dth_low = np.einsum("nbi,nai->nab", f.dtheta, fb.a) + np.einsum(
        "ni,nabi->nab", f.theta, fb.da
    )  # dth_low[a,b] = th_{a,b}
    kap = _sym2(
        dth_low - np.einsum("ngab,ng->nab", fb.gam, th_low)
        + np.einsum("nai,nbi->nab", fb.da3, f.du)
    )
    gam = np.einsum("ni,nai->na", fb.a3, f.du) + th_low
    return eps, kap, gam


def kl_strain_values(f: ExactField, fb):
    eps = _sym2(np.einsum("nai,nbi->nab", fb.a, f.du))
    cov2 = f.d2u - np.einsum("ngab,ngi->nabi", fb.gam, f.du)
    kap = -np.einsum("ni,nabi->nab", fb.a3, cov2)
    return eps, kap


def kl_theta_values(f: ExactField, fb):
    """Rotation vector implied by KL kinematics: -(a3 . u_,a) a^a."""
    th_low = -np.einsum("ni,nai->na", fb.a3, f.du)
    return np.einsum("na,nai->ni", th_low, fb.acon)


def stress_tensors(ct, eps, kap, gam=None):
    """Contract covariant stiffness with strain rows/values.

    Works on (N,2,2,...) rows and (N,2,2) values alike; returns (Nf, Mf[, Q]).
    """
    extra = "j" if eps.ndim == 4 else ""
    Nf = np.einsum(f"nabcd,ncd{extra}->nab{extra}", ct["A"], eps) + np.einsum(
        f"nabcd,ncd{extra}->nab{extra}", ct["B"], kap
    )
    Mf = np.einsum(f"nabcd,ncd{extra}->nab{extra}", ct["B"], eps) + np.einsum(
        f"nabcd,ncd{extra}->nab{extra}", ct["D"], kap
    )
    if gam is None:
        return Nf, Mf
    Q = np.einsum(f"nab,nb{extra}->na{extra}", ct["S"], gam)
    return Nf, Mf, Q


# ---------------------------------------------------------------------------
# fluxes
# ---------------------------------------------------------------------------


def rm_flux_rows(Nf, Mf, Q, fb, cf):
    """RM interface fluxes N_n (force) and M_n (moment), Euclidean components.

    N_n = [(N^ab - b^a_g M^gb) n_b] a_a + (Q^a n_a) a3
    M_n = (M^ab n_a n_b) n + (M^ab n_a t_b) t
    Accepts rows (trailing dof axis) or values.
    """
    extra = "j" if Nf.ndim == 4 else ""
    eff = Nf - np.einsum(f"nag,ngb{extra}->nab{extra}", fb.bmix, Mf)
    Na = np.einsum(f"nab{extra},nb->na{extra}", eff, cf.n_low)
    Qn = np.einsum(f"na{extra},na->n{extra}", Q, cf.n_low)
    Nn = np.einsum(f"na{extra},nai->ni{extra}", Na, fb.a) + np.einsum(
        f"n{extra},ni->ni{extra}", Qn, fb.a3
    )
    Mnn = np.einsum(f"nab{extra},na,nb->n{extra}", Mf, cf.n_low, cf.n_low)
    Mnt = np.einsum(f"nab{extra},na,nb->n{extra}", Mf, cf.n_low, cf.t_low)
    Mn = np.einsum(f"n{extra},ni->ni{extra}", Mnn, cf.n) + np.einsum(
        f"n{extra},ni->ni{extra}", Mnt, cf.t
    )
    return Nn, Mn


def _kl_strain_derivative_rows(bd: BasisData, fb):
    """Parametric gradients of the KL strain rows: deps/dkap (N,2,2,2,ndof).

    Last-but-one axis is the differentiation direction mu.
    """
    n, nloc = bd.N.shape
    # d/dmu eps_ab = sym(a_{a,mu} . u_,b + a_a . u_,b mu)
    t = np.einsum("nami,njb->nabmij", fb.da, bd.dN) + np.einsum(
        "nai,njbm->nabmij", fb.a, bd.d2N
    )
    deps_u = 0.5 * (t + t.transpose(0, 2, 1, 3, 4, 5))
    cov2 = bd.d2N - np.einsum("ngab,njg->njab", fb.gam, bd.dN)
    dcov2 = (
        bd.d3N
        - np.einsum("ngabm,njg->njabm", fb.dgam, bd.dN)
        - np.einsum("ngab,njgm->njabm", fb.gam, bd.d2N)
    )
    dkap_u = -(
        np.einsum("nmi,njab->nabmij", fb.da3, cov2)
        + np.einsum("ni,njabm->nabmij", fb.a3, dcov2)
    )
    ndof = 3 * nloc
    deps = np.zeros((n, 2, 2, 2, ndof))
    dkap = np.zeros((n, 2, 2, 2, ndof))
    for comp in range(3):
        deps[..., comp::3] = deps_u[..., comp, :]
        dkap[..., comp::3] = dkap_u[..., comp, :]
    return deps, dkap


def _kl_flux_core(Nf, Mf, dM, fb, cf):
    """Shared T_n / M_nn algebra given moment gradients dM[n,a,b,mu,...]."""
    extra = "j" if Nf.ndim == 4 else ""
    Mnn = np.einsum(f"nab{extra},na,nb->n{extra}", Mf, cf.n_low, cf.n_low)
    Mnt = np.einsum(f"nab{extra},na,nb->n{extra}", Mf, cf.n_low, cf.t_low)
    # in-plane ersatz components
    Ta = (
        np.einsum(f"nab{extra},nb->na{extra}", Nf, cf.n_low)
        - np.einsum(f"nag,ngb{extra},nb->na{extra}", fb.bmix, Mf, cf.n_low)
        - np.einsum(f"n{extra},nag,ng->na{extra}", Mnt, fb.bmix, cf.t_up)
    )
    # covariant divergence M^{ab}_{|b} = M^{ab}_{,b} + Gam^a_{gb} M^{gb} + Gam^b_{gb} M^{ag}
    covdiv = (
        np.einsum(f"nabb{extra}->na{extra}", dM)
        + np.einsum(f"nagb,ngb{extra}->na{extra}", fb.gam, Mf)
        + np.einsum(f"nbgb,nag{extra}->na{extra}", fb.gam, Mf)
    )
    # arc-length derivative of M_nt along the interface
    dMnt_ds = (
        np.einsum(f"nabm{extra},nm,na,nb->n{extra}", dM, cf.xi_d, cf.n_low, cf.t_low)
        + np.einsum(f"nab{extra},na,nb->n{extra}", Mf, cf.n_low_d, cf.t_low)
        + np.einsum(f"nab{extra},na,nb->n{extra}", Mf, cf.n_low, cf.t_low_d)
    )
    T3 = np.einsum(f"na{extra},na->n{extra}", covdiv, cf.n_low) + dMnt_ds / (
        cf.jac[:, None] if extra else cf.jac
    )
    Tn = np.einsum(f"na{extra},nai->ni{extra}", Ta, fb.a) + np.einsum(
        f"n{extra},ni->ni{extra}", T3, fb.a3
    )
    return Tn, Mnn


def kl_flux_rows(bd: BasisData, fb, cf, ct):
    """KL flux rows: ersatz traction T_n (N,3,ndof), moment M_nn, theta_n.

    Needs third-order basis and frame data plus material derivatives (the
    moment gradient differentiates both the strains and the covariant
    stiffness).
    """
    if fb.dgam is None or "dA" not in ct:
        raise InvalidInput("KL fluxes need third-order frame and material data")
    eps, kap = kl_strain_rows(bd, fb)
    Nf, Mf = stress_tensors(ct, eps, kap)
    deps, dkap = _kl_strain_derivative_rows(bd, fb)
    dM = (
        np.einsum("nabcdm,ncdj->nabmj", ct["dB"], eps)
        + np.einsum("nabcd,ncdmj->nabmj", ct["B"], deps)
        + np.einsum("nabcdm,ncdj->nabmj", ct["dD"], kap)
        + np.einsum("nabcd,ncdmj->nabmj", ct["D"], dkap)
    )
    Tn, Mnn = _kl_flux_core(Nf, Mf, dM, fb, cf)
    th_n = theta_n_rows(bd, fb, cf)
    return Tn, Mnn, th_n


def kl_flux_values(f: ExactField, fb, cf, ct):
    """KL fluxes of an exact field (for consistency right-hand sides)."""
    eps, kap = kl_strain_values(f, fb)
    Nf, Mf = stress_tensors(ct, eps, kap)
    # value-level strain gradients
    t = np.einsum("nami,nbi->nabm", fb.da, f.du) + np.einsum(
        "nai,nbmi->nabm", fb.a, f.d2u
    )
    deps = 0.5 * (t + t.transpose(0, 2, 1, 3))
    cov2 = f.d2u - np.einsum("ngab,ngi->nabi", fb.gam, f.du)
    dcov2 = (
        f.d3u
        - np.einsum("ngabm,ngi->nabmi", fb.dgam, f.du)
        - np.einsum("ngab,ngmi->nabmi", fb.gam, f.d2u)
    )
    dkap = -(
        np.einsum("nmi,nabi->nabm", fb.da3, cov2)
        + np.einsum("ni,nabmi->nabm", fb.a3, dcov2)
    )
    dM = (
        np.einsum("nabcdm,ncd->nabm", ct["dB"], eps)
        + np.einsum("nabcd,ncdm->nabm", ct["B"], deps)
        + np.einsum("nabcdm,ncd->nabm", ct["dD"], kap)
        + np.einsum("nabcd,ncdm->nabm", ct["D"], dkap)
    )
    Tn, Mnn = _kl_flux_core(Nf, Mf, dM, fb, cf)
    th_low = -np.einsum("ni,nai->na", fb.a3, f.du)
    th_n = np.einsum("na,na->n", th_low, cf.n_up)
    return Tn, Mnn, th_n


def theta_n_rows(bd: BasisData, fb, cf):
    """KL scalar rotation rows theta_n = -(a3 . u_,a) n^a over u DOFs."""
    n, nloc = bd.N.shape
    rows = np.zeros((n, 3 * nloc))
    tu = -np.einsum("ni,nja,na->nij", fb.a3, bd.dN, cf.n_up)
    for comp in range(3):
        rows[:, comp::3] = tu[:, comp, :]
    return rows


def theta_vector_rows_rm(bd: BasisData, fb):
    """Euclidean rotation-vector rows theta_c a^c over RM DOFs (N,3,ndof)."""
    n, nloc = bd.N.shape
    rows = np.zeros((n, 3, 5 * nloc))
    for c in range(2):
        rows[..., (3 + c)::5] = fb.acon[:, c, :, None] * bd.N[:, None, :]
    return rows


def theta_vector_rows_kl(bd: BasisData, fb):
    """Euclidean rotation-vector rows -(a3 . u_,a) a^a over KL u DOFs."""
    n, nloc = bd.N.shape
    rows = np.zeros((n, 3, 3 * nloc))
    t = -np.einsum("ni,nja,nak->nkij", fb.a3, bd.dN, fb.acon)
    for comp in range(3):
        rows[..., comp::3] = t[..., comp, :]
    return rows


def displacement_rows(bd: BasisData, ncomp: int):
    """Euclidean displacement rows (N,3,ndof) for either theory."""
    n, nloc = bd.N.shape
    rows = np.zeros((n, 3, ncomp * nloc))
    for comp in range(3):
        rows[:, comp, comp::ncomp] = bd.N
    return rows


def corner_force(m_t_plus: float, m_t_minus: float) -> float:
    """Corner force from the one-sided twisting-moment limits."""
    return m_t_plus - m_t_minus
