"""Laminate constitutive pipeline.

Layer stiffness in the orthotropic axes, rotation to the shared local
orthonormal basis, closed-form through-thickness integration to the membrane/
coupling/bending/shear matrices, and the per-point transformation of those
matrices to covariant components on a surface frame (plus its derivative,
needed by the ersatz flux).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

__all__ = [
    "Layer",
    "Laminate",
    "GeneralizedStiffness",
    "layer_matrices",
    "laminate_abds",
    "covariant_tensors",
]

# Voigt pair for each tensor slot: 11, 22, 12 and 21 map to 0, 1, 2, 2
_VOIGT = np.array([[0, 2], [2, 1]])


@dataclass(frozen=True)
class Layer:
    """Homogeneous orthotropic layer. Angle in radians, SI units."""

    E1: float
    E2: float
    nu12: float
    G12: float
    G31: float
    G32: float
    angle: float = 0.0
    thickness: float = 1.0

    def __post_init__(self):
        if min(self.E1, self.E2, self.G12, self.G31, self.G32) <= 0.0:
            raise InvalidInput("moduli must be positive")
        if self.thickness <= 0.0:
            raise InvalidInput("layer thickness must be positive")
        # plane-stress stiffness positive definite
        if not (0.0 <= self.nu12 < np.sqrt(self.E1 / self.E2)):
            raise InvalidInput("nu12 outside [0, sqrt(E1/E2))")

    @property
    def nu21(self) -> float:
        # reciprocity; the compliance matrix needs it but the sources only
        # give nu12
        return self.nu12 * self.E2 / self.E1


def _rotation_matrices(angle: float):
    c, s = np.cos(angle), np.sin(angle)
    TL = np.array(
        [
            [c * c, s * s, -2.0 * s * c],
            [s * s, c * c, 2.0 * s * c],
            [s * c, -s * c, c * c - s * s],
        ]
    )
    TT = np.array([[c, -s], [s, c]])
    return TL, TT


def layer_matrices(layer: Layer, alpha_s: float = 5.0 / 6.0):
    """In-plane and transverse stiffness of one layer in the shared basis.

    Returns (cL, cT): the 3x3 plane-stress and 2x2 transverse-shear stiffness
    matrices rotated by the lamination angle; alpha_s scales the transverse
    compliance (shear correction).
    """
    compL = np.array(
        [
            [1.0 / layer.E1, -layer.nu12 / layer.E1, 0.0],
            [-layer.nu21 / layer.E2, 1.0 / layer.E2, 0.0],
            [0.0, 0.0, 1.0 / layer.G12],
        ]
    )
    try:
        cL = np.linalg.inv(compL)
    except np.linalg.LinAlgError as exc:
        raise InvalidInput("non-invertible layer compliance") from exc
    cT = np.diag([alpha_s * layer.G31, alpha_s * layer.G32])
    TL, TT = _rotation_matrices(layer.angle)
    return TL @ cL @ TL.T, TT @ cT @ TT.T


@dataclass
class Laminate:
    """Stack of layers, midsurface at the half-thickness plane."""

    layers: list
    alpha_s: float = 5.0 / 6.0

    def __post_init__(self):
        if not self.layers:
            raise InvalidInput("laminate needs at least one layer")

    @property
    def thickness(self) -> float:
        return sum(l.thickness for l in self.layers)

    @property
    def interfaces(self) -> np.ndarray:
        """xi3 coordinates of the layer interfaces, bottom at -thickness/2."""
        z = np.concatenate([[0.0], np.cumsum([l.thickness for l in self.layers])])
        return z - self.thickness / 2.0

    @property
    def max_young(self) -> float:
        return max(max(l.E1, l.E2) for l in self.layers)

    def scaled(self, thickness: float) -> "Laminate":
        """Same layup stretched to a new total thickness."""
        f = thickness / self.thickness
        return Laminate(
            [Layer(l.E1, l.E2, l.nu12, l.G12, l.G31, l.G32, l.angle,
                   l.thickness * f) for l in self.layers],
            self.alpha_s,
        )


@dataclass
class GeneralizedStiffness:
    """Thickness-integrated stiffness in the local orthonormal basis.

    A (N/m), B (N), D (N m) are 3x3 Voigt matrices; S (N/m) is 2x2. ``abar4``
    etc. are the same data expanded to 4-index tensor form, ready for the
    covariant transformation.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    S: np.ndarray
    laminate: Laminate
    abar4: np.ndarray = field(init=False)
    bbar4: np.ndarray = field(init=False)
    dbar4: np.ndarray = field(init=False)

    def __post_init__(self):
        self.abar4 = _voigt_to_tensor(self.A)
        self.bbar4 = _voigt_to_tensor(self.B)
        self.dbar4 = _voigt_to_tensor(self.D)


def _voigt_to_tensor(M: np.ndarray) -> np.ndarray:
    out = np.empty((2, 2, 2, 2))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                for d in range(2):
                    out[a, b, c, d] = M[_VOIGT[a, b], _VOIGT[c, d]]
    return out


def laminate_abds(lam: Laminate) -> GeneralizedStiffness:
    """Integrate the layer stiffnesses through the thickness.

    The integrands are polynomials of degree <= 2 in xi3, so each layer
    contributes in closed form.
    """
    A = np.zeros((3, 3))
    B = np.zeros((3, 3))
    D = np.zeros((3, 3))
    S = np.zeros((2, 2))
    z = lam.interfaces
    for k, layer in enumerate(lam.layers):
        cL, cT = layer_matrices(layer, lam.alpha_s)
        z0, z1 = z[k], z[k + 1]
        A += cL * (z1 - z0)
        B += cL * (z1**2 - z0**2) / 2.0
        D += cL * (z1**3 - z0**3) / 3.0
        S += cT * (z1 - z0)
    return GeneralizedStiffness(A, B, D, S, lam)


def local_frame_vectors(fb):
    """Local orthonormal basis n1 = a1/|a1|, n2 = a^2/|a^2| per point."""
    a1 = fb.a[:, 0, :]
    a2c = fb.acon[:, 1, :]
    n1 = a1 / np.linalg.norm(a1, axis=-1, keepdims=True)
    n2 = a2c / np.linalg.norm(a2c, axis=-1, keepdims=True)
    return n1, n2


def _local_frame_with_derivs(fb):
    n1, n2 = local_frame_vectors(fb)
    a1 = fb.a[:, 0, :]
    a2c = fb.acon[:, 1, :]
    la1 = np.linalg.norm(a1, axis=-1)
    la2 = np.linalg.norm(a2c, axis=-1)
    # d/dm of v/|v| = dv/|v| - v (v.dv)/|v|^3
    da1 = fb.da[:, 0, :, :]  # a_{1,m}: (N,2,3)
    da2c = fb.dacon[:, 1, :, :]
    dn1 = da1 / la1[:, None, None] - a1[:, None, :] * np.einsum(
        "ni,nmi->nm", a1, da1
    )[:, :, None] / la1[:, None, None] ** 3
    dn2 = da2c / la2[:, None, None] - a2c[:, None, :] * np.einsum(
        "ni,nmi->nm", a2c, da2c
    )[:, :, None] / la2[:, None, None] ** 3
    return n1, n2, dn1, dn2


def covariant_tensors(gs: GeneralizedStiffness, fb, derivatives: bool = False):
    """Covariant-component constitutive tensors at the frame points.

    Returns a dict with 'A', 'B', 'D' of shape (N,2,2,2,2) and 'S' (N,2,2).
    With ``derivatives=True`` (third-order frames) adds 'dA', 'dB', 'dD', 'dS'
    with a trailing derivative axis.
    """
    if derivatives:
        n1, n2, dn1, dn2 = _local_frame_with_derivs(fb)
    else:
        n1, n2 = local_frame_vectors(fb)
    nvec = np.stack([n1, n2], axis=1)  # (N,2,3)
    C = np.einsum("npi,nai->npa", nvec, fb.acon)  # C[p,a] = n_p . a^a
    out = {
        "A": np.einsum("pqrs,npa,nqb,nrc,nsd->nabcd", gs.abar4, C, C, C, C),
        "B": np.einsum("pqrs,npa,nqb,nrc,nsd->nabcd", gs.bbar4, C, C, C, C),
        "D": np.einsum("pqrs,npa,nqb,nrc,nsd->nabcd", gs.dbar4, C, C, C, C),
        "S": np.einsum("pq,npa,nqb->nab", gs.S, C, C),
    }
    if derivatives:
        dnvec = np.stack([dn1, dn2], axis=1)  # (N,2,2,3): [p, m, i]
        dC = np.einsum("npmi,nai->npam", dnvec, fb.acon) + np.einsum(
            "npi,nami->npam", nvec, fb.dacon
        )
        for key, T4 in (("dA", gs.abar4), ("dB", gs.bbar4), ("dD", gs.dbar4)):
            out[key] = (
                np.einsum("pqrs,npam,nqb,nrc,nsd->nabcdm", T4, dC, C, C, C)
                + np.einsum("pqrs,npa,nqbm,nrc,nsd->nabcdm", T4, C, dC, C, C)
                + np.einsum("pqrs,npa,nqb,nrcm,nsd->nabcdm", T4, C, C, dC, C)
                + np.einsum("pqrs,npa,nqb,nrc,nsdm->nabcdm", T4, C, C, C, dC)
            )
        out["dS"] = np.einsum("pq,npam,nqb->nabm", gs.S, dC, C) + np.einsum(
            "pq,npa,nqbm->nabm", gs.S, C, dC
        )
    return out
