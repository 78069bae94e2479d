"""Error norms, convergence harness, and the crack-tip membrane reference."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, UnsupportedConfiguration
from .geometry import MapJet, surface_frame
from .shell import ExactField

__all__ = [
    "ManufacturedSolution",
    "SinSinSolution",
    "PolySolution",
    "ErrorReport",
    "ConvergenceStudy",
    "error_norms",
    "fit_rate",
    "folias_reference",
    "study_to_csv",
]


class ManufacturedSolution:
    """Closed-form displacement (and rotation) field over the main patch's
    parametric rectangle; subclasses provide jets up to third order."""

    def ujet(self, x1, x2, order: int) -> MapJet:
        raise NotImplementedError

    thetajet = None


class SinSinSolution(ManufacturedSolution):
    """u_i = U_i sin(pi n1 x1) sin(pi n2 x2); optional rotation amplitudes.

    The rotation field uses the in-plane Cartesian carriers, matching the
    covariant components on an identity-mapped plate.
    """

    def __init__(self, amp=(0.1, 0.1, 0.1), n1=2, n2=2, theta_amp=None):
        self.amp = np.asarray(amp, dtype=float)
        self.k1 = np.pi * n1
        self.k2 = np.pi * n2
        self.theta_amp = None if theta_amp is None else np.asarray(theta_amp, float)
        if self.theta_amp is not None:
            self.thetajet = self._thetajet

    def _jet(self, x1, x2, order, carriers):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        k1, k2 = self.k1, self.k2
        s1, c1 = np.sin(k1 * x1), np.cos(k1 * x1)
        s2, c2 = np.sin(k2 * x2), np.cos(k2 * x2)

        def term(d1, d2):
            f1 = (s1, k1 * c1, -k1**2 * s1, -k1**3 * c1)[d1]
            f2 = (s2, k2 * c2, -k2**2 * s2, -k2**3 * c2)[d2]
            return np.einsum("n,c->nc", f1 * f2, carriers)

        jet = MapJet(term(0, 0))
        n = x1.size
        if order >= 1:
            jet.d1 = np.stack([term(1, 0), term(0, 1)], axis=1)
        if order >= 2:
            d2 = np.empty((n, 2, 2, 3))
            d2[:, 0, 0] = term(2, 0)
            d2[:, 0, 1] = d2[:, 1, 0] = term(1, 1)
            d2[:, 1, 1] = term(0, 2)
            jet.d2 = d2
        if order >= 3:
            d3 = np.empty((n, 2, 2, 2, 3))
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        m = i + j + k
                        d3[:, i, j, k] = term(3 - m, m)
            jet.d3 = d3
        return jet

    def ujet(self, x1, x2, order):
        return self._jet(x1, x2, order, self.amp)

    def _thetajet(self, x1, x2, order):
        carriers = np.array(
            [self.theta_amp[0], self.theta_amp[1], 0.0]
        )
        return self._jet(x1, x2, order, carriers)


class PolySolution(ManufacturedSolution):
    """Polynomial field u_i = sum_k c[i,k1,k2] x1^k1 x2^k2 (exactness tests).

    With ``theta``: rotation vector with polynomial in-plane components of the
    same monomial layout.
    """

    def __init__(self, coeffs, theta_coeffs=None):
        self.c = np.asarray(coeffs, dtype=float)  # (3, m1, m2)
        self.tc = None if theta_coeffs is None else np.asarray(theta_coeffs, float)
        if self.tc is not None:
            self.thetajet = self._thetajet

    @staticmethod
    def _eval(c, x1, x2, d1, d2):
        m1, m2 = c.shape[-2:]
        out = np.zeros(c.shape[:-2] + x1.shape)
        for k1 in range(d1, m1):
            f1 = math.factorial(k1) / math.factorial(k1 - d1) if d1 else 1.0
            for k2 in range(d2, m2):
                f2 = math.factorial(k2) / math.factorial(k2 - d2) if d2 else 1.0
                out = out + c[..., k1, k2, None] * (
                    f1 * f2 * x1 ** (k1 - d1) * x2 ** (k2 - d2)
                )
        return np.moveaxis(out, -1, 0)

    def _jet_of(self, c, x1, x2, order):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        jet = MapJet(self._eval(c, x1, x2, 0, 0))
        n = x1.size
        if order >= 1:
            jet.d1 = np.stack(
                [self._eval(c, x1, x2, 1, 0), self._eval(c, x1, x2, 0, 1)], axis=1
            )
        if order >= 2:
            d2 = np.empty((n, 2, 2, 3))
            d2[:, 0, 0] = self._eval(c, x1, x2, 2, 0)
            d2[:, 0, 1] = d2[:, 1, 0] = self._eval(c, x1, x2, 1, 1)
            d2[:, 1, 1] = self._eval(c, x1, x2, 0, 2)
            jet.d2 = d2
        if order >= 3:
            d3 = np.empty((n, 2, 2, 2, 3))
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        m = i + j + k
                        d3[:, i, j, k] = self._eval(c, x1, x2, 3 - m, m)
            jet.d3 = d3
        return jet

    def ujet(self, x1, x2, order):
        return self._jet_of(self.c, x1, x2, order)

    def _thetajet(self, x1, x2, order):
        return self._jet_of(self.tc, x1, x2, order)


@dataclass
class ErrorReport:
    h: float
    n_dofs: int
    l2: float
    h1: float
    h2: float = np.nan
    spd: bool = True
    cond: float = np.nan
    locking_flag: bool = False


@dataclass
class ConvergenceStudy:
    reports: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)

    def fit_rates(self, window=3):
        ok = [r for r in self.reports if r.spd]
        self.rates = {}
        for norm in ("l2", "h1", "h2"):
            vals = [(r.h, getattr(r, norm)) for r in ok if np.isfinite(getattr(r, norm))]
            if len(vals) >= 2:
                self.rates[norm] = fit_rate(vals, window)
        return self.rates


def fit_rate(h_err_pairs, window=3):
    """Least-squares slope of log error vs log h over the last ``window`` points."""
    pts = h_err_pairs[-window:]
    lh = np.log([p[0] for p in pts])
    le = np.log([max(p[1], 1e-300) for p in pts])
    A = np.stack([lh, np.ones_like(lh)], axis=1)
    slope, _ = np.linalg.lstsq(A, le, rcond=None)[0]
    return float(slope)


def error_norms(model, sol, exact, h: float, report: "SPDReport" = None,
                with_h2: bool = False) -> ErrorReport:
    """Patchwise L2/H1(/H2) norms of u_h - u_ex with elevated quadrature.

    The seminorms are surface-intrinsic (contracted with the contravariant
    metric), so layer patches measured in their own coordinates contribute
    consistently.
    """
    l2 = h1 = h2 = 0.0
    for pidx, patch in enumerate(model.patches):
        nq = patch.p + 3
        order = 2 if with_h2 else 1
        for pts, w in patch.interior_rules(nq):
            fb = surface_frame(patch.smap, (pts[:, 0], pts[:, 1]), order=2)
            fh = sol.field(pidx, pts[:, 0], pts[:, 1], order=max(order, 1))
            fx = model.sample_exact(exact, patch, pts[:, 0], pts[:, 1], order=order)
            e = fh.u - fx.u
            de = fh.du - fx.du
            wq = w * fb.sqa
            l2 += float(np.einsum("ni,ni,n->", e, e, wq))
            h1 += float(np.einsum("nab,nai,nbi,n->", fb.ginv, de, de, wq))
            if with_h2:
                d2e = fh.d2u - fx.d2u
                cov = d2e - np.einsum("ngab,ngi->nabi", fb.gam, de)
                h2 += float(
                    np.einsum("nag,nbd,nabi,ngdi,n->", fb.ginv, fb.ginv, cov, cov, wq)
                )
    rep = ErrorReport(
        h=h,
        n_dofs=model.dofmap.n_free if model.dofmap else 0,
        l2=np.sqrt(l2),
        h1=np.sqrt(h1),
        h2=np.sqrt(h2) if with_h2 else np.nan,
    )
    if report is not None:
        rep.spd = report.spd
        rep.cond = report.cond_estimate
    return rep


def folias_reference(r, a, R, tau, nu=1.0 / 3.0):
    """Nondimensional crack-tip hoop membrane force N11/(p0 tau).

    lambda^4 = 12 (1 - nu^2) a^4 / (R^2 tau^2); the printed curve holds for
    nu = 1/3 and uses the half crack length as the distance scale.
    """
    if abs(nu - 1.0 / 3.0) > 1e-12:
        raise UnsupportedConfiguration("reference curve is printed for nu = 1/3")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise InvalidInput("distance from the tip must be positive")
    lam = (12.0 * (1.0 - nu**2) * a**4 / (R**2 * tau**2)) ** 0.25
    amp = 1.0 + (0.37 - 0.30 * np.log(lam)) * lam**2
    return np.sqrt(a / (2.0 * r)) * amp * (R / tau)


def study_to_csv(study: ConvergenceStudy) -> str:
    """Delimited table (h, dofs, L2, H1, H2, rates, spd) behind the plots."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["h", "dofs", "l2", "h1", "h2", "spd", "cond", "locking"])
    for r in study.reports:
        wr.writerow([
            f"{r.h:.10g}", r.n_dofs, f"{r.l2:.12e}", f"{r.h1:.12e}",
            f"{r.h2:.12e}" if np.isfinite(r.h2) else "",
            int(r.spd), f"{r.cond:.4e}" if np.isfinite(r.cond) else "",
            int(r.locking_flag),
        ])
    wr.writerow([])
    wr.writerow(["rate_l2", "rate_h1", "rate_h2"])
    wr.writerow([
        f"{study.rates.get(k, float('nan')):.4f}" for k in ("l2", "h1", "h2")
    ])
    return buf.getvalue()
