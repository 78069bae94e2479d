"""Univariate and tensor-product B-spline spaces over non-mapped domains.

Evaluation follows the Cox-de Boor recursion; derivatives are obtained from
the lower-degree bases through the standard knot-difference formula, so they
are exact (no finite differences anywhere in this module).
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import InvalidInput, NumericalFailure, OutOfDomain

__all__ = [
    "KnotVector",
    "TensorSplineSpace",
    "make_open_knot_vector",
    "gauss_rule_01",
    "l2_project_edge",
]


@lru_cache(maxsize=64)
def gauss_rule_01(n: int):
    """Gauss-Legendre rule with ``n`` points on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def make_open_knot_vector(breaks, p: int, interior_continuity: int | None = None):
    """Open knot vector on the given breaks with uniform interior continuity.

    The end knots are repeated p+1 times; every interior break is repeated
    p - interior_continuity times. The default keeps maximal continuity p-1.
    """
    breaks = np.asarray(breaks, dtype=float)
    if breaks.ndim != 1 or breaks.size < 2:
        raise InvalidInput("need at least two break values")
    if np.any(np.diff(breaks) <= 0.0):
        raise InvalidInput("breaks must be strictly increasing")
    if p < 0:
        raise InvalidInput("degree must be non-negative")
    if interior_continuity is None:
        interior_continuity = p - 1
    if breaks.size > 2 and not (0 <= interior_continuity <= p - 1):
        raise InvalidInput(
            f"interior continuity {interior_continuity} not in [0, {p - 1}]"
        )
    mult = p - interior_continuity
    knots = [breaks[0]] * (p + 1)
    for b in breaks[1:-1]:
        knots.extend([b] * mult)
    knots.extend([breaks[-1]] * (p + 1))
    return KnotVector(p, np.array(knots))


@dataclass(frozen=True)
class KnotVector:
    """Degree and open knot vector of a univariate B-spline basis."""

    p: int
    knots: np.ndarray

    def __post_init__(self):
        kn = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", kn)
        p = self.p
        if np.any(np.diff(kn) < 0.0):
            raise InvalidInput("knots must be non-decreasing")
        if kn.size < 2 * (p + 1):
            raise InvalidInput("too few knots for the degree")
        if not (np.all(kn[: p + 1] == kn[0]) and np.all(kn[-p - 1 :] == kn[-1])):
            raise InvalidInput("knot vector is not open (end multiplicity p+1)")
        if kn[p] == kn[p + 1] and kn.size > 2 * (p + 1):
            raise InvalidInput("first span is empty")
        breaks, counts = np.unique(kn, return_counts=True)
        if np.any(counts[1:-1] > p):
            raise InvalidInput("interior knot multiplicity exceeds p")
        object.__setattr__(self, "_breaks", breaks)

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.p - 1

    @property
    def breaks(self) -> np.ndarray:
        """Distinct knot values."""
        return self._breaks

    @property
    def domain(self):
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def nspans(self) -> int:
        return self.breaks.size - 1

    def span_index(self, x):
        """Knot-span index for each point; the right end maps to the last span.

        Returns indices into ``knots`` such that knots[s] <= x < knots[s+1]
        (closed at the domain end).
        """
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise OutOfDomain(f"point outside [{lo}, {hi}]")
        s = np.searchsorted(self.knots, np.clip(x, lo, hi), side="right") - 1
        return np.clip(s, self.p, self.knots.size - self.p - 2)

    def greville(self) -> np.ndarray:
        """Greville abscissae (knot averages)."""
        p = self.p
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        out = np.empty(self.n)
        for i in range(self.n):
            out[i] = self.knots[i + 1 : i + p + 1].mean()
        return out

    def _nonzero(self, x, spans, p):
        """Values of the p+1 non-vanishing degree-``p`` functions at x.

        Vectorized Cox-de Boor triangle; x and spans are 1d arrays of equal
        length, the result has shape (len(x), p+1) holding N_{spans-p+j,p}.
        """
        npts = x.size
        N = np.ones((npts, 1))
        kn = self.knots
        for d in range(1, p + 1):
            left = np.empty((npts, d))
            right = np.empty((npts, d))
            for j in range(d):
                left[:, j] = x - kn[spans - j]
                right[:, j] = kn[spans + j + 1] - x
            nxt = np.zeros((npts, d + 1))
            saved = np.zeros(npts)
            for r in range(d):
                den = right[:, r] + left[:, d - 1 - r]
                temp = np.where(den > 0.0, N[:, r] / np.where(den > 0.0, den, 1.0), 0.0)
                nxt[:, r] = saved + right[:, r] * temp
                saved = left[:, d - 1 - r] * temp
            nxt[:, d] = saved
            N = nxt
        return N

    def eval_basis(self, x, n_deriv: int = 0):
        """Non-vanishing basis values and derivatives at the points ``x``.

        Returns (first_index, table) where table has shape
        (npts, n_deriv+1, p+1): table[k, d, j] is the d-th derivative of
        function first_index[k] + j at x[k]. Exactly p+1 functions are
        reported per point; values sum to 1 and derivative rows sum to 0.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if n_deriv > 3:
            raise InvalidInput("derivatives above third order are not supported")
        p = self.p
        spans = self.span_index(x)
        first = spans - p
        out = np.zeros((x.size, n_deriv + 1, p + 1))
        out[:, 0, :] = self._nonzero(x, spans, p)
        kn = self.knots

        # derivative of a degree-q basis from its degree-(q-1) relatives:
        # N'_{i,q} = q/(kn[i+q]-kn[i]) N_{i,q-1} - q/(kn[i+q+1]-kn[i+1]) N_{i+1,q-1}
        # (knot differences are x-independent, so repeated application yields
        # higher derivatives).
        def diff_once(tab, q):
            m = tab.shape[1]  # q columns: data for functions spans-(q-1)..spans
            res = np.zeros((x.size, q + 1))
            for j in range(q + 1):
                i = first + (p - q) + j
                d1 = kn[i + q] - kn[i]
                d2 = kn[i + q + 1] - kn[i + 1]
                a = np.where(d1 > 0.0, q / np.where(d1 > 0.0, d1, 1.0), 0.0)
                b = np.where(d2 > 0.0, q / np.where(d2 > 0.0, d2, 1.0), 0.0)
                lo = tab[:, j - 1] if j - 1 >= 0 else 0.0
                hi = tab[:, j] if j < m else 0.0
                res[:, j] = a * lo - b * hi
            return res

        for d in range(1, n_deriv + 1):
            q0 = p - d
            if q0 < 0:
                break
            tab = self._nonzero(x, spans, q0)
            for q in range(q0 + 1, p + 1):
                tab = diff_once(tab, q)
            out[:, d, :] = tab
        return first, out

    def element_of_span(self, spans):
        """Map knot-span indices to consecutive element (break interval) ids."""
        idx = np.searchsorted(self.breaks, self.knots[spans], side="right") - 1
        return np.clip(idx, 0, self.nspans - 1)

    def span_of_element(self, e):
        """First knot-span index lying in break interval ``e``."""
        x = 0.5 * (self.breaks[e] + self.breaks[e + 1])
        return self.span_index(np.atleast_1d(x))[0]


def _gram_and_load(kv: KnotVector, g, nquad: int):
    n = kv.n
    G = np.zeros((n, n))
    f = np.zeros(n)
    xq, wq = gauss_rule_01(nquad)
    for e in range(kv.nspans):
        a, b = kv.breaks[e], kv.breaks[e + 1]
        x = a + (b - a) * xq
        w = (b - a) * wq
        first, tab = kv.eval_basis(x, 0)
        vals = tab[:, 0, :]
        gi = np.asarray(g(x), dtype=float)
        for k in range(x.size):
            i0 = first[k]
            sl = slice(i0, i0 + kv.p + 1)
            G[sl, sl] += w[k] * np.outer(vals[k], vals[k])
            f[sl] += w[k] * gi[k] * vals[k]
    return G, f


def l2_project_edge(kv: KnotVector, g, nquad: int | None = None) -> np.ndarray:
    """L2 projection of the callable ``g`` onto the spline space of ``kv``.

    Uses p+1 Gauss points per knot span (exact for products of two splines).
    """
    if nquad is None:
        nquad = kv.p + 1
    G, f = _gram_and_load(kv, g, nquad)
    try:
        c = scipy.linalg.solve(G, f, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - open kv Gram is SPD
        raise NumericalFailure("singular Gram matrix in edge projection") from exc
    return c


@dataclass
class TensorSplineSpace:
    """Bivariate tensor-product spline space with an optional activity mask.

    Basis function (i, j) is N_i(x1) * N_j(x2); scalar functions are numbered
    lexicographically with i fastest. ``active`` marks functions whose support
    meets the active part of a trimmed domain; masked-out functions do not
    receive global DOFs.
    """

    kv1: KnotVector
    kv2: KnotVector
    active: np.ndarray | None = None
    # filled by finalize_active(); maps (i + j*n1) -> compact active index or -1
    _act_index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.active is None:
            self.active = np.ones((self.kv1.n, self.kv2.n), dtype=bool)
        self.finalize_active()

    @property
    def shape(self):
        return self.kv1.n, self.kv2.n

    @property
    def n_scalar(self) -> int:
        """Number of active scalar basis functions."""
        return int(self.active.sum())

    def finalize_active(self):
        n1, n2 = self.shape
        flat = self.active.T.reshape(-1)  # lexicographic, i fastest
        idx = np.full(n1 * n2, -1, dtype=int)
        idx[flat] = np.arange(flat.sum())
        self._act_index = idx

    def scalar_index(self, i, j):
        """Compact active index of function (i, j); -1 if masked out."""
        return self._act_index[np.asarray(i) + np.asarray(j) * self.kv1.n]

    def eval_scalar(self, x1, x2, n_deriv: int = 0):
        """Evaluate all non-vanishing bivariate functions at scattered points.

        Returns (indices, tables) with indices of shape (npts, (p1+1)(p2+1))
        holding lexicographic function ids (mask not applied) and tables a
        dict keyed by derivative multi-order (d1, d2) with d1+d2 <= n_deriv.
        """
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        f1, t1 = self.kv1.eval_basis(x1, n_deriv)
        f2, t2 = self.kv2.eval_basis(x2, n_deriv)
        p1, p2 = self.kv1.p, self.kv2.p
        ii = f1[:, None] + np.arange(p1 + 1)[None, :]
        jj = f2[:, None] + np.arange(p2 + 1)[None, :]
        idx = ii[:, :, None] + jj[:, None, :] * self.kv1.n
        idx = idx.reshape(x1.size, -1)
        tables = {}
        for d1 in range(n_deriv + 1):
            for d2 in range(n_deriv + 1 - d1):
                tab = np.einsum("ki,kj->kij", t1[:, d1, :], t2[:, d2, :])
                tables[(d1, d2)] = tab.reshape(x1.size, -1)
        return idx, tables
