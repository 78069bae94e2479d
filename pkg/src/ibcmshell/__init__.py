"""Immersed boundary-conformal isogeometric shell analysis.

Library layout:

- ``bspline``:   univariate/tensor B-spline spaces and edge L2 projection
- ``geometry``:  surface maps, planar curves, composed maps, frames
- ``domain``:    trimming, element classification, cut-cell tiles, boundary
                 layers, interface segmentation, quadrature
- ``material``:  laminate constitutive pipeline (A/B/D/S, covariant form)
- ``shell``:     generalized strain/stress/flux operators (RM and KL)
- ``assembly``:  DOF maps, Nitsche coupling, solver and field evaluation
- ``verify``:    error norms, convergence studies, crack-tip reference
- ``cases``:     catalog of ready-made benchmark cases
- ``cli``:       batch front end
"""

__version__ = "0.1.0"
