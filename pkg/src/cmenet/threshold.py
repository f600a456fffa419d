"""Closed-form threshold operator for the coordinate-wise majorized problem.

``threshold(z, ...)`` returns the unique minimizer of

    0.5 * (b - z)**2 + delta1 * g(b; lambda1, gamma) + delta2 * g(b; lambda2, gamma)

valid whenever the slopes satisfy 0 < delta_i <= lambda_i and gamma > 2
(guaranteed in solver context by tau + 1/gamma < 1/2).  The operator is
odd, continuous and piecewise linear in four segments: full shrinkage to
zero, a two-step partial-shrinkage transition, and the identity.
"""

from __future__ import annotations

from ._cd import _thresh
from .errors import InvalidParams


def threshold(z: float, lambda1: float, lambda2: float, gamma: float,
              delta1: float, delta2: float) -> float:
    """Evaluate the four-segment operator.

    ``(lambda1, delta1)`` is the sibling penalty pair and ``(lambda2,
    delta2)`` the cousin pair; internally the larger lambda takes the outer
    role, with the sibling pair winning ties (the tie makes the middle
    segment empty, so the choice only fixes branch order).
    """
    if not (lambda1 > 0 and lambda2 > 0):
        raise InvalidParams("lambda1 and lambda2 must be positive")
    if not gamma > 1:
        raise InvalidParams("gamma must exceed 1")
    if not (0 < delta1 <= lambda1 and 0 < delta2 <= lambda2):
        raise InvalidParams("slopes must lie in (0, lambda]")
    if lambda1 >= lambda2:
        lam_hi, lam_lo, d_hi, d_lo = lambda1, lambda2, delta1, delta2
    else:
        lam_hi, lam_lo, d_hi, d_lo = lambda2, lambda1, delta2, delta1
    if 1.0 - d_hi / (lam_hi * gamma) - d_lo / (lam_lo * gamma) <= 0.0:
        raise InvalidParams(
            "nonpositive threshold denominator; convexity condition violated"
        )
    return float(_thresh(float(z), lam_hi, lam_lo, gamma, d_hi, d_lo))
