"""The selection criterion: inner MC+ penalty, outer exponential penalty,
group norms, linearized slopes, the objective Q and its KKT residual.

The per-coefficient inner penalty is

    g(b; lam, gamma) = integral_0^|b| (1 - x/(lam*gamma))_+ dx
                     = |b| - b^2/(2*lam*gamma)   for |b| <= lam*gamma,
                       lam*gamma/2               beyond,

and groups are penalized through the saturating exponential

    eta(theta; lam, tau) = (lam^2/tau) * (1 - exp(-tau*theta/lam)).

Its derivative at the current group norm, ``slope``, acts as the effective
per-coefficient penalty level: groups with selected effects get smaller
slopes, letting related effects enter more easily.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Optional

import numpy as np

from .design import CmeDesign
from .errors import DimensionMismatch, InvalidParams


@dataclass(frozen=True)
class PenaltyParams:
    """(lambda_s, lambda_c, gamma, tau) with the coordinate-wise convexity guard.

    The solver requires ``tau + 1/gamma < 1/2``; build with
    :meth:`unchecked` to bypass that guard for diagnostics.
    """

    lambda_s: float
    lambda_c: float
    gamma: float
    tau: float
    check_convexity: InitVar[bool] = True

    def __post_init__(self, check_convexity):
        if not (self.lambda_s > 0 and self.lambda_c > 0):
            raise InvalidParams("lambda_s and lambda_c must be positive")
        if not self.gamma > 1:
            raise InvalidParams("gamma must exceed 1")
        if not self.tau > 0:
            raise InvalidParams("tau must be positive")
        if check_convexity and not self.tau + 1.0 / self.gamma < 0.5:
            raise InvalidParams(
                f"tau + 1/gamma = {self.tau + 1 / self.gamma:.4f} >= 1/2; "
                "coordinate-wise problems would not be strictly convex"
            )

    @classmethod
    def unchecked(cls, lambda_s, lambda_c, gamma, tau):
        return cls(lambda_s, lambda_c, gamma, tau, check_convexity=False)


def mcp_inner(beta, lam, gamma):
    """Scaled MC+ penalty of a coefficient (scalar or array)."""
    if not lam > 0 or not gamma > 1:
        raise InvalidParams("mcp_inner needs lam > 0 and gamma > 1")
    ab = np.abs(beta)
    knee = lam * gamma
    out = np.where(ab <= knee, ab - ab * ab / (2.0 * knee), knee / 2.0)
    return float(out) if np.isscalar(beta) else out


def exp_outer(theta, lam, tau):
    """Saturating exponential group penalty; increasing, concave, < lam^2/tau."""
    if not lam > 0 or not tau > 0:
        raise InvalidParams("exp_outer needs lam > 0 and tau > 0")
    th = np.asarray(theta, dtype=np.float64)
    if (th < 0).any():
        raise InvalidParams("group norm must be nonnegative")
    out = (lam * lam / tau) * (1.0 - np.exp(-tau * th / lam))
    return float(out) if np.isscalar(theta) else out


def group_norm(betas, lam, gamma) -> float:
    """Sum of mcp_inner over a group's coefficients."""
    return float(np.sum(mcp_inner(np.asarray(betas, dtype=np.float64), lam, gamma)))


def slope(norm, lam, tau):
    """Linearized outer-penalty slope lam * exp(-tau * norm / lam), in (0, lam]."""
    out = lam * np.exp(-tau * np.asarray(norm, dtype=np.float64) / lam)
    return float(out) if np.isscalar(norm) else out


@dataclass
class GroupState:
    """Per-group MC+ norms and linearized slopes for both group systems."""

    norms_s: np.ndarray
    norms_c: np.ndarray
    slopes_s: np.ndarray
    slopes_c: np.ndarray

    @classmethod
    def from_beta(cls, design: CmeDesign, beta: np.ndarray, params: PenaltyParams):
        """Full recomputation from scratch (used to bound incremental drift)."""
        p = design.p
        nz = np.flatnonzero(beta)
        norms_s = np.zeros(p)
        norms_c = np.zeros(p)
        if nz.size:
            b = beta[nz]
            norms_s = np.bincount(
                design.sib_of[nz], weights=mcp_inner(b, params.lambda_s, params.gamma), minlength=p
            )
            norms_c = np.bincount(
                design.cou_of[nz], weights=mcp_inner(b, params.lambda_c, params.gamma), minlength=p
            )
        return cls(
            norms_s=norms_s,
            norms_c=norms_c,
            slopes_s=slope(norms_s, params.lambda_s, params.tau),
            slopes_c=slope(norms_c, params.lambda_c, params.tau),
        )


def objective(design: CmeDesign, y: np.ndarray, beta: np.ndarray, params: PenaltyParams) -> float:
    """Q(beta): mean-squared-residual term plus both group penalties.

    ``y`` is expected to be centered already.
    """
    y = np.asarray(y, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if y.shape[0] != design.n or beta.shape[0] != design.p_prime:
        raise DimensionMismatch("objective: y or beta shape does not match design")
    r = y - design.columns @ beta
    gs = GroupState.from_beta(design, beta, params)
    return float(
        0.5 * np.dot(r, r) / design.n
        + np.sum(exp_outer(gs.norms_s, params.lambda_s, params.tau))
        + np.sum(exp_outer(gs.norms_c, params.lambda_c, params.tau))
    )


def _subgradient_violations(design, c, beta, params, state: Optional[GroupState] = None):
    """Distance from 0 to the stationarity set, per coordinate.

    At beta_j = 0 the admissible set is the interval
    [-(ds+dc), ds+dc]; elsewhere it is the single point
    ds*g'(beta_j; lambda_s) + dc*g'(beta_j; lambda_c) with
    g'(b; lam) = sgn(b) * (1 - |b|/(lam*gamma))_+.
    """
    if state is None:
        state = GroupState.from_beta(design, beta, params)
    ds = state.slopes_s[design.sib_of]
    dc = state.slopes_c[design.cou_of]
    ab = np.abs(beta)
    gs = np.sign(beta) * np.maximum(0.0, 1.0 - ab / (params.lambda_s * params.gamma))
    gc = np.sign(beta) * np.maximum(0.0, 1.0 - ab / (params.lambda_c * params.gamma))
    at_zero = beta == 0.0
    viol = np.where(
        at_zero,
        np.maximum(0.0, np.abs(c) - (ds + dc)),
        np.abs(c - ds * gs - dc * gc),
    )
    if design.zero_columns.size and design.zero_columns.any():
        viol = np.where(design.zero_columns, 0.0, viol)
    return viol


def kkt_residual(design: CmeDesign, y, beta, params: PenaltyParams, tol: float = 1e-6):
    """Largest stationarity violation and the indices exceeding ``tol``.

    Violations are measured in inner-product units (x_j' r / n), the same
    scale the solver's convergence tolerance lives on.
    """
    y = np.asarray(y, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if y.shape[0] != design.n or beta.shape[0] != design.p_prime:
        raise DimensionMismatch("kkt_residual: y or beta shape does not match design")
    c = design.columns.T @ (y - design.columns @ beta) / design.n
    viol = _subgradient_violations(design, c, beta, params)
    return float(viol.max(initial=0.0)), np.flatnonzero(viol > tol)
