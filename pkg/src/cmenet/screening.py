"""Strong rules for discarding inactive effects along the penalty grid.

Before solving at grid point (l, m) the rules compare each effect's
inner product at a solved neighbor -- (l-1, m) one step up in lambda_s, or
(l, m-1) one step up in lambda_c -- against a bound built from the penalty
step and the neighbor's group slopes.  Which rule applies depends on the
neighbor's group activity:

  rule 1: neither the effect's sibling nor cousin group was active there;
  rule 2: sibling group empty but cousins active (slope-corrected bound);
  rule 3: cousin group empty but siblings active (symmetric).

The rules are heuristic, not safe: every screened solve must be followed
by :func:`kkt_recheck_and_repair`, which reinstates any violator and
resumes the fit until the stationarity conditions hold everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .design import CmeDesign
from .errors import MissingPredecessor
from .penalty import GroupState, PenaltyParams, _subgradient_violations
from .solver import FitState, SolverOptions, fit

RULE1, RULE2, RULE3, KEPT, NO_RULE = "rule1", "rule2", "rule3", "kept", "no-rule"


@dataclass
class GridPoint:
    """What screening needs to remember about one solved grid point."""

    inner_products: np.ndarray
    sib_active: np.ndarray
    cou_active: np.ndarray
    norms_s: np.ndarray
    norms_c: np.ndarray


@dataclass
class PathContext:
    """Solved history over the decreasing (lambda_s, lambda_c) grid."""

    lambda_s_grid: np.ndarray
    lambda_c_grid: np.ndarray
    solutions: Dict[Tuple[int, int], FitState] = field(default_factory=dict)
    points: Dict[Tuple[int, int], GridPoint] = field(default_factory=dict)

    def __post_init__(self):
        for grid in (self.lambda_s_grid, self.lambda_c_grid):
            g = np.asarray(grid, dtype=np.float64)
            if g.size == 0 or (g <= 0).any() or (np.diff(g) >= 0).any():
                raise ValueError("penalty grids must be strictly decreasing and positive")
        self.lambda_s_grid = np.asarray(self.lambda_s_grid, dtype=np.float64)
        self.lambda_c_grid = np.asarray(self.lambda_c_grid, dtype=np.float64)

    def record(self, key: Tuple[int, int], design: CmeDesign, state: FitState):
        c = design.columns.T @ state.residual / design.n
        nz = state.beta != 0.0
        sib_active = np.zeros(design.p, dtype=bool)
        cou_active = np.zeros(design.p, dtype=bool)
        if nz.any():
            sib_active[np.unique(design.sib_of[nz])] = True
            cou_active[np.unique(design.cou_of[nz])] = True
        self.solutions[key] = state
        self.points[key] = GridPoint(
            inner_products=c,
            sib_active=sib_active,
            cou_active=cou_active,
            norms_s=state.group_state.norms_s,
            norms_c=state.group_state.norms_c,
        )

    def inner_products(self, key):
        return self.points[key].inner_products


def screen(
    ctx: PathContext,
    design: CmeDesign,
    target: Tuple[int, int],
    gamma: float,
    tau: float,
):
    """Candidate set and per-effect rule tags for grid point ``target``.

    Discards only when every applicable rule agrees; rule 1's two branches
    count as one rule and discard when either bound holds.  Nonpositive
    effective-gamma denominators disable rules 2/3 for the affected
    effects, and gamma <= 2 disables screening outright (all candidates).
    """
    l, m = target
    p_prime = design.p_prime
    tags = np.full(p_prime, NO_RULE, dtype=object)
    if gamma <= 2.0:
        return np.arange(p_prime), tags

    key_s = (l - 1, m)
    key_c = (l, m - 1)
    have_s = l >= 1 and key_s in ctx.points
    have_c = m >= 1 and key_c in ctx.points
    if not (have_s or have_c):
        raise MissingPredecessor(f"no solved neighbor for grid point {target}")

    lam_s_l = ctx.lambda_s_grid[l]
    lam_c_m = ctx.lambda_c_grid[m]

    rule1_applies = np.zeros(p_prime, dtype=bool)
    rule1_discards = np.zeros(p_prime, dtype=bool)
    verdicts = np.ones((2, p_prime), dtype=bool)  # rule2, rule3: True = "would discard or n/a"
    applies_23 = np.zeros((2, p_prime), dtype=bool)

    if have_s:
        prev = ctx.points[key_s]
        sA = prev.sib_active[design.sib_of]
        cA = prev.cou_active[design.cou_of]
        ac = np.abs(prev.inner_products)
        step = lam_s_l - ctx.lambda_s_grid[l - 1]  # negative: grid decreases
        both_empty = ~sA & ~cA
        rule1_applies |= both_empty
        bound1 = lam_s_l + lam_c_m + gamma / (gamma - 2.0) * step
        rule1_discards |= both_empty & (ac < bound1)
        r2 = ~sA & cA
        if r2.any():
            delta_c = lam_c_m * np.exp(-tau * prev.norms_c[design.cou_of] / lam_c_m)
            denom = gamma - (delta_c / lam_c_m + 1.0)
            ok = r2 & (denom > 0.0)
            bound2 = lam_s_l + delta_c + gamma / np.where(denom > 0, denom, 1.0) * step
            applies_23[0] = ok
            verdicts[0] = np.where(ok, ac < bound2, True)

    if have_c:
        prev = ctx.points[key_c]
        sA = prev.sib_active[design.sib_of]
        cA = prev.cou_active[design.cou_of]
        ac = np.abs(prev.inner_products)
        step = lam_c_m - ctx.lambda_c_grid[m - 1]
        both_empty = ~sA & ~cA
        rule1_applies |= both_empty
        bound1 = lam_s_l + lam_c_m + gamma / (gamma - 2.0) * step
        rule1_discards |= both_empty & (ac < bound1)
        r3 = ~cA & sA
        if r3.any():
            delta_s = lam_s_l * np.exp(-tau * prev.norms_s[design.sib_of] / lam_s_l)
            denom = gamma - (delta_s / lam_s_l + 1.0)
            ok = r3 & (denom > 0.0)
            bound3 = delta_s + lam_c_m + gamma / np.where(denom > 0, denom, 1.0) * step
            applies_23[1] = ok
            verdicts[1] = np.where(ok, ac < bound3, True)

    verdict1 = np.where(rule1_applies, rule1_discards, True)
    any_rule = rule1_applies | applies_23[0] | applies_23[1]
    discard = any_rule & verdict1 & verdicts[0] & verdicts[1]

    tags[discard & rule1_applies] = RULE1
    tags[discard & ~rule1_applies & applies_23[0]] = RULE2
    tags[discard & ~rule1_applies & ~applies_23[0] & applies_23[1]] = RULE3
    tags[~discard & any_rule] = KEPT
    return np.flatnonzero(~discard), tags


def kkt_recheck_and_repair(
    design: CmeDesign,
    y: np.ndarray,
    params: PenaltyParams,
    state: FitState,
    excluded: np.ndarray,
    opts: Optional[SolverOptions] = None,
    max_rounds: int = 20,
) -> FitState:
    """Reinstate screened-out effects that violate stationarity and re-solve.

    Iterates until no excluded effect violates the KKT conditions at
    10*tol (the solver's own stationarity guarantee on the solved set).
    """
    opts = opts or SolverOptions()
    excluded = np.asarray(excluded, dtype=np.int64)
    reinstated: list[int] = []
    for _ in range(max_rounds):
        if excluded.size == 0:
            break
        c = design.columns.T @ state.residual / design.n
        viol = _subgradient_violations(design, c, state.beta, params, state.group_state)
        bad = excluded[viol[excluded] > 10.0 * opts.tol]
        if bad.size == 0:
            break
        reinstated.extend(bad.tolist())
        candidates = np.union1d(state.candidates, bad)
        excluded = np.setdiff1d(excluded, bad)
        state = fit(design, y, params, beta_init=state.beta, opts=opts, candidates=candidates)
    if reinstated:
        state.reinstated = tuple(reinstated)
    return state
