"""Penalty-parameter tuning by two-stage K-fold cross-validation.

Stage A fixes a pilot (lambda_s, lambda_c) -- found by an internal
symmetric-penalty sweep -- and picks (gamma, tau) by CV, warm-starting
along the tau loop and resetting at each gamma.  Stage B fixes the chosen
(gamma, tau) and sweeps the full (lambda_s, lambda_c) grid with strong-rule
screening, post-solve KKT repair, and warm starts along lambda_s within
each lambda_c chain.  The winner is refit on all data.

Fold designs are re-normalized per training fold, and held-out rows are
mapped through the training fold's centering/scaling at prediction time.
CV error is the summed squared prediction error over held-out folds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .design import CmeDesign, apply_fold_normalization, fold_design
from .errors import AllFitsFailed, DegenerateResponse, InvalidParams
from .penalty import PenaltyParams
from .screening import MissingPredecessor, PathContext, kkt_recheck_and_repair, screen
from .solver import FitState, SolverOptions, fit, lambda_max, null_fit

LASSO_LIMIT_GAMMA = 1e6
LASSO_LIMIT_TAU = 1e-6

# top-of-grid factor: the largest pair sums to 1.1 * lambda_max, so the
# path provably starts at the all-zero model and an empty fit stays
# reachable by cross-validation (the log-spaced body starts just under
# lambda_max, where the zero-solution bound does not yet bite)
NULL_ANCHOR = 0.55


@dataclass
class CvGrid:
    """Candidate penalty grids plus the fold layout."""

    lambda_s_grid: np.ndarray
    lambda_c_grid: np.ndarray
    gamma_grid: np.ndarray
    tau_grid: np.ndarray
    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        self.lambda_s_grid = np.asarray(self.lambda_s_grid, dtype=np.float64)
        self.lambda_c_grid = np.asarray(self.lambda_c_grid, dtype=np.float64)
        self.gamma_grid = np.sort(np.asarray(self.gamma_grid, dtype=np.float64))
        self.tau_grid = np.sort(np.asarray(self.tau_grid, dtype=np.float64))
        for g in (self.lambda_s_grid, self.lambda_c_grid):
            if g.size == 0 or (g <= 0).any() or (np.diff(g) >= 0).any():
                raise InvalidParams("lambda grids must be strictly decreasing and positive")
        if (self.gamma_grid <= 1).any() or (self.tau_grid <= 0).any():
            raise InvalidParams("gamma grid must exceed 1 and tau grid be positive")
        if self.folds < 2:
            raise InvalidParams("need at least 2 folds")
        if not any(t + 1.0 / g < 0.5 for g in self.gamma_grid for t in self.tau_grid):
            raise InvalidParams("no (gamma, tau) pair satisfies tau + 1/gamma < 1/2")

    def valid_taus(self, gamma: float) -> np.ndarray:
        return self.tau_grid[self.tau_grid + 1.0 / gamma < 0.5]


def default_grid(design: CmeDesign, y: np.ndarray, L: int = 20, M: int = 20,
                 folds: int = 10, seed: int = 0) -> CvGrid:
    """Null-anchored, log-spaced lambda grids plus stock gamma/tau grids.

    Each lambda grid holds the null anchor 0.55 * lambda_max followed by
    L-1 values log-spaced from 0.95 * lambda_max / 2 down to
    0.01 * lambda_max / 2: the top pair yields the exact all-zero model,
    the next sits just under the zero-solution bound.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.ptp(y) == 0:
        raise DegenerateResponse("response is constant")
    lmax = lambda_max(design, y)
    if lmax <= 0:
        raise DegenerateResponse("response is orthogonal to every design column")
    if L < 2 or M < 2:
        raise InvalidParams("lambda grids need at least 2 values")

    def lam_grid(size):
        body = np.geomspace(0.95 * lmax / 2.0, 0.01 * lmax / 2.0, size - 1)
        return np.concatenate([[NULL_ANCHOR * lmax], body])

    return CvGrid(lam_grid(L), lam_grid(M), np.array([3.0, 4.5, 6.0, 9.0]),
                  np.array([0.01, 0.05, 0.1, 0.25]), folds=folds, seed=seed)


@dataclass
class CvResult:
    best_params: PenaltyParams
    cv_error_surface: Dict[tuple, float]
    fold_assignments: np.ndarray
    final_fit: FitState
    selected_effects: list
    stats: dict = field(default_factory=dict)


def fold_labels(n: int, folds: int, seed: int) -> np.ndarray:
    """Random fold assignment with sizes differing by at most one."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % folds
    return labels[rng.permutation(n)]


class _FoldData:
    """Per-fold training design and held-out prediction pieces."""

    def __init__(self, design, y, rows_train, rows_test):
        self.design = fold_design(design, rows_train)
        y = np.asarray(y, dtype=np.float64)
        self.y_train = y[rows_train]
        self.y_test = y[rows_test]
        self.X_test = apply_fold_normalization(design, self.design, rows_test)

    def sse(self, state: FitState) -> float:
        pred = self.X_test @ state.beta + state.y_center
        diff = self.y_test - pred
        return float(diff @ diff)


def _make_folds(design, y, folds, seed):
    labels = fold_labels(design.n, folds, seed)
    out = []
    for k in range(folds):
        rows_test = np.flatnonzero(labels == k)
        rows_train = np.flatnonzero(labels != k)
        out.append(_FoldData(design, y, rows_train, rows_test))
    return labels, out


def _fit_or_null(design, y, params, lmax_full, beta_prev, opts):
    """Solve under the zero-solution guard; above it, take the known null.

    Fold data can push the local bound slightly past the full-data one;
    when the shortcut would not be stationary there, solve anyway.
    """
    if params.lambda_s + params.lambda_c < lmax_full:
        return fit(design, y, params, beta_init=beta_prev, opts=opts)
    state = null_fit(design, y, params)
    if state.max_kkt > 10.0 * opts.tol:
        return fit(design, y, params, beta_init=beta_prev, opts=opts)
    return state


# the pilot stands in for an external MC+ tuner, whose own gamma range
# spans from strongly nonconvex out to near-l1; sweeping only the narrow
# selection-stage gammas can strand the pilot at a misleading penalty scale
PILOT_EXTRA_GAMMAS = (30.0, 150.0)


def _pilot_lambda(fold_data, grid: CvGrid, lmax: float, opts: SolverOptions):
    """Symmetric-penalty CV sweep standing in for an external MC+ tuner.

    For each gamma in the grid's gammas plus the wide MC+ tail, chains
    lambda_s = lambda_c = v down the lambda_s grid (tau pinned at the
    smallest valid grid value, warm starts along the chain); returns the v
    minimizing summed fold error, ties toward the larger v then gamma.
    """
    surface: Dict[tuple, float] = {}
    gammas = np.unique(np.concatenate([grid.gamma_grid, PILOT_EXTRA_GAMMAS]))
    for gamma in gammas:
        taus = grid.valid_taus(gamma)
        if taus.size == 0:
            continue
        tau = float(taus[0])
        for fd in fold_data:
            beta_prev = None
            for v in grid.lambda_s_grid:
                params = PenaltyParams(float(v), float(v), float(gamma), tau)
                state = _fit_or_null(fd.design, fd.y_train, params, lmax, beta_prev, opts)
                key = (float(v), float(gamma))
                surface[key] = surface.get(key, 0.0) + fd.sse(state)
                beta_prev = state.beta
    if not surface:
        raise AllFitsFailed("pilot sweep produced no fits")
    best = min(surface, key=lambda k: (surface[k], -k[0], -k[1]))
    return best[0], surface


def cv_cmenet(
    design: CmeDesign,
    y: np.ndarray,
    grid: Optional[CvGrid] = None,
    opts: Optional[SolverOptions] = None,
    use_screening: bool = True,
    refit_opts: Optional[SolverOptions] = None,
) -> CvResult:
    """Tune all four penalty parameters by K-fold CV and refit on all data."""
    y = np.asarray(y, dtype=np.float64)
    if grid is None:
        grid = default_grid(design, y)
    opts = opts or SolverOptions()
    if design.n < 2 * grid.folds:
        raise InvalidParams("need n >= 2 * folds observations")
    lmax = lambda_max(design, y)
    labels, fold_data = _make_folds(design, y, grid.folds, grid.seed)

    pilot_v, pilot_surface = _pilot_lambda(fold_data, grid, lmax, opts)
    lam_s_star = lam_c_star = pilot_v

    # Stage A: tune (gamma, tau) at the pilot lambdas
    stage_a: Dict[tuple, float] = {}
    n_a = 0
    for fd in fold_data:
        for gamma in grid.gamma_grid:
            taus = grid.valid_taus(gamma)
            beta_prev = None  # warm start resets at each gamma
            for tau in taus:
                params = PenaltyParams(lam_s_star, lam_c_star, float(gamma), float(tau))
                state = fit(fd.design, fd.y_train, params, beta_init=beta_prev, opts=opts)
                key = (float(gamma), float(tau))
                stage_a[key] = stage_a.get(key, 0.0) + fd.sse(state)
                beta_prev = state.beta
                n_a += 1
    if not stage_a:
        raise AllFitsFailed("no valid (gamma, tau) pair")
    gamma_star, tau_star = min(stage_a, key=lambda k: (stage_a[k], -k[0], k[1]))

    # Stage B: tune (lambda_s, lambda_c) at (gamma*, tau*) with screening;
    # pairs at or above the zero-solution bound take the known null model
    stage_b: Dict[tuple, float] = {}
    n_b = 0
    screen_stats = {"screened_fraction": [], "reinstated": 0}
    for fd in fold_data:
        ctx = PathContext(grid.lambda_s_grid, grid.lambda_c_grid)
        for m, lam_c in enumerate(grid.lambda_c_grid):
            beta_prev = None
            for l, lam_s in enumerate(grid.lambda_s_grid):
                params = PenaltyParams(float(lam_s), float(lam_c), float(gamma_star), float(tau_star))
                if lam_s + lam_c < lmax:
                    state = _solve_point(
                        fd.design, fd.y_train, params, ctx, (l, m), beta_prev, opts,
                        use_screening, screen_stats,
                    )
                    n_b += 1
                else:
                    state = _fit_or_null(fd.design, fd.y_train, params, lmax, beta_prev, opts)
                ctx.record((l, m), fd.design, state)
                key = (float(lam_s), float(lam_c))
                stage_b[key] = stage_b.get(key, 0.0) + fd.sse(state)
                beta_prev = state.beta
    if not stage_b:
        raise AllFitsFailed("the lambda guard excluded every grid point")
    lam_s_star, lam_c_star = min(stage_b, key=lambda k: (stage_b[k], -(k[0] + k[1]), -k[0]))

    best = PenaltyParams(lam_s_star, lam_c_star, float(gamma_star), float(tau_star))
    final = _refit(design, y, grid, best, lmax, refit_opts or opts, use_screening)

    surface = {("pilot", v, g): e for (v, g), e in pilot_surface.items()}
    surface.update({("stage_a", lam_s_star, lam_c_star, g, t): e for (g, t), e in stage_a.items()})
    surface.update({("stage_b", ls, lc, float(gamma_star), float(tau_star)): e
                    for (ls, lc), e in stage_b.items()})
    return CvResult(
        best_params=best,
        cv_error_surface=surface,
        fold_assignments=labels,
        final_fit=final,
        selected_effects=final.selected(design),
        stats={
            "pilot_lambda": pilot_v,
            "stage_a_evaluations": n_a,
            "stage_b_evaluations": n_b,
            "screened_fraction_mean": float(np.mean(screen_stats["screened_fraction"]))
            if screen_stats["screened_fraction"] else 0.0,
            "screen_reinstated": screen_stats["reinstated"],
        },
    )


def _refit(design, y, grid, best, lmax, opts, use_screening):
    """Full-data refit at the tuned parameters.

    The fold models being scored were reached by warm starts down the
    lambda_s chain, so the deployed fit is built the same way; a cold
    restart at the tuned parameters is kept as a fallback and the lower
    objective wins (coordinate descent on this nonconvex criterion can
    land in different stationary basins depending on the start).
    """
    from .penalty import objective

    m_star = int(np.flatnonzero(grid.lambda_c_grid == best.lambda_c)[0])
    l_star = int(np.flatnonzero(grid.lambda_s_grid == best.lambda_s)[0])
    ctx = PathContext(grid.lambda_s_grid, grid.lambda_c_grid)
    stats = {"screened_fraction": [], "reinstated": 0}
    beta_prev = None
    warm = None
    for l in range(l_star + 1):
        params = PenaltyParams(float(grid.lambda_s_grid[l]), best.lambda_c,
                               best.gamma, best.tau)
        if params.lambda_s + params.lambda_c < lmax:
            warm = _solve_point(design, y, params, ctx, (l, m_star), beta_prev, opts,
                                use_screening, stats)
        else:
            warm = _fit_or_null(design, y, params, lmax, beta_prev, opts)
        ctx.record((l, m_star), design, warm)
        beta_prev = warm.beta
    cold = fit(design, y, best, opts=opts)
    yc = np.asarray(y, dtype=np.float64)
    yc = yc - yc.mean()
    if objective(design, yc, cold.beta, best) < objective(design, yc, warm.beta, best) - 1e-12:
        return cold
    return warm


def _solve_point(design, y, params, ctx, key, beta_prev, opts, use_screening, stats):
    """Fit one grid point with optional screening plus mandatory KKT repair."""
    p_prime = design.p_prime
    candidates = None
    if use_screening:
        try:
            candidates, _ = screen(ctx, design, key, params.gamma, params.tau)
        except MissingPredecessor:
            candidates = None
    if candidates is not None and candidates.size < p_prime:
        keep = np.zeros(p_prime, dtype=bool)
        keep[candidates] = True
        if beta_prev is not None:
            keep[np.flatnonzero(beta_prev)] = True
            candidates = np.flatnonzero(keep)
        stats["screened_fraction"].append(1.0 - candidates.size / p_prime)
        state = fit(design, y, params, beta_init=beta_prev, opts=opts, candidates=candidates)
        excluded = np.flatnonzero(~keep)
        state = kkt_recheck_and_repair(design, y, params, state, excluded, opts)
        stats["reinstated"] += len(state.reinstated)
        return state
    return fit(design, y, params, beta_init=beta_prev, opts=opts)


@dataclass
class PathPoint:
    l: int
    m: int
    lambda_s: float
    lambda_c: float
    state: FitState
    n_candidates: int
    screened_inactive_fraction: float
    n_reinstated: int


def fit_path(
    design: CmeDesign,
    y: np.ndarray,
    gamma: float,
    tau: float,
    grid: Optional[CvGrid] = None,
    opts: Optional[SolverOptions] = None,
    use_screening: bool = True,
) -> List[PathPoint]:
    """Solve the (lambda_s, lambda_c) grid on the full data at fixed (gamma, tau).

    Chains run down lambda_s within each lambda_c with warm starts; each
    screened point is KKT-repaired.  Exposes the Stage-B machinery without
    folds, with per-point screening statistics.
    """
    y = np.asarray(y, dtype=np.float64)
    if grid is None:
        grid = default_grid(design, y)
    opts = opts or SolverOptions()
    lmax = lambda_max(design, y)
    ctx = PathContext(grid.lambda_s_grid, grid.lambda_c_grid)
    out: List[PathPoint] = []
    stats = {"screened_fraction": [], "reinstated": 0}
    for m, lam_c in enumerate(grid.lambda_c_grid):
        beta_prev = None
        for l, lam_s in enumerate(grid.lambda_s_grid):
            params = PenaltyParams(float(lam_s), float(lam_c), float(gamma), float(tau))
            before = stats["reinstated"]
            if lam_s + lam_c < lmax:
                state = _solve_point(design, y, params, ctx, (l, m), beta_prev, opts,
                                     use_screening, stats)
            else:
                state = _fit_or_null(design, y, params, lmax, beta_prev, opts)
            ctx.record((l, m), design, state)
            n_cand = state.candidates.size
            n_inactive = design.p_prime - state.active_set.size
            frac = (design.p_prime - n_cand) / n_inactive if n_inactive else 0.0
            out.append(PathPoint(l, m, float(lam_s), float(lam_c), state, n_cand,
                                 float(frac), stats["reinstated"] - before))
            beta_prev = state.beta
    return out


def cv_lasso_limit(
    design: CmeDesign,
    y: np.ndarray,
    grid: Optional[CvGrid] = None,
    opts: Optional[SolverOptions] = None,
) -> CvResult:
    """Degenerate-parameter baseline: the solver in its soft-threshold limit.

    (gamma, tau) pinned to (1e6, 1e-6) and a single symmetric chain
    lambda_s = lambda_c = lambda/2, so the composite penalty collapses to
    an l1 penalty of weight lambda_s + lambda_c.
    """
    y = np.asarray(y, dtype=np.float64)
    if grid is None:
        grid = default_grid(design, y)
    opts = opts or SolverOptions()
    labels, fold_data = _make_folds(design, y, grid.folds, grid.seed)
    lmax = lambda_max(design, y)
    surface: Dict[tuple, float] = {}
    for fd in fold_data:
        beta_prev = None
        for v in grid.lambda_s_grid:
            params = PenaltyParams(float(v), float(v), LASSO_LIMIT_GAMMA, LASSO_LIMIT_TAU)
            state = _fit_or_null(fd.design, fd.y_train, params, lmax, beta_prev, opts)
            surface[(float(v),)] = surface.get((float(v),), 0.0) + fd.sse(state)
            beta_prev = state.beta
    if not surface:
        raise AllFitsFailed("lasso-limit sweep produced no fits")
    (v_star,) = min(surface, key=lambda k: (surface[k], -k[0]))
    best = PenaltyParams(v_star, v_star, LASSO_LIMIT_GAMMA, LASSO_LIMIT_TAU)
    final = fit(design, y, best, opts=opts)
    return CvResult(
        best_params=best,
        cv_error_surface={("lasso_limit", v) : e for (v,), e in surface.items()},
        fold_assignments=labels,
        final_fit=final,
        selected_effects=final.selected(design),
        stats={"stage_b_evaluations": len(surface)},
    )
