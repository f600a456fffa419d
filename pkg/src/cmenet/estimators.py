"""scikit-learn style wrappers so the solver composes with the ecosystem.

``CmeDesigner`` is a transformer expanding binary factors into the
normalized ME+CME matrix; ``CmeNetRegressor`` fits at fixed penalties;
``CmeNetCV`` tunes them by cross-validation.  All take the raw n x p
factor matrix as X (entries -1/+1, or 0/1 with ``map01=True``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .design import FactorMatrix, build_cme_design
from .penalty import PenaltyParams
from .solver import SolverOptions, fit
from .tuning import cv_cmenet, default_grid


def _factor_matrix(X, map01):
    X = np.asarray(X)
    return FactorMatrix.from01(X) if map01 else FactorMatrix(X)


class CmeDesigner(TransformerMixin, BaseEstimator):
    """Expand binary factors into the normalized ME+CME design matrix."""

    def __init__(self, include_cmes=True, map01=False, degenerate="error"):
        self.include_cmes = include_cmes
        self.map01 = map01
        self.degenerate = degenerate

    def fit(self, X, y=None):
        X = check_array(X, dtype=None)
        self.design_ = build_cme_design(
            _factor_matrix(X, self.map01),
            include_cmes=self.include_cmes,
            degenerate=self.degenerate,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "design_")
        X = check_array(X, dtype=None)
        return self.design_.transform(_factor_matrix(X, self.map01))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "design_")
        return np.asarray(self.design_.effect_names, dtype=object)


class CmeNetRegressor(RegressorMixin, BaseEstimator):
    """Penalized ME+CME regression at fixed (lambda_s, lambda_c, gamma, tau)."""

    def __init__(
        self,
        lambda_s=0.1,
        lambda_c=0.1,
        gamma=3.0,
        tau=0.05,
        include_cmes=True,
        map01=False,
        tol=1e-6,
        max_sweeps=1000,
        use_active_set=True,
    ):
        self.lambda_s = lambda_s
        self.lambda_c = lambda_c
        self.gamma = gamma
        self.tau = tau
        self.include_cmes = include_cmes
        self.map01 = map01
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.use_active_set = use_active_set

    def _options(self):
        return SolverOptions(
            tol=self.tol, max_sweeps=self.max_sweeps, use_active_set=self.use_active_set
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None, y_numeric=True)
        self.design_ = build_cme_design(
            _factor_matrix(X, self.map01), include_cmes=self.include_cmes
        )
        params = PenaltyParams(self.lambda_s, self.lambda_c, self.gamma, self.tau)
        state = fit(self.design_, y, params, opts=self._options())
        self.fit_state_ = state
        self.coef_ = state.beta
        self.intercept_ = state.y_center
        self.n_iter_ = state.n_sweeps
        self.converged_ = state.converged
        self.selected_effects_ = [
            (e.name(self.design_.factor_names), b) for e, b in state.selected(self.design_)
        ]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_state_")
        X = check_array(X, dtype=None)
        cols = self.design_.transform(_factor_matrix(X, self.map01))
        return cols @ self.coef_ + self.intercept_


class CmeNetCV(RegressorMixin, BaseEstimator):
    """Cross-validated bi-level CME selection (two-stage tuning)."""

    def __init__(
        self,
        L=20,
        M=20,
        cv=10,
        seed=0,
        map01=False,
        use_screening=True,
        tol=1e-6,
        max_sweeps=1000,
        init_sweeps=25,
    ):
        self.L = L
        self.M = M
        self.cv = cv
        self.seed = seed
        self.map01 = map01
        self.use_screening = use_screening
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.init_sweeps = init_sweeps

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None, y_numeric=True)
        self.design_ = build_cme_design(_factor_matrix(X, self.map01))
        grid = default_grid(self.design_, y, L=self.L, M=self.M, folds=self.cv, seed=self.seed)
        opts = SolverOptions(
            tol=self.tol, max_sweeps=self.max_sweeps, active_set_init_sweeps=self.init_sweeps
        )
        res = cv_cmenet(self.design_, y, grid, opts=opts, use_screening=self.use_screening)
        self.cv_result_ = res
        self.best_params_ = res.best_params
        self.coef_ = res.final_fit.beta
        self.intercept_ = res.final_fit.y_center
        self.selected_effects_ = [
            (e.name(self.design_.factor_names), b) for e, b in res.selected_effects
        ]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cv_result_")
        X = check_array(X, dtype=None)
        cols = self.design_.transform(_factor_matrix(X, self.map01))
        return cols @ self.coef_ + self.intercept_
