"""Fitting excitation-versus-pulse-energy data with the square-pulse model.

The effective Rabi frequency is ``alpha * sqrt(C_sc)`` where ``C_sc`` is the
background scatter count recorded with each pulse (proportional to pulse
energy). Detuning and effective duration are held fixed; ``alpha`` is the
only free parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from ..dynamics import rect_probability, rect_probability_dalpha
from ..errors import FitFailure, InvalidInputError, NonIdentifiableError
from .lm import FitResult, levenberg_marquardt


@dataclass(frozen=True)
class RabiDataPoint:
    scatter_counts: float
    excited_population: float
    population_std_error: float

    def __post_init__(self):
        if not self.scatter_counts >= 0:
            raise InvalidInputError("scatter_counts must be >= 0")
        if not -1e-12 <= self.excited_population <= 1.05:
            raise InvalidInputError(f"excited_population out of range: {self.excited_population!r}")
        if not self.population_std_error >= 0:
            raise InvalidInputError("population_std_error must be >= 0")


@dataclass(frozen=True)
class RabiCurveModel:
    alpha: float
    t_eff: float
    detuning: float
    alpha_covariance: float
    t_eff_std: float = 0.0
    detuning_std: float = 0.0
    converged: bool = True
    iterations: int = 0

    @property
    def alpha_std(self) -> float:
        return math.sqrt(max(self.alpha_covariance, 0.0))

    def rabi_frequency(self, c_sc):
        return self.alpha * np.sqrt(np.asarray(c_sc, dtype=float))

    def pulse_area(self, c_sc):
        return self.rabi_frequency(c_sc) * self.t_eff

    def __call__(self, c_sc):
        return rect_probability(self.rabi_frequency(c_sc), self.detuning, self.t_eff)


def _c_sc_column(X):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise InvalidInputError("X must hold a single column of scatter counts")
        X = X[:, 0]
    if np.any(X < 0):
        raise InvalidInputError("scatter counts must be >= 0")
    return X


def initial_alpha(c_sc, y, weights, t_eff, detuning, n_grid=4000):
    """Coarse log-grid search for alpha.

    Rabi curves alias: larger alpha can fold more oscillations through the
    same points. Among local minima of the weighted squared error that are
    within 1% of the best, the smallest alpha is returned.
    """
    s_max = math.sqrt(float(np.max(c_sc)))
    theta = np.geomspace(0.02, 60.0, n_grid)
    alphas = theta / (s_max * t_eff)
    pred = rect_probability(alphas[:, None] * np.sqrt(c_sc)[None, :], detuning, t_eff)
    chi2 = np.sum(weights * (pred - y) ** 2, axis=1)
    is_min = np.r_[chi2[0] < chi2[1], (chi2[1:-1] <= chi2[:-2]) & (chi2[1:-1] <= chi2[2:]), chi2[-1] < chi2[-2]]
    best = chi2.min()
    ok = is_min & (chi2 <= best * 1.01 + 1e-12 * max(1.0, np.sum(weights)))
    return float(alphas[np.flatnonzero(ok)[0]])


class RabiCurveRegressor(RegressorMixin, BaseEstimator):
    """Weighted fit of ``P(alpha * sqrt(C_sc))`` to measured populations.

    ``sample_weight`` should be ``1 / sigma**2`` for per-point standard errors
    ``sigma``. With ``absolute_sigma=True`` the reported variance of alpha
    takes those errors at face value; otherwise it is rescaled by the reduced
    chi-square.
    """

    def __init__(
        self,
        t_eff=2.36e-12,
        detuning=0.0,
        alpha0=None,
        absolute_sigma=True,
        max_iter=200,
        xtol=1e-10,
        damping=1e-3,
        t_eff_std=0.0,
        detuning_std=0.0,
    ):
        self.t_eff = t_eff
        self.detuning = detuning
        self.alpha0 = alpha0
        self.absolute_sigma = absolute_sigma
        self.max_iter = max_iter
        self.xtol = xtol
        self.damping = damping
        self.t_eff_std = t_eff_std
        self.detuning_std = detuning_std

    def fit(self, X, y, sample_weight=None):
        c_sc = _c_sc_column(X)
        y = np.asarray(y, dtype=float)
        check_consistent_length(c_sc, y)
        if sample_weight is None:
            weights = np.ones_like(y)
        else:
            weights = np.asarray(sample_weight, dtype=float)
            check_consistent_length(c_sc, weights)
            if np.any(weights < 0) or not np.all(np.isfinite(weights)):
                raise InvalidInputError("sample_weight must be finite and >= 0")
        if np.unique(c_sc[weights > 0]).size < 2 or np.all(c_sc == 0):
            raise NonIdentifiableError("need at least two points with distinct scatter counts")
        if not self.t_eff > 0:
            raise InvalidInputError("t_eff must be > 0")

        t_eff, detuning = float(self.t_eff), float(self.detuning)
        a0 = self.alpha0 if self.alpha0 is not None else initial_alpha(c_sc, y, weights, t_eff, detuning)
        sw = np.sqrt(weights)
        scale = a0  # fit in units of the initial guess for conditioning

        def residuals(p):
            return sw * (rect_probability(p[0] * scale * np.sqrt(c_sc), detuning, t_eff) - y)

        def jacobian(p):
            return (sw * rect_probability_dalpha(p[0] * scale, c_sc, detuning, t_eff) * scale)[:, None]

        result = levenberg_marquardt(
            residuals,
            [1.0],
            jacobian,
            names=["alpha"],
            max_iter=self.max_iter,
            xtol=self.xtol,
            damping=self.damping,
            bounds=([0.0], [np.inf]),
        )
        diagnostics = {"iterations": result.iterations, "alpha": result.parameters["alpha"] * scale,
                       "residual_norm": result.residual_norm}
        if not result.converged:
            raise FitFailure(f"alpha fit did not converge: {result.message}", diagnostics)
        alpha = result.parameters["alpha"] * scale
        if not alpha > 0:
            raise FitFailure("alpha fit collapsed to zero", diagnostics)
        var = float(result.covariance[0, 0]) * scale**2
        dof = max(int(np.count_nonzero(weights)) - 1, 1)
        self.chi2_ = result.residual_norm**2
        if not self.absolute_sigma:
            var *= self.chi2_ / dof
        self.alpha_ = alpha
        self.alpha_std_ = math.sqrt(var)
        self.n_iter_ = result.iterations
        self.fit_result_ = FitResult(
            parameters={"alpha": alpha},
            covariance=np.array([[var]]),
            residual_norm=result.residual_norm,
            converged=True,
            iterations=result.iterations,
            message=result.message,
            extra={"alpha0": a0, "dof": dof, "chi2": self.chi2_},
        )
        self.model_ = RabiCurveModel(
            alpha=alpha,
            t_eff=t_eff,
            detuning=detuning,
            alpha_covariance=var,
            t_eff_std=float(self.t_eff_std),
            detuning_std=float(self.detuning_std),
            converged=True,
            iterations=result.iterations,
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_(_c_sc_column(X))

    def confidence_band(self, X, n_sigma=2.0):
        check_is_fitted(self, "model_")
        c_sc = _c_sc_column(X)
        return band_limits(self.model_, c_sc, n_sigma)


def band_limits(model: RabiCurveModel, c_sc, n_sigma=2.0):
    """Lower and upper ``n_sigma`` limits by first-order error propagation."""
    c_sc = np.asarray(c_sc, dtype=float)
    centre = model(c_sc)
    var = (rect_probability_dalpha(model.alpha, c_sc, model.detuning, model.t_eff) ** 2) * model.alpha_covariance
    omega = model.rabi_frequency(c_sc)
    if model.t_eff_std > 0:
        h = 1e-6 * model.t_eff
        d = (rect_probability(omega, model.detuning, model.t_eff + h)
             - rect_probability(omega, model.detuning, model.t_eff - h)) / (2 * h)
        var = var + (d * model.t_eff_std) ** 2
    if model.detuning_std > 0:
        h = 1e-6 * max(abs(model.detuning), model.detuning_std)
        d = (rect_probability(omega, model.detuning + h, model.t_eff)
             - rect_probability(omega, model.detuning - h, model.t_eff)) / (2 * h)
        var = var + (d * model.detuning_std) ** 2
    half = n_sigma * np.sqrt(var)
    return centre - half, centre + half


def confidence_band(model: RabiCurveModel, c_sc_grid, n_sigma=2.0):
    """``[(C_sc, lower, upper), ...]`` along ``c_sc_grid``."""
    grid = np.asarray(c_sc_grid, dtype=float)
    lo, hi = band_limits(model, grid, n_sigma)
    return list(zip(grid.tolist(), lo.tolist(), hi.tolist()))


def fit_rabi_curve(points, t_eff, detuning, **kwargs) -> RabiCurveModel:
    points = list(points)
    if len(points) < 2:
        raise NonIdentifiableError("need at least two points with distinct scatter counts")
    c_sc = np.array([p.scatter_counts for p in points])
    y = np.array([p.excited_population for p in points])
    se = np.array([p.population_std_error for p in points])
    if np.any(se <= 0):
        weights = np.ones_like(y)
        kwargs.setdefault("absolute_sigma", False)
    else:
        weights = 1.0 / se**2
    reg = RabiCurveRegressor(t_eff=float(t_eff), detuning=float(detuning), **kwargs)
    return reg.fit(c_sc, y, sample_weight=weights).model_
