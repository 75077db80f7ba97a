"""Bright/dark photon-count mixture fitting.

A readout histogram is modelled as ``w * P_bright(k) + (1 - w) * P_dark(k)``.
The bright weight ``w`` estimates the population of the bright manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import InvalidInputError, NonIdentifiableError
from ..protocol import CountHistogram, CycleTiming, ReadoutModel

_TINY = 1e-300


class PoissonPMF:
    def __init__(self, mean):
        self.mean = float(mean)

    def __call__(self, k):
        return stats.poisson.pmf(np.asarray(k), self.mean)

    @property
    def params(self):
        return {"family": "poisson", "mean": self.mean}


class LeakyBrightPMF:
    """Counts from a bright ion that may be pumped dark during readout.

    Means are in counts per readout window; ``leak`` is leak_rate * readout
    time. With leak time ``u`` (as a fraction of the window) the count is
    Poisson(bright_mean * min(u, 1) + dark_mean).
    """

    def __init__(self, bright_mean, dark_mean=0.0, leak=0.0, nodes=64):
        self.bright_mean = float(bright_mean)
        self.dark_mean = float(dark_mean)
        self.leak = float(leak)
        self._u, self._wq = np.polynomial.legendre.leggauss(nodes)
        self._u = 0.5 * (self._u + 1.0)
        self._wq = 0.5 * self._wq

    def __call__(self, k):
        k = np.asarray(k)
        full = stats.poisson.pmf(k, self.bright_mean + self.dark_mean)
        if self.leak <= 0:
            return full
        g = self.leak
        means = self.bright_mean * self._u + self.dark_mean
        dens = g * np.exp(-g * self._u) * self._wq
        partial = stats.poisson.pmf(k[..., None], means) @ dens
        return np.exp(-g) * full + partial

    @property
    def params(self):
        return {
            "family": "leaky_poisson",
            "bright_mean": self.bright_mean,
            "dark_mean": self.dark_mean,
            "leak": self.leak,
        }


class EmpiricalPMF:
    """PMF read off a reference histogram with additive smoothing.

    Counts above the largest observed value share one pseudo-count spread
    geometrically so the PMF stays normalisable.
    """

    def __init__(self, hist: CountHistogram, smoothing=0.5):
        values, occ = hist.arrays()
        self.kmax = int(values.max()) if values.size else 0
        table = np.zeros(self.kmax + 1)
        table[values] = occ
        norm = hist.total + smoothing * (self.kmax + 2)
        self._table = (table + smoothing) / norm
        self._tail = smoothing / norm
        self.smoothing = smoothing
        self.total = hist.total

    def __call__(self, k):
        k = np.asarray(k, dtype=int)
        inside = k <= self.kmax
        out = np.empty(k.shape)
        out[inside] = self._table[k[inside]]
        excess = k[~inside] - self.kmax
        out[~inside] = self._tail * 0.5**excess
        return out

    @property
    def params(self):
        return {"family": "empirical", "total": int(self.total), "smoothing": self.smoothing}


@dataclass(frozen=True)
class Calibration:
    bright_pmf: object
    dark_pmf: object

    @classmethod
    def from_reference_histograms(cls, bright: CountHistogram, dark: CountHistogram, smoothing=0.5):
        return cls(EmpiricalPMF(bright, smoothing), EmpiricalPMF(dark, smoothing))

    @classmethod
    def from_readout_model(cls, readout: ReadoutModel, timing: CycleTiming = None):
        timing = timing or CycleTiming()
        T = float(timing.readout)
        dark = readout.dark_rate * T
        bright = LeakyBrightPMF(readout.bright_rate * T, dark, readout.leak_rate * T)
        return cls(bright, PoissonPMF(dark))


@dataclass
class MixtureFit:
    bright_weight: float
    weight_std_error: float
    log_likelihood: float
    bright_params: dict = field(default_factory=dict)
    dark_params: dict = field(default_factory=dict)


def _as_counts(X, sample_weight):
    x = np.asarray(X)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise InvalidInputError("expected a single column of photon counts")
        x = x[:, 0]
    if x.ndim != 1:
        raise InvalidInputError("expected a 1-d array of photon counts")
    if x.size == 0:
        raise InvalidInputError("no counts to fit")
    if not np.all(np.isfinite(x)) or np.any(x < 0) or np.any(x != np.round(x)):
        raise InvalidInputError("photon counts must be non-negative integers")
    x = x.astype(np.int64)
    if sample_weight is None:
        w = np.ones(x.size)
    else:
        w = np.asarray(sample_weight, dtype=float)
        if w.shape != x.shape or np.any(w < 0):
            raise InvalidInputError("sample_weight must be non-negative and match X")
    # collapse to a histogram: the fit depends only on the multiset of counts
    values, inverse = np.unique(x, return_inverse=True)
    occ = np.bincount(inverse, weights=w, minlength=values.size)
    keep = occ > 0
    return values[keep], occ[keep]


class BrightDarkMixture(BaseEstimator):
    """Maximum-likelihood bright weight of a two-component count mixture.

    With ``bright_pmf`` and ``dark_pmf`` given (calibration-first mode), only
    the weight is fitted. Otherwise both components are Poisson and their
    means are co-fitted by EM; this is less stable when the components
    overlap.

    ``X`` is an array of photon counts; histogram data can be passed as the
    distinct count values with ``sample_weight`` set to their occurrences.
    """

    def __init__(self, bright_pmf=None, dark_pmf=None, max_iter=1000, tol=1e-12):
        self.bright_pmf = bright_pmf
        self.dark_pmf = dark_pmf
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None, sample_weight=None):
        values, occ = _as_counts(X, sample_weight)
        if (self.bright_pmf is None) != (self.dark_pmf is None):
            raise InvalidInputError("give both bright_pmf and dark_pmf, or neither")
        if self.bright_pmf is None:
            self._fit_em(values, occ)
        else:
            self.bright_pmf_, self.dark_pmf_ = self.bright_pmf, self.dark_pmf
            self._fit_weight(values, occ)
        return self

    def _fit_weight(self, values, occ):
        b = np.maximum(self.bright_pmf_(values), _TINY)
        d = np.maximum(self.dark_pmf_(values), _TINY)
        diff = b - d

        def score(w):
            return np.sum(occ * diff / (w * b + (1.0 - w) * d))

        if score(0.0) <= 0.0:
            w = 0.0
        elif score(1.0) >= 0.0:
            w = 1.0
        else:
            w = optimize.brentq(score, 0.0, 1.0, xtol=1e-15, rtol=1e-15, maxiter=self.max_iter)
        mix = w * b + (1.0 - w) * d
        info = np.sum(occ * (diff / mix) ** 2)
        self.bright_weight_ = float(w)
        self.weight_std_error_ = float(1.0 / np.sqrt(info)) if info > 0 else np.inf
        self.log_likelihood_ = float(np.sum(occ * np.log(mix)))
        self.n_iter_ = 1

    def _fit_em(self, values, occ):
        if values.size < 2:
            raise NonIdentifiableError(
                "histogram has a single populated bin; a co-fitted mixture is not identifiable"
            )
        total = occ.sum()
        mean = np.sum(occ * values) / total
        lo = max(np.sum(occ * values * (values <= mean)) / max(np.sum(occ * (values <= mean)), 1), 1e-3)
        hi = np.sum(occ * values * (values > mean)) / max(np.sum(occ * (values > mean)), 1)
        w = np.sum(occ * (values > mean)) / total
        prev = -np.inf
        for it in range(1, self.max_iter + 1):
            lb = np.log(max(w, _TINY)) + stats.poisson.logpmf(values, hi)
            ld = np.log(max(1.0 - w, _TINY)) + stats.poisson.logpmf(values, lo)
            ll_k = np.logaddexp(lb, ld)
            ll = np.sum(occ * ll_k)
            resp = np.exp(lb - ll_k)
            nb = np.sum(occ * resp)
            nd = total - nb
            w = nb / total
            hi = np.sum(occ * resp * values) / max(nb, _TINY)
            lo = max(np.sum(occ * (1 - resp) * values) / max(nd, _TINY), 1e-9)
            if ll - prev < self.tol * max(1.0, abs(ll)):
                break
            prev = ll
        if hi < lo:
            hi, lo, w = lo, hi, 1.0 - w
        self.bright_pmf_ = PoissonPMF(hi)
        self.dark_pmf_ = PoissonPMF(lo)
        self.n_iter_ = it
        self.bright_weight_ = float(w)
        self.log_likelihood_ = float(self._loglik(np.array([w, hi, lo]), values, occ))
        self.weight_std_error_ = self._cofit_weight_error(np.array([w, hi, lo]), values, occ)

    @staticmethod
    def _loglik(theta, values, occ):
        w, hi, lo = theta
        lb = np.log(max(w, _TINY)) + stats.poisson.logpmf(values, hi)
        ld = np.log(max(1.0 - w, _TINY)) + stats.poisson.logpmf(values, lo)
        return np.sum(occ * np.logaddexp(lb, ld))

    def _cofit_weight_error(self, theta, values, occ):
        # observed information of (w, mean_bright, mean_dark) by central differences
        h = np.array([1e-5, 1e-5 * max(theta[1], 1), 1e-5 * max(theta[2], 1e-3)])
        n = theta.size
        H = np.empty((n, n))
        f = lambda t: self._loglik(t, values, occ)  # noqa: E731
        for i in range(n):
            for j in range(i, n):
                ei, ej = np.eye(n)[i] * h[i], np.eye(n)[j] * h[j]
                H[i, j] = H[j, i] = (
                    f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
                ) / (4 * h[i] * h[j])
        try:
            cov = np.linalg.inv(-H)
        except np.linalg.LinAlgError:
            return np.inf
        return float(np.sqrt(cov[0, 0])) if cov[0, 0] > 0 else np.inf

    def predict_proba(self, X):
        """Posterior (dark, bright) membership of each count."""
        check_is_fitted(self, "bright_weight_")
        k = np.asarray(X).reshape(-1).astype(int)
        w = self.bright_weight_
        b = w * self.bright_pmf_(k)
        d = (1.0 - w) * self.dark_pmf_(k)
        tot = np.maximum(b + d, _TINY)
        return np.column_stack([d / tot, b / tot])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)

    def score(self, X, y=None, sample_weight=None):
        """Mean log-likelihood per count."""
        check_is_fitted(self, "bright_weight_")
        values, occ = _as_counts(X, sample_weight)
        w = self.bright_weight_
        mix = w * self.bright_pmf_(values) + (1 - w) * self.dark_pmf_(values)
        return float(np.sum(occ * np.log(np.maximum(mix, _TINY))) / occ.sum())

    def to_fit(self) -> MixtureFit:
        check_is_fitted(self, "bright_weight_")
        return MixtureFit(
            bright_weight=self.bright_weight_,
            weight_std_error=self.weight_std_error_,
            log_likelihood=self.log_likelihood_,
            bright_params=self.bright_pmf_.params,
            dark_params=self.dark_pmf_.params,
        )


def fit_histogram(hist: CountHistogram, calibration: Calibration = None) -> MixtureFit:
    if hist.total <= 0:
        raise InvalidInputError("histogram is empty")
    values, occ = hist.arrays()
    if calibration is None:
        est = BrightDarkMixture()
    else:
        est = BrightDarkMixture(calibration.bright_pmf, calibration.dark_pmf)
    return est.fit(values, sample_weight=occ).to_fit()


def population_from_bright_weight(w, bright_fraction=2.0 / 3.0) -> float:
    """Excited population before decay, given the bright-manifold weight.

    With the Yb-171 branching table this is ``1.5 * w``.
    """
    w = float(w)
    if not 0.0 <= w <= 1.0:
        raise InvalidInputError(f"weight out of range: {w!r}")
    return w / bright_fraction

