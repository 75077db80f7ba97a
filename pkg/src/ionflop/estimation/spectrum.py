"""Gaussian fits to spectrometer traces."""

from __future__ import annotations

import numpy as np
from scipy.integrate import trapezoid
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_consistent_length, check_is_fitted

from ..errors import FitFailure, InvalidInputError
from ..pulse import SpectrumModel
from .lm import levenberg_marquardt


def _gauss(p, x):
    amp, x0, sig, base = p
    return base + amp * np.exp(-0.5 * ((x - x0) / sig) ** 2)


def _gauss_jac(p, x):
    amp, x0, sig, _ = p
    u = (x - x0) / sig
    e = np.exp(-0.5 * u * u)
    return np.column_stack([e, amp * e * u / sig, amp * e * u * u / sig, np.ones_like(x)])


class GaussianSpectrumFitter(RegressorMixin, BaseEstimator):
    """Least-squares fit of ``A exp(-(f - f0)^2 / (2 sigma^2)) + baseline``.

    Frequencies are in Hz. After fitting, ``spectrum_`` holds a
    :class:`SpectrumModel` carrying ``instrument_sigma`` for deconvolution.

    The fit is rejected (``FitFailure``) when the data do not show a resolved
    peak: flat or monotone input, a centre outside the sampled range, a width
    below one sample spacing, or an amplitude under ``min_snr`` standard
    errors.
    """

    def __init__(self, instrument_sigma=0.0, fit_baseline=True, min_snr=5.0, max_iter=200, xtol=1e-12):
        self.instrument_sigma = instrument_sigma
        self.fit_baseline = fit_baseline
        self.min_snr = min_snr
        self.max_iter = max_iter
        self.xtol = xtol

    def fit(self, X, y):
        f = np.asarray(X, dtype=float).reshape(-1)
        a = np.asarray(y, dtype=float).reshape(-1)
        check_consistent_length(f, a)
        if f.size < 4:
            raise InvalidInputError("need at least 4 spectrum samples")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(a))):
            raise InvalidInputError("spectrum contains non-finite values")
        order = np.argsort(f)
        f, a = f[order], a[order]
        spread = np.ptp(a)
        if spread <= 0:
            raise FitFailure("flat spectrum")
        d = np.diff(a)
        if np.all(d >= 0) or np.all(d <= 0):
            raise FitFailure("monotone spectrum has no peak")

        # work in centred, unit-scale coordinates
        f_mid = 0.5 * (f[0] + f[-1])
        f_scale = 0.5 * (f[-1] - f[0])
        a_scale = np.max(np.abs(a))
        x = (f - f_mid) / f_scale
        z = a / a_scale
        spacing = np.median(np.diff(x))

        base0 = np.percentile(z, 5) if self.fit_baseline else 0.0
        amp0 = z.max() - base0
        x00 = x[np.argmax(z)]
        area = trapezoid(np.clip(z - base0, 0, None), x)
        sig0 = np.clip(area / (amp0 * np.sqrt(2 * np.pi)), spacing, 2.0)
        p0 = np.array([amp0, x00, sig0, base0])
        free = slice(None) if self.fit_baseline else slice(0, 3)

        def full(p):
            q = p0.copy()
            q[free] = p
            return q

        res = levenberg_marquardt(
            lambda p: _gauss(full(p), x) - z,
            p0[free],
            lambda p: _gauss_jac(full(p), x)[:, free],
            names=["amplitude", "center", "sigma", "baseline"][free],
            max_iter=self.max_iter,
            xtol=self.xtol,
        )
        p = full(np.array(list(res.parameters.values())))
        p[2] = abs(p[2])
        dof = max(f.size - len(res.parameters), 1)
        s2 = res.residual_norm**2 / dof
        cov = res.covariance * s2
        std = np.zeros(4)
        std[free] = np.sqrt(np.clip(np.diag(cov), 0, None))
        diagnostics = {"iterations": res.iterations, "parameters": p.tolist(), "residual_norm": res.residual_norm}

        amp, x0, sig, base = p
        if not res.converged:
            raise FitFailure(f"Gaussian fit did not converge: {res.message}", diagnostics)
        if amp <= 0:
            raise FitFailure("fitted peak amplitude is not positive", diagnostics)
        if not (x[0] <= x0 <= x[-1]):
            raise FitFailure("fitted centre lies outside the sampled range", diagnostics)
        if sig < spacing:
            raise FitFailure("fitted width is below the sample spacing", diagnostics)
        if std[0] > 0 and amp / std[0] < self.min_snr:
            raise FitFailure(f"peak amplitude is only {amp / std[0]:.2f} standard errors", diagnostics)

        self.spectrum_ = SpectrumModel(
            center_frequency=float(f_mid + x0 * f_scale),
            sigma=float(sig * f_scale),
            amplitude=float(amp * a_scale),
            instrument_sigma=float(self.instrument_sigma),
            baseline=float(base * a_scale),
            center_std=float(std[1] * f_scale),
            sigma_std=float(std[2] * f_scale),
            amplitude_std=float(std[0] * a_scale),
        )
        self.n_iter_ = res.iterations
        self.residual_norm_ = float(res.residual_norm * a_scale)
        return self

    def predict(self, X):
        check_is_fitted(self, "spectrum_")
        return self.spectrum_(np.asarray(X, dtype=float).reshape(-1))


def fit_gaussian_spectrum(samples, instrument_sigma=0.0, **kwargs) -> SpectrumModel:
    """Fit ``[(frequency_Hz, amplitude), ...]`` or a ``(freq, amp)`` pair of arrays."""
    if isinstance(samples, tuple) and len(samples) == 2 and np.ndim(samples[0]) == 1:
        f, a = samples
    else:
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidInputError("samples must be (frequency, amplitude) pairs")
        f, a = arr[:, 0], arr[:, 1]
    return GaussianSpectrumFitter(instrument_sigma=instrument_sigma, **kwargs).fit(f, a).spectrum_
