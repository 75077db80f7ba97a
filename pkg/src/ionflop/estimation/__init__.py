from .lm import FitResult, finite_difference_jacobian, levenberg_marquardt
from .mixture import (
    BrightDarkMixture,
    Calibration,
    EmpiricalPMF,
    LeakyBrightPMF,
    MixtureFit,
    PoissonPMF,
    fit_histogram,
    population_from_bright_weight,
)
from .rabi import (
    RabiCurveModel,
    RabiCurveRegressor,
    RabiDataPoint,
    band_limits,
    confidence_band,
    fit_rabi_curve,
)
from .spectrum import GaussianSpectrumFitter, fit_gaussian_spectrum

__all__ = [
    "BrightDarkMixture",
    "Calibration",
    "EmpiricalPMF",
    "FitResult",
    "GaussianSpectrumFitter",
    "LeakyBrightPMF",
    "MixtureFit",
    "PoissonPMF",
    "RabiCurveModel",
    "RabiCurveRegressor",
    "RabiDataPoint",
    "band_limits",
    "confidence_band",
    "finite_difference_jacobian",
    "fit_gaussian_spectrum",
    "fit_histogram",
    "fit_rabi_curve",
    "levenberg_marquardt",
    "population_from_bright_weight",
]
