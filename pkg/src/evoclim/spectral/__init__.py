"""Spectral estimation: periodograms, blockwise Whittle fits, smoothing and diagnostics."""
from .diagnostics import coherence_spectrum, deviance, model_loglik, predictive_loglik
from .model import (SpectralChangeModel, fit_spectral_model, predict_log_rho, standard_errors,
                    whittle_data_from_ensemble)
from .periodogram import (BaselinePeriodogram, LocalPeriodogramSet, baseline_periodogram,
                          local_periodograms, periodogram)
from .smoothing import (BandwidthParams, bandwidth_profile, cross_validate_bandwidth, h_profile,
                        smooth_delta, smoothing_matrix)
from .whittle import (RoughFit, TransientBlocks, UnidentifiableDeltaError, WhittleData,
                      build_whittle_data, maximize_whittle, whittle_gradient, whittle_loglik)

__all__ = [
    "BandwidthParams", "BaselinePeriodogram", "LocalPeriodogramSet", "RoughFit",
    "SpectralChangeModel", "TransientBlocks", "UnidentifiableDeltaError", "WhittleData",
    "bandwidth_profile", "baseline_periodogram", "build_whittle_data", "coherence_spectrum",
    "cross_validate_bandwidth", "deviance", "fit_spectral_model", "h_profile", "local_periodograms",
    "maximize_whittle", "model_loglik", "periodogram", "predict_log_rho", "predictive_loglik",
    "smooth_delta", "smoothing_matrix", "standard_errors", "whittle_data_from_ensemble",
    "whittle_gradient", "whittle_loglik",
]
