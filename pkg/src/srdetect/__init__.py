"""Quickest change detection with the Shiryaev-Roberts procedure.

Detection rules (Shiryaev-Roberts, Shiryaev, CUSUM), Monte Carlo threshold
calibration, and estimators of their delay and false-alarm characteristics.
"""
from .calibration import ArlEstimate, Calibration, calibrate, calibrate_threshold, estimate_arl2fa
from .detectors import (
    Detector,
    MixtureRule,
    ThresholdRule,
    alarm_time,
    mixture_rule,
    multicyclic_run,
    run_to_alarm,
    shiryaev_posterior,
    shiryaev_update,
    simulate_multicyclic,
    simulate_run_lengths,
    sr_update,
)
from .errors import (
    CalibrationError,
    CalibrationMismatchError,
    CalibrationUnreliableError,
    DomainError,
    KTooLargeError,
    UndefinedPosteriorError,
    UnsupportedModelError,
)
from .metrics import (
    Estimate,
    GeometricPrior,
    LossSpec,
    compare_rules,
    conditional_add,
    delay_profile,
    expected_loss,
    integral_add_cm,
    integral_add_direct,
    mixture_add_experiment,
    operating_characteristics,
    residual_time_dist,
    stationary_add_direct,
    stationary_add_formula,
    sup_conditional_add,
    tv_distance,
    weights,
)
from .models import ChangeSpec, ObservationModel, enumerate_paths, likelihood_ratio, log_likelihood_ratio, sample_path
from .streams import RandomStreams

__version__ = "0.1.0"
