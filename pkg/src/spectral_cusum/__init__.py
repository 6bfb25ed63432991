"""Online detection of emerging communities in dynamic weighted graphs.

The detector is a CUSUM whose increments project each incoming snapshot onto
the top eigenspace of a sliding window of strictly later snapshots. The
package bundles the exact oracle baseline, the closed-form design layer
(drift, tilt, window, and delay formulas), a deterministic Monte Carlo
harness for run lengths and calibration, and stream/sensor file I/O with a
command-line front end.
"""

from .detect import (
    EXACT,
    METHODS,
    SPECTRAL,
    TOP1,
    DetectionResult,
    DetectorConfig,
    cusum_maxform,
    cusum_update,
    exact_increment,
    log_likelihood_ratio,
    run_detector,
    spectral_increment,
    top1_increment,
)
from .graph_model import (
    BACKGROUND,
    CONVENTIONS,
    IID_FULL,
    SYMMETRIC,
    CommunityAssignment,
    GraphSnapshot,
    IndicatorMatrix,
    StreamScenario,
    assignment_from_sizes,
    build_indicator,
    iter_stream,
    make_stream,
    mean_matrix,
    rng_from_key,
    sample_snapshot,
)
from .io import (
    MultichannelSeries,
    StreamFormatError,
    parse_config,
    read_sensor_csv,
    read_stream,
    write_oc,
    write_report,
    write_stream,
    write_trace,
    xcorr_stream,
)
from .montecarlo import (
    CalibrationError,
    DriftMcResult,
    McEstimate,
    McPlan,
    OcPoint,
    calibrate_threshold,
    estimate_arl,
    estimate_drift_mc,
    estimate_edd,
    oc_curve,
    verify_equalizer_mc,
)
from .spectral import (
    SpectralEstimate,
    WindowBuffer,
    estimate_subspace,
    projector,
    sliding_mean,
    top_m_eigs,
)
from .theory import (
    DesignPoint,
    PerturbationConstants,
    Spectrum,
    ValidityError,
    bias_bound,
    bias_constant,
    coupling_matrix,
    delta_star,
    design_point,
    drift_for_delta,
    edd_at_optimal_tilt,
    edd_denominator,
    edd_exact_approx,
    edd_spectral_approx,
    eigenvector_sampling_covariance,
    equalizer_mgf,
    expected_drift_post,
    kl_info,
    optimal_drift,
    optimal_window,
    optimality_ratio,
    perturbation_constants,
    spectrum_from_sizes,
    theory_report,
)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "CONVENTIONS",
    "CalibrationError",
    "CommunityAssignment",
    "DesignPoint",
    "DetectionResult",
    "DetectorConfig",
    "DriftMcResult",
    "EXACT",
    "GraphSnapshot",
    "IID_FULL",
    "IndicatorMatrix",
    "METHODS",
    "McEstimate",
    "McPlan",
    "MultichannelSeries",
    "OcPoint",
    "PerturbationConstants",
    "SPECTRAL",
    "SYMMETRIC",
    "SpectralEstimate",
    "Spectrum",
    "StreamFormatError",
    "StreamScenario",
    "TOP1",
    "ValidityError",
    "WindowBuffer",
    "assignment_from_sizes",
    "bias_bound",
    "bias_constant",
    "build_indicator",
    "calibrate_threshold",
    "coupling_matrix",
    "cusum_maxform",
    "cusum_update",
    "delta_star",
    "design_point",
    "drift_for_delta",
    "edd_at_optimal_tilt",
    "edd_denominator",
    "edd_exact_approx",
    "edd_spectral_approx",
    "eigenvector_sampling_covariance",
    "equalizer_mgf",
    "estimate_arl",
    "estimate_drift_mc",
    "estimate_edd",
    "estimate_subspace",
    "exact_increment",
    "expected_drift_post",
    "iter_stream",
    "kl_info",
    "log_likelihood_ratio",
    "make_stream",
    "mean_matrix",
    "oc_curve",
    "optimal_drift",
    "optimal_window",
    "optimality_ratio",
    "parse_config",
    "perturbation_constants",
    "projector",
    "read_sensor_csv",
    "read_stream",
    "rng_from_key",
    "run_detector",
    "sample_snapshot",
    "sliding_mean",
    "spectral_increment",
    "spectrum_from_sizes",
    "theory_report",
    "top1_increment",
    "top_m_eigs",
    "verify_equalizer_mc",
    "write_oc",
    "write_report",
    "write_stream",
    "write_trace",
    "xcorr_stream",
]
