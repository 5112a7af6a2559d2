"""Online detection of changes in the correlation structure of large-dimensional streams."""
from .model import (
    ArlApproxInput,
    ConfigError,
    CorrelationEstimate,
    DegenerateWindowError,
    DetectorConfig,
    DiffVector,
    Enhancement,
    Kind,
    MomentSpec,
    Observation,
    SignalStrength,
    Variant,
    signal_strength,
    vech,
    vech_index,
)
from .corrstat import (
    ReferenceModel,
    WindowBuffer,
    build_reference,
    diff_vector,
    expected_v_known_mean,
    expected_v_unknown_mean,
    sample_correlation,
    sample_covariance,
)
from .detectors import (
    DetectionState,
    Detector,
    SubsetSpec,
    combined_statistic,
    evaluate_statistic,
    grid_subsets,
    subset_scan,
    weight,
)

__version__ = "0.1.0"
