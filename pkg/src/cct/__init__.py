"""Localized conformal p-values and conditional testing procedures."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .kernels import KernelSpec, default_bandwidth, kernel_weight, sample_localization_point
from .pvalues import (
    CalibrationSet,
    DegenerateWeightsError,
    LocalizedPValue,
    localized_p_value,
    localized_p_value_tiebreak,
    simplified_localized_p_value,
    unweighted_conformal_p_value,
)
from .outliers import OutlierRun, bh_procedure, detect_outliers, fdp_and_power
from .screening import (
    GreaterEqualRule,
    MemberRule,
    MultiLabelDataset,
    ScreeningResult,
    fwer_metrics,
    screen,
    summary_score,
)
from .selection import SelectionResult, pser_metrics, select
from .twosample import (
    DegenerateVarianceError,
    TwoSampleResult,
    conditional_two_sample_test,
    d_hat,
    weighted_statistic,
)

__all__ = [
    "BACKEND",
    "KernelSpec",
    "default_bandwidth",
    "kernel_weight",
    "sample_localization_point",
    "CalibrationSet",
    "DegenerateWeightsError",
    "LocalizedPValue",
    "localized_p_value",
    "localized_p_value_tiebreak",
    "simplified_localized_p_value",
    "unweighted_conformal_p_value",
    "OutlierRun",
    "bh_procedure",
    "detect_outliers",
    "fdp_and_power",
    "GreaterEqualRule",
    "MemberRule",
    "MultiLabelDataset",
    "ScreeningResult",
    "fwer_metrics",
    "screen",
    "summary_score",
    "SelectionResult",
    "pser_metrics",
    "select",
    "DegenerateVarianceError",
    "TwoSampleResult",
    "conditional_two_sample_test",
    "d_hat",
    "weighted_statistic",
    "__version__",
]
