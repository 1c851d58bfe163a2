"""CARE: a sequential outlier ensemble with agreement-based error estimation."""

__version__ = "0.1.0"

from .agreement import AgreementSummary, ccdf_auc, pairwise_agreement
from .dataset import (
    Dataset,
    SyntheticBVSpec,
    SyntheticDetectorSpec,
    generate_bv_synthetic,
    generate_detector_outputs,
    load_csv,
    write_csv,
)
from .detectors import DetectorKind, FeatureBag, avgknn_score, lof_score, make_feature_bags
from .ensemble import (
    EnsembleConfig,
    compute_weights,
    fvps_sample,
    run,
    run_care,
    stopping_check,
    weighted_aggregate,
)
from .error_estimation import ErrorEstimate, estimate_errors
from .errors import CareError, DataError, EmptyUnionError, NumericalError, ParameterError
from .evaluation import Procedure, average_precision, bias_variance_experiment
from .neighbors import NeighborList, knn_query
from .scaling import cantelli_threshold, gaussian_scale
