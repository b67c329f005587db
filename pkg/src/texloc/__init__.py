"""texloc: ground-texture localization with an analytic success model.

The package covers the full loop: procedural texture worlds and synthetic
datasets, feature extraction and two matching strategies, translation
voting with RANSAC pose estimation, a closed-form prediction of the
localization success rate from cheap test-image statistics, and a
model-driven parameter optimizer. See the README for a walkthrough.
"""

from .config import (
    PARAM_NAMES,
    GridRange,
    ParameterConfig,
    ParameterSpace,
    config_fingerprint,
    load_config,
    load_space,
    save_config,
    save_space,
)
from .datagen import DatasetBundle, DatasetSpec, generate_dataset, load_dataset, save_dataset
from .errors import TexlocError
from .evaluation import (
    EvalRecord,
    QueryCase,
    RefImage,
    TestImageSet,
    csr_diagnostic,
    estimate_model_inputs,
    evaluate_global,
    global_success_rate,
    inlier_ratio,
    local_success_rate,
    read_records_csv,
    run_inlier_evaluation,
    run_outlier_evaluation,
    vote_cell_bound,
    write_records_csv,
)
from .geometry import (
    DEFAULT_THRESHOLDS,
    Pose2D,
    SuccessThresholds,
    compose,
    inverse,
    is_success,
    pose_error,
    transform_point,
    wrap_angle,
)
from .imaging import GrayImage, TextureWorld, load_image, render_view, save_image
from .localization import (
    LocalizationResult,
    PosePrior,
    estimate_pose_ransac,
    label_matches,
    localize,
)
from .mapping import ReferenceMap, build_map, load_map, nearby_reference_images, save_map
from .optimizer import (
    OptimizationResult,
    ScoredConfig,
    evaluate_config,
    is_superior,
    local_optimize,
    run_optimization,
    sample_config,
    should_locally_optimize,
)
from .prediction import (
    InlierCellStats,
    PredictionInputs,
    binomial_pmf,
    inlier_cell_distribution,
    outlier_cell_distribution,
    predict_success_rate,
    scale_inputs_for_nr,
)
from .voting import VoteHistogram, VotingPeak, cast_votes, cell_of, find_peak, vote_position

__version__ = "0.1.0"

__all__ = [
    "PARAM_NAMES",
    "GridRange",
    "ParameterConfig",
    "ParameterSpace",
    "config_fingerprint",
    "load_config",
    "load_space",
    "save_config",
    "save_space",
    "DatasetBundle",
    "DatasetSpec",
    "generate_dataset",
    "load_dataset",
    "save_dataset",
    "TexlocError",
    "EvalRecord",
    "QueryCase",
    "RefImage",
    "TestImageSet",
    "csr_diagnostic",
    "estimate_model_inputs",
    "evaluate_global",
    "global_success_rate",
    "inlier_ratio",
    "local_success_rate",
    "read_records_csv",
    "run_inlier_evaluation",
    "run_outlier_evaluation",
    "vote_cell_bound",
    "write_records_csv",
    "DEFAULT_THRESHOLDS",
    "Pose2D",
    "SuccessThresholds",
    "compose",
    "inverse",
    "is_success",
    "pose_error",
    "transform_point",
    "wrap_angle",
    "GrayImage",
    "TextureWorld",
    "load_image",
    "render_view",
    "save_image",
    "LocalizationResult",
    "PosePrior",
    "estimate_pose_ransac",
    "label_matches",
    "localize",
    "ReferenceMap",
    "build_map",
    "load_map",
    "nearby_reference_images",
    "save_map",
    "OptimizationResult",
    "ScoredConfig",
    "evaluate_config",
    "is_superior",
    "local_optimize",
    "run_optimization",
    "sample_config",
    "should_locally_optimize",
    "InlierCellStats",
    "PredictionInputs",
    "binomial_pmf",
    "inlier_cell_distribution",
    "outlier_cell_distribution",
    "predict_success_rate",
    "scale_inputs_for_nr",
    "VoteHistogram",
    "VotingPeak",
    "cast_votes",
    "cell_of",
    "find_peak",
    "vote_position",
    "__version__",
]
