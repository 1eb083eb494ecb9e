"""Desk-scale mmWave beam-selection simulator: synthetic RSS datasets, a
batch-normalized dense classifier trained from scratch, and gradient-based
attack evaluation across perturbation-to-signal ratios."""

from .attacks import (
    AttackBudget,
    PerturbationOutcome,
    beam_order_worst_first,
    fgm_direction,
    fgm_nontargeted,
    gaussian_jam,
    k_worst_attack,
    psr_to_budget,
    uniform_jam,
)
from .channel import (
    BeamRssSample,
    Dataset,
    ScenarioConfig,
    array_gain,
    generate_dataset,
    path_loss,
    rss_vector,
    select_subset,
)
from .config import RunConfig, default_run_config, load_run_config, save_run_config
from .dataio import (
    export_dataset_csv,
    load_dataset,
    save_dataset,
    sha256_file,
)
from .errors import (
    BeamSimError,
    DegenerateGradientError,
    FileFormatError,
    FileTruncatedError,
    FormatVersionError,
    ReportParseError,
    ShapeMismatchError,
    TrainingDivergedError,
    ValidationError,
)
from .evaluation import (
    EvalCurve,
    SweepSpec,
    nk_accuracy,
    psr_sweep,
    rss_degradation,
    top1_accuracy,
)
from .model import Model, ModelSpec, TrainConfig, train, train_new_model

__version__ = "0.1.0"

__all__ = [
    "AttackBudget",
    "BeamRssSample",
    "BeamSimError",
    "Dataset",
    "DegenerateGradientError",
    "EvalCurve",
    "FileFormatError",
    "FileTruncatedError",
    "FormatVersionError",
    "Model",
    "ModelSpec",
    "PerturbationOutcome",
    "ReportParseError",
    "RunConfig",
    "ScenarioConfig",
    "ShapeMismatchError",
    "SweepSpec",
    "TrainConfig",
    "TrainingDivergedError",
    "ValidationError",
    "array_gain",
    "beam_order_worst_first",
    "default_run_config",
    "export_dataset_csv",
    "fgm_direction",
    "fgm_nontargeted",
    "gaussian_jam",
    "generate_dataset",
    "k_worst_attack",
    "load_dataset",
    "load_run_config",
    "nk_accuracy",
    "path_loss",
    "psr_sweep",
    "psr_to_budget",
    "rss_degradation",
    "rss_vector",
    "save_dataset",
    "save_run_config",
    "select_subset",
    "sha256_file",
    "top1_accuracy",
    "train",
    "train_new_model",
    "uniform_jam",
]
