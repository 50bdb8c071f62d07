from .config import ConfigError, ExperimentConfig
from .crossval import crossval_select
from .stages import (
    EVAL_SETS,
    PIPELINE_ORDER,
    MissingArtifactError,
    RunManifest,
    default_recipe,
    hash_path,
    load_ensemble,
    run_all,
    run_stage,
)

__all__ = [
    "ConfigError", "EVAL_SETS", "ExperimentConfig", "MissingArtifactError",
    "PIPELINE_ORDER", "RunManifest", "crossval_select", "default_recipe",
    "hash_path", "load_ensemble", "run_all", "run_stage",
]
