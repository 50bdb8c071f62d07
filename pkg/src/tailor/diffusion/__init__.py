from .schedule import NoiseSchedule, default_schedule, make_schedule, q_sample
from .conditioning import ConditionVector, CondBatch, encode_conditions
from .unet import DenoiserModel, condition_parameters
from .lora import LoraError, LoraLayer, attach_lora, lora_parameters, merge_lora
from .sampling import (
    SamplerError,
    ancestral_sample,
    as_model_fn,
    cfg_epsilon,
    dpm_solver_sample,
    generate_balanced,
    load_recipe,
)
from .training import (
    TrainReport,
    augment_example,
    bilinear_resize,
    fine_tune_tail,
    row_condition,
    train_denoiser,
    training_loss,
)

__all__ = [
    "CondBatch", "ConditionVector", "DenoiserModel", "LoraError", "LoraLayer",
    "NoiseSchedule", "SamplerError", "TrainReport", "ancestral_sample", "as_model_fn",
    "attach_lora", "augment_example", "bilinear_resize", "cfg_epsilon",
    "condition_parameters", "default_schedule", "dpm_solver_sample", "encode_conditions",
    "fine_tune_tail", "generate_balanced", "load_recipe", "lora_parameters",
    "make_schedule", "merge_lora", "q_sample", "row_condition", "train_denoiser",
    "training_loss",
]
