from .types import DEVICES, PhantomImage, PhantomSpec, WorldConfig, derive_seed
from .sampling import sample_spec, sample_tail_spec
from .render import apply_device_style, gaussian_blur, render, render_styled
from .detectors import (
    CAL_PIXEL_THRESHOLD,
    NCM_SHARPNESS_THRESHOLD,
    boundary_sharpness,
    count_bright_foci,
    detect_cal,
    detect_ncm,
)
from .dataset import build_dataset, build_tail_testset, shard_seed

__all__ = [
    "CAL_PIXEL_THRESHOLD", "DEVICES", "NCM_SHARPNESS_THRESHOLD", "PhantomImage",
    "PhantomSpec", "WorldConfig", "apply_device_style", "boundary_sharpness",
    "build_dataset", "build_tail_testset", "count_bright_foci", "derive_seed",
    "detect_cal", "detect_ncm", "gaussian_blur", "render", "render_styled",
    "sample_spec", "sample_tail_spec", "shard_seed",
]
