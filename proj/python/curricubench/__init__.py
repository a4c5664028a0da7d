"""Curricular SSL pretraining with attention audits (C++ core bindings)."""

from ._core import (
    CurricubenchError,
    ail,
    balanced_accuracy,
    compute_cam,
    compute_class_weights,
    gen_phantom,
    init_backbone,
    inverse_segment,
    is_curriculum_order,
    postprocess_mask,
    rotate90,
    run_confound,
    run_experiment,
    sinkhorn,
)

__all__ = [
    "CurricubenchError",
    "ail",
    "balanced_accuracy",
    "compute_cam",
    "compute_class_weights",
    "gen_phantom",
    "init_backbone",
    "inverse_segment",
    "is_curriculum_order",
    "postprocess_mask",
    "rotate90",
    "run_confound",
    "run_experiment",
    "sinkhorn",
]

__version__ = "0.1.0"
