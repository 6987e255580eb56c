from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, MaskingPolicy, ModelConfig, TrainSchedule
from .masking import MaskedBatch, mask_batch
from .model import (
    InputError,
    LossError,
    ModelParams,
    WiringError,
    attention_probe,
    classify_forward,
    classify_loss_and_grads,
    encode_forward,
    fuse_haploid_pair,
    fusion_loss_and_grads,
    init_params,
    linformer_attention,
    mlm_loss_and_grads,
    param_shapes,
)
from .optim import OptimizerError, OptimizerState, adamw_step, lr_at_step

__all__ = [
    "CheckpointError",
    "ConfigError",
    "InputError",
    "LossError",
    "MaskedBatch",
    "MaskingPolicy",
    "ModelConfig",
    "ModelParams",
    "OptimizerError",
    "OptimizerState",
    "TrainSchedule",
    "WiringError",
    "adamw_step",
    "attention_probe",
    "classify_forward",
    "classify_loss_and_grads",
    "encode_forward",
    "fuse_haploid_pair",
    "fusion_loss_and_grads",
    "init_params",
    "linformer_attention",
    "load_checkpoint",
    "lr_at_step",
    "mask_batch",
    "mlm_loss_and_grads",
    "param_shapes",
    "save_checkpoint",
]
