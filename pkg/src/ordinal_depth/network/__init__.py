from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .layers import batch_norm, conv2d, dropout, group_norm
from .model import DOWNSAMPLE, ModelConfig, Network, Tape, init_parameters
from .optim import AdamHyper, AdamState, adam_step

__all__ = [
    "AdamHyper", "AdamState", "DOWNSAMPLE", "ModelConfig", "Network", "Tape",
    "adam_step", "batch_norm", "checkpoint_hash", "conv2d", "dropout", "group_norm",
    "init_parameters", "load_checkpoint", "save_checkpoint",
]
