from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .layers import softmax
from .model import (DEFAULT_DESCRIPTOR, PATCH_SIZE, PatchNet, build_network,
                    inception_forward, resnet34_param_count)

__all__ = [
    "DEFAULT_DESCRIPTOR", "PATCH_SIZE", "PatchNet", "build_network",
    "inception_forward", "resnet34_param_count", "softmax",
    "save_checkpoint", "load_checkpoint", "checkpoint_hash",
]
