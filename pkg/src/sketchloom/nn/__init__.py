"""Minimal numpy network core for sketch-to-image translation."""

import numpy as np

from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, gradient_check
from .layers import (
    EVAL,
    Conv2d,
    ConvTranspose2d,
    Dropout,
    InstanceNorm,
    LeakyReLU,
    Mode,
    ReLU,
    Sequential,
    ShapeError,
    StateError,
    Tanh,
    conv_output_size,
    layer_backward,
    layer_forward,
)
from .networks import (
    PATCHGAN,
    UNET,
    Network,
    NetworkSpec,
    PatchGANDiscriminator,
    UNetGenerator,
    build_network,
    build_patchgan_discriminator,
    build_unet_generator,
    patchgan_output_side,
)
from .spectral import SpectralState, power_iteration, spectral_normalize


def to_network_range(x):
    """[0, 1] pixels -> [-1, 1] network values."""
    return x * 2.0 - 1.0


def from_network_range(y):
    return (y + 1.0) / 2.0


def images_to_batch(images, dtype="float32"):
    """List of (H, W, C) images -> (N, C, H, W) batch in [-1, 1]."""
    arr = np.stack([np.asarray(im) for im in images]).transpose(0, 3, 1, 2)
    return to_network_range(arr).astype(dtype)


def batch_to_images(batch):
    return [np.clip(from_network_range(b.transpose(1, 2, 0).astype(np.float64)), 0.0, 1.0) for b in batch]
