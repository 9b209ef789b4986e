"""Desk-scale generator/discriminator architectures.

The convolutional pair keeps the pattern of the original 105x105 design
(G: FC -> upsampling convs -> output conv, D: strided convs -> FC) at 16x16.
Batch norm is followed by leaky ReLU(0.2) in G and by ReLU in D.

Kernels are 3x3 with padding ``kernel // 2`` everywhere, so for the defaults:

======================  ==============  ================
layer                   G output        D output
======================  ==============  ================
dense / conv_stride2    32 x 4 x 4      16 x 8 x 8
conv + upsample / s2    16 x 8 x 8      32 x 4 x 4
conv + upsample         8 x 16 x 16     (reshape 512)
conv (stride 1)         1 x 16 x 16     dense -> 1
======================  ==============  ================

The encoding width of the default discriminator is therefore 512.

The MLP pair is for 2-D point data.  Its generator normalises each hidden
layer after the activation; without that it tends to park every sample on
one or two ring modes.
"""
from __future__ import annotations

from .layers import (
    batchnorm,
    conv,
    conv_stride1_upsample2,
    conv_stride2,
    dense,
    leaky_relu,
    relu,
    reshape,
    sigmoid,
)
from .network import Network


def conv_generator(latent_dim=32, channels=(32, 16, 8), kernel=3, image_size=16, seed=None) -> Network:
    if image_size % 4:
        raise ValueError("image_size must be divisible by 4")
    c0, c1, c2 = channels
    s = image_size // 4
    specs = [
        dense(latent_dim, c0 * s * s),
        reshape(c0, s, s),
        batchnorm(c0),
        leaky_relu(0.2),
        conv_stride1_upsample2(c0, c1, kernel),
        batchnorm(c1),
        leaky_relu(0.2),
        conv_stride1_upsample2(c1, c2, kernel),
        batchnorm(c2),
        leaky_relu(0.2),
        conv(c2, 1, kernel),
        sigmoid(),
    ]
    return Network(specs, (latent_dim,), seed=seed)


def conv_discriminator(channels=(16, 32), kernel=3, image_size=16, seed=None) -> Network:
    if image_size % 4:
        raise ValueError("image_size must be divisible by 4")
    c0, c1 = channels
    s = image_size // 4
    specs = [
        conv_stride2(1, c0, kernel),
        batchnorm(c0),
        relu(),
        conv_stride2(c0, c1, kernel),
        batchnorm(c1),
        relu(),
        reshape(c1 * s * s),
        dense(c1 * s * s, 1),
        sigmoid(),
    ]
    return Network(specs, (1, image_size, image_size), seed=seed)


def mlp_generator(latent_dim=16, hidden=128, out_dim=2, seed=None) -> Network:
    specs = [
        dense(latent_dim, hidden),
        leaky_relu(0.2),
        batchnorm(hidden),
        dense(hidden, hidden),
        leaky_relu(0.2),
        batchnorm(hidden),
        dense(hidden, out_dim),
    ]
    return Network(specs, (latent_dim,), seed=seed)


def mlp_discriminator(in_dim=2, hidden=128, seed=None) -> Network:
    specs = [
        dense(in_dim, hidden),
        relu(),
        dense(hidden, hidden),
        relu(),
        dense(hidden, 1),
        sigmoid(),
    ]
    return Network(specs, (in_dim,), seed=seed)


PRESETS = {
    "conv": (conv_generator, conv_discriminator),
    "mlp": (mlp_generator, mlp_discriminator),
}
