"""pi-weighted adversarial training: exact divergence checks, a small numpy
network engine, GAN training and representation evaluation."""

__version__ = "0.1.0"
