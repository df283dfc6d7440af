"""srgbnoise: conditional flow + GAN modelling of real sRGB camera noise."""

__version__ = "1.0.0"
