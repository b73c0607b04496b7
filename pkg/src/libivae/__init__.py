"""Linear-Gaussian analysis of VAE training pathologies and the LiBI training procedure."""

__version__ = "0.1.0"
