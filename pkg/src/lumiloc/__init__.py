"""Spectral-fingerprint indoor localization with GAN-based augmentation.

Subpackages:
  numerics    dense-network engine (forward/backward, losses, Adam)
  datamodel   fingerprints, datasets, grids, splits, normalization, CSV
  simenv      synthetic room simulator (light panels, Wi-Fi APs, clutter)
  locmodel    localization MLPs, training loops, hyperparameter search
  augment     coordinate-conditioned and unconditioned GAN augmentation
  evaluation  metrics, cost model, experiment harnesses
  cli         batch command-line interface
"""

__version__ = "0.1.0"
