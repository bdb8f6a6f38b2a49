"""Magnetic Neumann Laplacian outside discs: fiber spectra, tunneling and effective lattices."""
from .model import (FROZEN_CONSTANTS, ModelParams, SpectralConstants, agmon_distance, error_budget,
                    k_factor, tunneling_action, xi_and_e)

__all__ = ["FROZEN_CONSTANTS", "ModelParams", "SpectralConstants", "agmon_distance", "error_budget",
           "k_factor", "tunneling_action", "xi_and_e"]
__version__ = "0.1.0"
