"""Orbit-constant maps of the quotient bundles into R^3 for plotting."""

import numpy as np


def mobius_embed(theta, omega) -> np.ndarray:
    radius = 1.0 + omega / 2.0 * np.cos(theta / 2.0)
    return np.array([radius * np.cos(theta), radius * np.sin(theta), omega / 2.0 * np.sin(theta / 2.0)])


def cylinder_embed(theta, omega) -> np.ndarray:
    """Unit-radius tube"""
    return np.array([np.cos(theta), np.sin(theta), omega])
