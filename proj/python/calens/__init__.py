"""Calibrated segmentation ensembles.

Ensemble members are trained with loss weights that trade sensitivity
against precision; a least-squares fit over their joint binary response
patterns yields combination coefficients whose weighted sum approximates
the per-voxel classification probability.
"""

from calens._core import *  # noqa: F401,F403
from calens._core import __version__  # noqa: F401
