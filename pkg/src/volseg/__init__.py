"""Volumetric segmentation toolkit.

Overlap losses with analytic per-voxel gradients, executable property
checks for their theory, a small from-scratch 3D encoder-decoder with a
dense dilation/pooling bottleneck, synthetic imbalanced training, and
boundary-distance evaluation metrics.
"""

from .losses import (LossEval, SupervisionWeights, composite_loss, dsc_loss,
                     dsc_loss_nosquare, jaccard_loss, reweighted_ce_loss)
from .metrics import MetricsReport, abd, arvd, dice_coefficient, hd95
from .volgrid import (BinaryMask, ProbabilityMap, Volume, read_mhd_subset,
                      read_vvf, write_vvf)

__version__ = "0.1.0"

__all__ = [
    "LossEval", "SupervisionWeights", "composite_loss", "dsc_loss",
    "dsc_loss_nosquare", "jaccard_loss", "reweighted_ce_loss",
    "MetricsReport", "abd", "arvd", "dice_coefficient", "hd95",
    "BinaryMask", "ProbabilityMap", "Volume", "read_mhd_subset",
    "read_vvf", "write_vvf", "__version__",
]
