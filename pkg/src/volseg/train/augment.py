"""Random smooth deformations from Gaussian-displaced control points.

A coarse control grid gets i.i.d. Gaussian displacements per axis; the
dense field is the trilinear interpolation of the control displacements.
One field warps both the image (trilinear sampling) and the mask
(nearest-neighbor, then re-binarized); samples outside the grid clamp to
the edge."""

import numpy as np
from scipy import ndimage

from ..volgrid import BinaryMask, Volume


def displacement_field(dims, grid_spacing, std, rng):
    """Dense (3, X, Y, Z) displacement field in voxels."""
    ctrl_shape = tuple(int(np.ceil(n / grid_spacing)) + 1 for n in dims)
    field = np.empty((3,) + tuple(dims), dtype=np.float64)
    coords = np.stack(np.meshgrid(*[np.arange(n) / grid_spacing for n in dims],
                                  indexing="ij"))
    for axis in range(3):
        ctrl = rng.normal(0.0, std, ctrl_shape)
        field[axis] = ndimage.map_coordinates(ctrl, coords, order=1,
                                              mode="nearest")
    return field


def deform_augment(image, mask, spec, seed):
    """Apply one random deformation to an (image, mask) pair."""
    rng = np.random.default_rng(seed)
    dims = image.dims
    std = spec.displacement_std()
    if std == 0.0:
        return image, mask
    field = displacement_field(dims, spec.deform_grid_spacing, std, rng)
    base = np.stack(np.meshgrid(*[np.arange(n, dtype=np.float64)
                                  for n in dims], indexing="ij"))
    sample = base + field
    for axis, n in enumerate(dims):
        np.clip(sample[axis], 0, n - 1, out=sample[axis])
    warped_img = ndimage.map_coordinates(image.data.astype(np.float64),
                                         sample, order=1, mode="nearest")
    warped_mask = ndimage.map_coordinates(mask.data, sample, order=0,
                                          mode="nearest")
    warped_mask = (warped_mask > 0.5).astype(np.float32)
    return (Volume(warped_img, image.spacing),
            BinaryMask(warped_mask, mask.spacing))
