"""Synthetic imbalanced volumes: ellipsoidal foreground blobs in a noisy,
bias-shaded background.  The generated masks keep the foreground fraction
under the configured bound, so the class imbalance mirrors the target
domain at desk scale."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..volgrid import BinaryMask, Volume


class SynthInfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    dims: tuple = (32, 32, 32)
    fg_fraction_max: float = 0.02
    blob_count: tuple = (1, 2)
    blob_radius: tuple = (2.0, 5.0)  # semi-axis range, voxels
    noise_std: float = 0.05
    bias_amplitude: float = 0.1
    deform_grid_spacing: int = 8
    deform_std: float = None  # None: 15 * max(dims) / 96

    def __post_init__(self):
        if not 0.0 < self.fg_fraction_max < 0.5:
            raise ValueError("fg_fraction_max must lie in (0, 0.5)")
        if any(n % 4 for n in self.dims):
            raise ValueError("dims must be divisible by 4")
        if self.deform_grid_spacing < 2:
            raise ValueError("deform grid spacing must be >= 2 voxels")

    def displacement_std(self):
        if self.deform_std is not None:
            return self.deform_std
        return 15.0 * max(self.dims) / 96.0


def _blob_mask(dims, centers, semiaxes):
    grid = np.stack(np.meshgrid(*[np.arange(n) for n in dims],
                                indexing="ij"), axis=-1).astype(np.float64)
    mask = np.zeros(dims, dtype=bool)
    for c, ax in zip(centers, semiaxes):
        r2 = (((grid - c) / ax) ** 2).sum(axis=-1)
        mask |= r2 <= 1.0
    return mask


def gen_synthetic_case(spec: SynthSpec, seed: int):
    """Deterministic (image, mask) pair for one seed.

    With noise_std = 0 and bias_amplitude = 0, thresholding the image at
    0.5 recovers the mask exactly (foreground intensity 1, background 0).
    """
    rng = np.random.default_rng(seed)
    dims = np.asarray(spec.dims)
    r_lo, r_hi = spec.blob_radius
    for attempt in range(60):
        count = int(rng.integers(spec.blob_count[0], spec.blob_count[1] + 1))
        shrink = 0.85 ** max(0, attempt - 20)
        centers = rng.uniform(0.25, 0.75, (count, 3)) * dims
        semiaxes = rng.uniform(r_lo * shrink, r_hi * shrink, (count, 3))
        semiaxes = np.maximum(semiaxes, 1.0)
        mask = _blob_mask(spec.dims, centers, semiaxes)
        frac = mask.mean()
        if 0.0 < frac <= spec.fg_fraction_max:
            break
    else:
        raise SynthInfeasibleError(
            f"could not place blobs under fg fraction {spec.fg_fraction_max}")
    image = mask.astype(np.float64)
    if spec.bias_amplitude > 0:
        coarse = rng.uniform(-1.0, 1.0, (4, 4, 4)) * spec.bias_amplitude
        zoom = [n / 4 for n in spec.dims]
        image = image + ndimage.zoom(coarse, zoom, order=1)
    if spec.noise_std > 0:
        image = image + rng.normal(0.0, spec.noise_std, spec.dims)
    return Volume(image), BinaryMask(mask.astype(np.float32))
