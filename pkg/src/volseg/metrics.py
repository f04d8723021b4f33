"""PROMISE12-style evaluation measures over binary masks with spacing.

Boundary voxels are foreground voxels with a six-connected background or
out-of-grid neighbor; distances are Euclidean between voxel centers in
millimeters.  hd95 uses the nearest-rank percentile and combines the two
directions by max.  The *_bruteforce variants are the all-pairs oracles the
accelerated paths are tested against.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .volgrid import DimsMismatchError


@dataclass
class MetricsReport:
    dsc: float
    arvd_pct: float
    abd_mm: float
    hd95_mm: float
    flags: list = field(default_factory=list)

    def to_json(self):
        def clean(x):
            return None if x is None or not np.isfinite(x) else float(x)
        return json.dumps({
            "dsc": clean(self.dsc),
            "arvd_pct": clean(self.arvd_pct),
            "abd_mm": clean(self.abd_mm),
            "hd95_mm": clean(self.hd95_mm),
            "flags": self.flags,
        })


def _mask_data(m):
    return np.asarray(getattr(m, "data", m))


def _check(a, b):
    da, db = _mask_data(a), _mask_data(b)
    if da.shape != db.shape:
        raise DimsMismatchError(f"dims mismatch: {da.shape} vs {db.shape}")
    return da, db


def dice_coefficient(a, b):
    """2|A&B| / (|A|+|B|); 1 when both masks are empty."""
    da, db = _check(a, b)
    na = float(da.sum(dtype=np.float64))
    nb = float(db.sum(dtype=np.float64))
    if na + nb == 0.0:
        return 1.0
    inter = float((da * db).sum(dtype=np.float64))
    return 2.0 * inter / (na + nb)


def arvd(a, b):
    """100 * | |A|/|B| - 1 |, with b the reference; None for empty reference."""
    da, db = _check(a, b)
    nb = float(db.sum(dtype=np.float64))
    if nb == 0.0:
        return None
    na = float(da.sum(dtype=np.float64))
    return 100.0 * abs(na / nb - 1.0)


def boundary_extract(m):
    """(K, 3) array of boundary voxel centers in millimeter coordinates."""
    d = _mask_data(m)
    fg = d > 0
    pad = np.pad(fg, 1, constant_values=False)  # out-of-grid is background
    all_neighbors_fg = (
        pad[:-2, 1:-1, 1:-1] & pad[2:, 1:-1, 1:-1]
        & pad[1:-1, :-2, 1:-1] & pad[1:-1, 2:, 1:-1]
        & pad[1:-1, 1:-1, :-2] & pad[1:-1, 1:-1, 2:]
    )
    boundary = fg & ~all_neighbors_fg
    coords = np.argwhere(boundary).astype(np.float64)
    spacing = getattr(m, "spacing", (1.0, 1.0, 1.0))
    return coords * np.asarray(spacing, dtype=np.float64)


def _directed_nn_distances(src, dst):
    """Nearest-neighbor distance from each src point to the dst set."""
    tree = cKDTree(dst)
    dists, _ = tree.query(src)
    return np.atleast_1d(dists)


def _directed_nn_distances_bruteforce(src, dst):
    diffs = src[:, None, :] - dst[None, :, :]
    return np.sqrt((diffs ** 2).sum(axis=2)).min(axis=1)


def _nearest_rank_percentile(d, pct=95.0):
    """Smallest value with >= pct% of the distances at or below it."""
    d = np.sort(d)
    k = int(np.ceil(pct / 100.0 * d.size))
    return float(d[max(k - 1, 0)])


def _surface_distances(a, b, directed_fn):
    ba = boundary_extract(a)
    bb = boundary_extract(b)
    if ba.size == 0 or bb.size == 0:
        return None, None
    return directed_fn(ba, bb), directed_fn(bb, ba)


def abd(a, b):
    """Symmetric average boundary distance in millimeters."""
    d_ab, d_ba = _surface_distances(a, b, _directed_nn_distances)
    if d_ab is None:
        return None
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def hd95(a, b):
    """Max of the two directed 95th-percentile boundary distances."""
    d_ab, d_ba = _surface_distances(a, b, _directed_nn_distances)
    if d_ab is None:
        return None
    return max(_nearest_rank_percentile(d_ab), _nearest_rank_percentile(d_ba))


def abd_bruteforce(a, b):
    d_ab, d_ba = _surface_distances(a, b, _directed_nn_distances_bruteforce)
    if d_ab is None:
        return None
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def hd95_bruteforce(a, b):
    d_ab, d_ba = _surface_distances(a, b, _directed_nn_distances_bruteforce)
    if d_ab is None:
        return None
    return max(_nearest_rank_percentile(d_ab), _nearest_rank_percentile(d_ba))


def evaluate_pair(pred, gt):
    """All four metrics for one prediction/reference mask pair."""
    da, db = _check(pred, gt)
    flags = []
    if da.sum() == 0:
        flags.append("empty_prediction")
    if db.sum() == 0:
        flags.append("empty_reference")
    dsc = dice_coefficient(pred, gt)
    rvd = arvd(pred, gt)
    bd = abd(pred, gt) if not flags else None
    h = hd95(pred, gt) if not flags else None
    return MetricsReport(
        dsc=dsc,
        arvd_pct=rvd if rvd is not None else float("nan"),
        abd_mm=bd if bd is not None else float("nan"),
        hd95_mm=h if h is not None else float("nan"),
        flags=flags,
    )
