"""Ablation harness: the experiment grids over losses, block styles, rates,
long connections, supervision weights and fusion masks.

Each grid cell is a full train_run followed by validation Dice.  Desk-scale
scores are only comparable within a grid; the harness runs the grids and
reports, it does not assert orderings.
"""

import csv
import os
from dataclasses import replace

from ..losses import SupervisionWeights
from ..net.model import DdspConfig
from .loop import TrainConfig, train_run

TABLE_AXES = ("table2", "table3", "table4", "table5", "table6")


def plan_rows(axis):
    """(label dict, config-transform) pairs for one table axis."""
    if axis == "table2":
        rows = []
        for loss in ("wce", "dsc", "jaccard"):
            for block in ("non", "ddsp", "aspp"):
                rows.append((
                    {"loss": loss, "block": block},
                    lambda c, loss=loss, block=block: replace(
                        c, loss=loss, net=replace(c.net, block_style=block)),
                ))
        return rows
    if axis == "table3":
        grids = [((1, 2, 3, 4), (2, 4, 6)),
                 ((1, 2, 3, 4), ()),
                 ((), (2, 4, 6))]
        return [(
            {"dilation_rates": "-" if not d else str(list(d)),
             "pooling_rates": "-" if not p else str(list(p))},
            lambda c, d=d, p=p: replace(
                c, net=replace(c.net, ddsp=DdspConfig(
                    dilation_rates=d, pooling_rates=p,
                    growth_channels=c.net.ddsp.growth_channels))),
        ) for d, p in grids]
    if axis == "table4":
        return [(
            {"long_connection": mode},
            lambda c, mode=mode: replace(c, net=replace(c.net, long_mode=mode)),
        ) for mode in ("none", "residual", "concat")]
    if axis == "table5":
        weight_rows = [(1.0, 0.0, 0.0), (0.5, 0.333, 0.167),
                       (0.6, 0.25, 0.15), (0.8, 0.15, 0.05),
                       (0.8, 0.2, 0.0), (0.9, 0.075, 0.025)]
        return [(
            {"weights": str(list(ws))},
            lambda c, ws=ws: replace(c, net=replace(
                c.net, supervision=SupervisionWeights(*ws))),
        ) for ws in weight_rows]
    if axis == "table6":
        return [(
            {"fusion": str([int(b) for b in mask])},
            lambda c, mask=mask: replace(c, net=replace(
                c.net, fusion_mask=mask)),
        ) for mask in ((True, False, False), (True, True, True))]
    raise ValueError(f"unknown ablation axis {axis!r}; "
                     f"choose from {TABLE_AXES}")


def run_ablation(axis, base_cfg: TrainConfig = None, seeds=(0,),
                 out_dir=None):
    """Run one table's grid; returns result rows, optionally writes CSV."""
    base_cfg = base_cfg or TrainConfig(iterations=200)
    rows = plan_rows(axis)
    results = []
    for labels, transform in rows:
        for seed in seeds:
            cfg = replace(transform(base_cfg), seed=seed)
            record = dict(labels)
            record["seed"] = seed
            try:
                res = train_run(cfg)
                record["val_dice"] = f"{res.final_val_dice:.4f}"
                record["status"] = "ok"
            except Exception as e:  # keep the grid complete with markers
                record["val_dice"] = ""
                record["status"] = f"failed: {e}"
            results.append(record)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_ablation_csv(os.path.join(out_dir, f"{axis}.csv"), results)
    return results


def write_ablation_csv(path, results):
    fields = list(results[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(results)
