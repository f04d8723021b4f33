"""Command-line entry point.

Exit codes: 0 success, 1 validation failure (a check did not pass),
2 input error (bad files, unknown config keys, bad flags).  stdout carries
machine-readable JSON; diagnostics go to stderr.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import losses, metrics, theory
from .train import ablation
from .train.config import (ABLATE_KEYS, build_train_config,
                           check_keys, parse_config_file, resolved_dict)
from .train.loop import train_run
from .train.synth import gen_synthetic_case
from .volgrid import BinaryMask, FormatError, read_mhd_subset, read_vvf, write_vvf

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


def _load_volume(path, fmt=None):
    if fmt is None:
        fmt = "mhd" if path.endswith((".mhd", ".mha")) else "vvf"
    if fmt == "mhd":
        return read_mhd_subset(path)
    return read_vvf(path)


def cmd_evaluate(args):
    try:
        pred = _load_volume(args.pred, args.format)
        gt = _load_volume(args.gt, args.format)
    except (OSError, FormatError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    pred_mask = (pred.data >= args.threshold).astype(np.float32)
    gt_mask = (gt.data >= 0.5).astype(np.float32)
    report = metrics.evaluate_pair(
        BinaryMask(pred_mask, pred.spacing), BinaryMask(gt_mask, gt.spacing))
    print(report.to_json())
    return EXIT_OK


def cmd_gradcheck(args):
    if args.trials == 0:
        print(json.dumps({"loss": args.loss, "trials": 0, "failures": 0,
                          "note": "vacuous pass: zero trials"}))
        return EXIT_OK
    report = losses.gradcheck(args.loss, trials=args.trials, seed=args.seed)
    payload = {
        "loss": report.loss,
        "trials": report.trials,
        "failures": report.failures,
        "worst_rel_err": report.worst_rel_err,
        "worst_witness": report.worst_witness,
    }
    if args.loss == "dsc-nosquare":
        payload["defect_constant_gradient_per_class"] = bool(
            report.defect_constant_per_class)
    print(json.dumps(payload))
    if report.failures:
        print(f"gradcheck failed: worst witness {report.worst_witness}",
              file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


THEOREM_SUITES = {
    "1": lambda n, s: theory.check_theorem1(trials=n, seed=s),
    "2": lambda n, s: theory.check_theorem2_continuity(trials=n, seed=s),
    "3": lambda n, s: theory.check_theorem3_ordering(trials=n, seed=s),
}


def cmd_theorems(args):
    names = list(THEOREM_SUITES) if args.suite == "all" else [args.suite]
    reports = [THEOREM_SUITES[n](args.trials, args.seed) for n in names]
    print(json.dumps([r.to_dict() for r in reports]))
    if any(not r.passed for r in reports):
        for r in reports:
            if not r.passed:
                print(f"{r.theorem}: {r.failures} failures, "
                      f"witness {r.worst_witness}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _read_train_config(path):
    raw = parse_config_file(path)
    return build_train_config(raw)


def cmd_synth(args):
    try:
        raw = parse_config_file(args.config) if args.config else {}
        cfg = build_train_config(raw)
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    count = int(raw.get("count", 8))
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    os.makedirs(args.out, exist_ok=True)
    for i in range(count):
        img, mask = gen_synthetic_case(cfg.synth, seed * 10000 + i)
        write_vvf(img, os.path.join(args.out, f"img_{i:03d}.vvf"), "f32")
        write_vvf(mask, os.path.join(args.out, f"mask_{i:03d}.vvf"), "u8")
    print(json.dumps({"out": args.out, "count": count, "seed": seed,
                      "config": resolved_dict(cfg)}))
    return EXIT_OK


def cmd_train(args):
    try:
        cfg = _read_train_config(args.config)
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    result = train_run(cfg, out_dir=args.out)
    print(json.dumps({
        "out": args.out,
        "final_val_dice": result.final_val_dice,
        "val_history": result.val_history,
        "config": resolved_dict(cfg),
    }))
    return EXIT_OK


def cmd_ablate(args):
    try:
        raw = parse_config_file(args.config) if args.config else {}
        check_keys(raw, ABLATE_KEYS)
        table = args.table or raw.get("table")
        if table not in ablation.TABLE_AXES:
            raise ValueError(f"table must be one of {ablation.TABLE_AXES}, "
                             f"got {table!r}")
        seeds = tuple(int(t) for t in
                      raw.get("seeds", "0").replace(",", " ").split())
        base = build_train_config(
            {k: v for k, v in raw.items() if k not in ("table", "seeds")})
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    results = ablation.run_ablation(table, base_cfg=base, seeds=seeds,
                                    out_dir=args.out)
    print(json.dumps({"out": args.out, "table": table, "rows": len(results),
                      "config": resolved_dict(base), "seeds": list(seeds)}))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="volseg",
        description="Volumetric segmentation toolkit: losses, metrics, "
                    "theory checks, synthetic training and ablations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="segmentation metrics for a pair")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--format", choices=["vvf", "mhd"], default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--loss", choices=["dsc", "jaccard", "wce", "dsc-nosquare"],
                   default="dsc")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("theorems", help="property suites for the loss theory")
    p.add_argument("--suite", choices=["1", "2", "3", "all"], default="all")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_theorems)

    p = sub.add_parser("synth", help="write a synthetic VVF dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="run one training")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablate", help="run one ablation table grid")
    p.add_argument("--config", default=None)
    p.add_argument("--table", choices=list(ablation.TABLE_AXES), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
