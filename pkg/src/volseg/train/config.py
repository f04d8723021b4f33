"""Flat key=value run-configuration files.

Lines are "key = value"; blank lines and '#' comments are ignored.  The
documented key sets live next to the builders; unknown keys are a hard
error so typos cannot silently fall back to defaults.
"""

from dataclasses import replace

from ..losses import SupervisionWeights
from ..net.model import NetConfig
from .loop import TrainConfig
from .synth import SynthSpec


class ConfigKeyError(ValueError):
    def __init__(self, unknown):
        super().__init__(f"unknown config keys: {', '.join(sorted(unknown))}")
        self.unknown = unknown


def parse_config_file(path):
    out = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def _ints(v):
    v = v.strip()
    if v in ("", "-"):
        return ()
    return tuple(int(t) for t in v.replace(",", " ").split())


def _bools(v):
    return tuple(t not in ("0", "false", "False") for t in
                 v.replace(",", " ").split())


SYNTH_KEYS = {
    "dims", "count", "fg_max", "noise_std", "bias_amplitude",
    "blob_count_min", "blob_count_max", "blob_radius_min", "blob_radius_max",
    "deform_grid_spacing", "deform_std", "seed",
}

TRAIN_KEYS = SYNTH_KEYS | {
    "iterations", "batch_size", "loss", "lr", "momentum", "weight_decay",
    "lr_decay_period", "lr_decay_factor", "widths", "long_mode",
    "block_style", "dilation_rates", "pooling_rates", "growth",
    "alpha", "beta", "gamma", "fusion", "augment", "n_train", "n_val",
    "val_interval",
}

ABLATE_KEYS = TRAIN_KEYS | {"table", "seeds"}


def check_keys(raw, allowed):
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigKeyError(unknown)


def build_synth_spec(raw):
    spec = SynthSpec()
    kw = {}
    if "dims" in raw:
        kw["dims"] = _ints(raw["dims"])
    if "fg_max" in raw:
        kw["fg_fraction_max"] = float(raw["fg_max"])
    if "noise_std" in raw:
        kw["noise_std"] = float(raw["noise_std"])
    if "bias_amplitude" in raw:
        kw["bias_amplitude"] = float(raw["bias_amplitude"])
    if "blob_count_min" in raw or "blob_count_max" in raw:
        kw["blob_count"] = (int(raw.get("blob_count_min", spec.blob_count[0])),
                            int(raw.get("blob_count_max", spec.blob_count[1])))
    if "blob_radius_min" in raw or "blob_radius_max" in raw:
        kw["blob_radius"] = (
            float(raw.get("blob_radius_min", spec.blob_radius[0])),
            float(raw.get("blob_radius_max", spec.blob_radius[1])))
    if "deform_grid_spacing" in raw:
        kw["deform_grid_spacing"] = int(raw["deform_grid_spacing"])
    if "deform_std" in raw:
        kw["deform_std"] = float(raw["deform_std"])
    return replace(spec, **kw)


def build_net_config(raw):
    cfg = NetConfig()
    kw = {}
    if "widths" in raw:
        kw["widths"] = _ints(raw["widths"])
    if "long_mode" in raw:
        kw["long_mode"] = raw["long_mode"]
    if "block_style" in raw:
        kw["block_style"] = raw["block_style"]
    ddsp_kw = {}
    if "dilation_rates" in raw:
        ddsp_kw["dilation_rates"] = _ints(raw["dilation_rates"])
    if "pooling_rates" in raw:
        ddsp_kw["pooling_rates"] = _ints(raw["pooling_rates"])
    if "growth" in raw:
        ddsp_kw["growth_channels"] = int(raw["growth"])
    if ddsp_kw:
        kw["ddsp"] = replace(cfg.ddsp, **ddsp_kw)
    if any(k in raw for k in ("alpha", "beta", "gamma")):
        kw["supervision"] = SupervisionWeights(
            float(raw.get("alpha", 0.8)), float(raw.get("beta", 0.15)),
            float(raw.get("gamma", 0.05)))
    if "fusion" in raw:
        kw["fusion_mask"] = _bools(raw["fusion"])
    return replace(cfg, **kw)


def build_train_config(raw):
    check_keys(raw, TRAIN_KEYS)
    cfg = TrainConfig(net=build_net_config(raw), synth=build_synth_spec(raw))
    kw = {}
    for key, conv in (("iterations", int), ("batch_size", int),
                      ("loss", str), ("seed", int), ("lr", float),
                      ("momentum", float), ("weight_decay", float),
                      ("lr_decay_period", int), ("lr_decay_factor", float),
                      ("n_train", int), ("n_val", int),
                      ("val_interval", int)):
        if key in raw:
            kw[key] = conv(raw[key])
    if "augment" in raw:
        kw["augment"] = raw["augment"] not in ("0", "false", "False")
    return replace(cfg, **kw)


def resolved_dict(cfg: TrainConfig):
    """Every default materialized, for reproducibility echoes."""
    return {
        "loss": cfg.loss, "iterations": cfg.iterations,
        "batch_size": cfg.batch_size, "seed": cfg.seed,
        "lr": cfg.lr, "momentum": cfg.momentum,
        "weight_decay": cfg.weight_decay,
        "lr_decay_period": cfg.lr_decay_period,
        "lr_decay_factor": cfg.lr_decay_factor,
        "n_train": cfg.n_train, "n_val": cfg.n_val,
        "val_interval": cfg.val_interval, "augment": cfg.augment,
        "widths": list(cfg.net.widths), "long_mode": cfg.net.long_mode,
        "block_style": cfg.net.block_style,
        "dilation_rates": list(cfg.net.ddsp.dilation_rates),
        "pooling_rates": list(cfg.net.ddsp.pooling_rates),
        "growth": cfg.net.ddsp.growth_channels,
        "supervision": [cfg.net.supervision.alpha, cfg.net.supervision.beta,
                        cfg.net.supervision.gamma],
        "fusion": [int(b) for b in cfg.net.fusion_mask],
        "dims": list(cfg.synth.dims),
        "fg_max": cfg.synth.fg_fraction_max,
        "noise_std": cfg.synth.noise_std,
        "bias_amplitude": cfg.synth.bias_amplitude,
        "deform_grid_spacing": cfg.synth.deform_grid_spacing,
        "deform_std": cfg.synth.displacement_std(),
    }
