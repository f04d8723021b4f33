from .ablation import TABLE_AXES, run_ablation
from .augment import deform_augment
from .loop import TrainConfig, TrainResult, train_run
from .optim import NonFiniteGradientError, OptimizerState, sgd_step
from .synth import SynthSpec, gen_synthetic_case

__all__ = ["TABLE_AXES", "run_ablation", "deform_augment", "TrainConfig",
           "TrainResult", "train_run", "NonFiniteGradientError",
           "OptimizerState", "sgd_step", "SynthSpec", "gen_synthetic_case"]
