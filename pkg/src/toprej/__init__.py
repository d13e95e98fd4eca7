"""Top-rank learning with a co-optimised rejection branch and LOF weighting."""

from .data import Dataset, SynthConfig, load_csv, stratified_folds, synth_generate
from .lof import LofConfig, lof_scores, lof_weight
from .losses import LossConfig, loss_and_grads
from .metrics import EvalReport, pos_at_top, pr_auc, roc_auc
from .net import ModelParams, init_model, load_model, save_model
from .training import TrainConfig, cross_validate, evaluate, train

__version__ = "0.1.0"
