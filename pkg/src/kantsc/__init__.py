"""KAN and MLP classifiers for univariate time series, with PGD robustness and Lipschitz probes."""

from .checkpoint import load_checkpoint, save_checkpoint
from .core import (CapabilityError, CheckpointError, ConfigError, DataError, KantscError, NumericError, Param,
                   StateError, grad_check)
from .data import Dataset, load_dataset, load_ucr_tsv, make_cbf, preprocess
from .evalstats import accuracy, friedman_ranks, histogram, macro_f1, nemenyi_cd, pairwise_geq_counts, quantiles
from .kan import BatchNorm1d, KanLayer, SplineSpec, bspline_basis
from .mlp import Dropout, Linear, ReLU
from .models import ARCHS, Model, ModelConfig, build_model, count_params, last_layer_components
from .robust import (AttackConfig, LipschitzConfig, attack_success_rate, lipschitz_dataset_summary,
                     lipschitz_estimate, pgd_attack)
from .train import TrainConfig, TrainHistory, train

__version__ = "0.1.0"
