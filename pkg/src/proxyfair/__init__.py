"""Group fairness with proxy groups: metrics, post-shift fitting, constrained
training and the proxy-constraint projection lemma.
"""

from .dataset import Dataset, GroupSet, load_adult
from .errors import ConfigError, ContractError, ConvergenceError, DataError, DivergenceError, ProxyFairError
from .metrics import FairnessReport, evaluate
from .model import LinearModel, TrainConfig, train_base
from .postshift import ShiftModel, apply_shift, fit_shift

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "ConvergenceError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "FairnessReport",
    "GroupSet",
    "LinearModel",
    "ProxyFairError",
    "ShiftModel",
    "TrainConfig",
    "apply_shift",
    "evaluate",
    "fit_shift",
    "load_adult",
    "train_base",
]
