"""Cross modulation transformer for pansharpening, on a small numpy autograd engine."""

from .data import Dataset, IntegrityError, ProtocolError, SamplePair, load_dataset, save_dataset, synth_dataset, wald_degrade
from .estimator import CMTPansharpener
from .loss import LossBreakdown, LossWeights, total_loss
from .metrics import MetricsReport, d_lambda, d_s, ergas, hqnr, q2n, sam
from .model import ModelConfig, forward, init_params, predict, toy_config
from .rng import Rng
from .tensor import ContractError, DimensionError, Tensor, backward, no_grad
from .train import TrainConfig, evaluate, grad_check
from .transforms import dft2, dwt2_haar, idft2, idwt2_haar

__version__ = "0.1.0"

__all__ = [
    "CMTPansharpener", "ContractError", "Dataset", "DimensionError", "IntegrityError", "LossBreakdown",
    "LossWeights", "MetricsReport", "ModelConfig", "ProtocolError", "Rng", "SamplePair", "Tensor",
    "TrainConfig", "backward", "d_lambda", "d_s", "dft2", "dwt2_haar", "ergas", "evaluate", "forward",
    "grad_check", "hqnr", "idft2", "idwt2_haar", "init_params", "load_dataset", "no_grad", "predict",
    "q2n", "sam", "save_dataset", "synth_dataset", "toy_config", "total_loss", "wald_degrade",
]
