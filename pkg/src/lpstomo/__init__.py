"""Mixed-state tomography with locally purified tensor networks."""

from .baseline import LsEstimate, ls_reconstruct
from .lps import Lps, LpsHyperparams, init_random, prob, probabilities, to_dense, trace
from .metrics import FitResult, infidelity, linear_fit
from .povm import CollapseOutcome, MeasurementDataset, exact_distribution, sample_bases, sample_dataset
from .states import depolarize, ghz, purity, random_mixed, von_neumann_entropy
from .trainer import TrainConfig, TrainReport, fit, loss_gradients, mse_loss

__version__ = "0.1.0"
