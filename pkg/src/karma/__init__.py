"""Learning from low-rank data with missing attributes via the KARMA kernel learner."""
from .core import (DimensionMismatch, GammaDims, LabeledExample, LossSpec, ObservedVector,
                   gamma_dims, loss_subgradient, loss_value)
from .kernel import cross_gram, embed, embedding_inner_product, gram, kernel
from .learner import KarmaConfig, KarmaModel, TrainTrace, load_model, save_model, train_batch, train_online
from .reference import (DensePredictorF0, DensePredictorFGamma, SubspaceSpec, improper_weights,
                        predict_f0, predict_fgamma)
from .regularity import RegularityReport, check_regularity, distinct_patterns

__version__ = "0.1.0"
