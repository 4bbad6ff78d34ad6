"""Graph-based user-satisfaction classification.

Tabular feedback records are encoded as small hub-and-spokes graphs and
classified by a message-passing network (convolution stack, optional
neighbor attention, global readout, softmax head) trained with
hand-derived gradients. The `satgraph` CLI wraps training, evaluation,
ablations, label-noise sweeps, synthetic data generation, and gradient
checking behind deterministic, reproducible reports.
"""

from .errors import ConfigError, DataError
from .graph import AdjacencyIndex, FeatureRef, Graph, build_graph, normalize_adjacency, permute_graph
from .layers import (ModelConfig, ModelParams, attention_aggregate,
                     attention_coefficients, classify, gcn_forward, init_params,
                     model_forward, readout)
from .metrics import (ConfusionMatrix, MetricsReport, classification_metrics,
                      confusion, report_from_scores, roc_auc, spearman)
from .training import (OptimizerState, TrainConfig, adam_step, cross_entropy,
                       grad_check, load_checkpoint, model_backward,
                       save_checkpoint, train)

__version__ = "0.1.0"
