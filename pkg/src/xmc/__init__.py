"""Neighbour-guided pseudo-label calibration and dynamic sample weighting
for unsupervised two-modality representation learning on embeddings."""

from .clustering import ClusterAssignment, PrototypeBank, compute_prototypes, dbscan, momentum_update
from .dataspace import FeatureSet, Modality, SynthConfig, generate_synthetic, l2_normalize, load_features, save_features
from .evaluator import cross_match_accuracy, label_quality, retrieval_metrics
from .labeling import build_epoch_labels, calibrate, weight
from .matching import CrossModalMap, assign_one_to_one, build_cross_modal_map, cost_matrix, progressive_complete
from .neighbors import Correlation, NeighborList, cluster_correlation, knn
from .objective import LossReport, batch_objective, gradient, hard_inter_loss, hard_intra_loss, soft_loss
from .trainer import Encoder, Mode, TrainConfig, sample_batch, train

__version__ = "0.1.0"
