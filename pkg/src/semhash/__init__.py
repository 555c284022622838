"""Compact binary codes from precomputed image features: training,
bit-packed Hamming search, and MAP evaluation."""

from .featureio import (BinaryCodebook, FeatureSet, FormatError,
                        read_codebook, read_features, read_manifest,
                        write_codebook, write_features, write_manifest)
from .hamming import (EvalReport, binarize, build_index, evaluate_map,
                      hamming_distances, lsh_baseline, naive_query, query)
from .head import (CodeBatch, HashHeadParams, backward, forward, init_head,
                   load_head, save_head)
from .losses import (LossReport, LossWeights, code_similarity,
                     information_loss, quantization_loss, rotation_loss,
                     semantic_loss, total_loss)
from .similarity import batch_similarity, pair_similarity
from .synth import augment_with_orthogonal, holdout_split, make_clusters
from .trainer import (TrainConfig, TrainingError, TrainTrace, encode_block,
                      make_batches, rho_sweep, train)

__version__ = "0.1.0"
