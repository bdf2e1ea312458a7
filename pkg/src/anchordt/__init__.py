"""anchordt: anchored, sparsity-regularized transfer maps between 2D laws.

Learns an invertible map from a source to a target distribution from
unpaired samples plus one (or a few) aligned anchor pairs, regularized by
the entrywise l1 norm of the map's Jacobian; ships the randomized
sparse-probe estimator of the Jacobian's nonzero count with its two-sided
bound checker, and a numeric verification suite for the one-dimensional
measure-preserving-automorphism facts that make the anchor decisive.
"""

from .autodiff import GraphError, Node, backward, forward, gradcheck
from .nets import (AdamState, MlpModel, adam_init, adam_step, bind, init_mlp,
                   load_checkpoint, save_checkpoint)
from .objective import (AnchorSet, GeneratorLossParts, LossWeights, anchor_loss,
                        gan_losses, inv_loss, sparsity_loss, total_generator_loss)
from .sparsity import (JacobianMatrix, ProbeSample, ProbeSpec, SupportPattern,
                       analytic_mlp_jacobian_graph, check_sandwich_bound,
                       check_structural_sparsity, draw_probe, exact_jacobian,
                       fd_sparsity_surrogate, probe_bias_variance_study,
                       q_estimate, q_exact_enumeration)
from .synthdata import (PairedDataset, SynthConfig, generate, load_dataset,
                        save_dataset, select_anchors, shuffle_unpaired, warp)
from .trainer import (RunReport, TrainConfig, TrainedModels, TrainingDiverged,
                      anchor_sensitivity, run_ablation, train, translation_error)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
