"""Hierarchical temporal pooling with learned multi-granularity kernel
weights for sequence classification."""

from .dataio import (
    DatasetManifest,
    StreamFeatureSequence,
    VideoRecord,
    load_artifact,
    load_feature_file,
    load_manifest,
    save_artifact,
    write_feature_file,
    write_manifest,
)
from .hierarchy import (
    Hierarchy,
    NodeInterval,
    PooledTree,
    build_intervals,
    load_pooled_file,
    pool_sequence,
    write_pooled_file,
)
from .dmkl import (
    AdamState,
    ContrastiveConfig,
    DmklPipelineResult,
    DmklResult,
    PairBatch,
    contrastive_loss,
    dmkl_fit,
    dmkl_then_svm,
    loss_grad,
    pair_labels,
)
from .em import (
    EmConfig,
    EmResult,
    beta_objective_coeffs,
    beta_step_averaging,
    beta_step_concat,
    em_fit,
    frank_wolfe_gap,
)
from .kernels import (
    AVERAGING,
    CONCATENATION,
    GramMatrix,
    KernelConfig,
    NodeKernelCache,
    combined_kernel,
    elementary,
    fuse_kernels,
    gram_matrix,
    kernel_columns,
    kernel_grad_beta,
    load_gram_file,
    median_gamma,
    write_gram_file,
)
from .pipeline import (
    PipelineConfig,
    evaluate_artifact,
    fuse_evaluate,
    load_split_trees,
    train_dmkl_route,
    train_em_route,
)
from .simplex import (
    SimplexWeights,
    accumulate_shared,
    backprop_through_simplex,
    jacobian,
    to_simplex,
)
from .svm import (
    DualSolution,
    SvmModel,
    TrainConfig,
    decision,
    decision_scores,
    predict,
    solve_dual,
    train_one_vs_rest,
)
from .synth import SynthSpec, gen_dataset, gen_sequences, misalign

__version__ = "0.1.0"
