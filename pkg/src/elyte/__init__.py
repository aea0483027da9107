"""Electrolyte LCE prediction from SMILES formulations.

Pipeline: tokenize each component molecule, embed its tokens (local
linear-attention encoder or pretrained embeddings from file), pool the
molecule means by molar ratio into one formulation vector, and regress LCE
with an MLP or spline-KAN head.  Training, evaluation, ablation sweeps and
gradient audits live in :mod:`elyte.training`; the ``elyte`` command wires
everything together.
"""

from .data import (
    Dataset,
    ElectrolyteComponent,
    Formulation,
    boxplot_stats,
    ce_from_lce,
    clean_dataset,
    lce_from_ce,
    load_dataset,
    normalize_ratios,
    save_dataset,
    split_dataset,
)
from .encoder import (
    AttentionInputs,
    EncoderConfig,
    TokenEmbeddings,
    attention_bruteforce,
    encode as encoder_encode,
    encoder_forward,
    init_encoder_params,
    linear_attention,
    load_pretrained_embeddings,
    rotary_rotate,
)
from .heads import KanHead, MlpHead, head_init, kan_head_forward, mlp_forward
from .kan import (
    BSplineGrid,
    KanLayer,
    KanStack,
    bspline_basis,
    kan_backward,
    kan_forward,
    kan_layer_init,
    phi_eval,
    stack_forward,
)
from .model import FrozenEmbeddingModel, LocalEncoderModel
from .pooling import cido_pack, cido_unpack, pool, sep_join
from .tokenizer import (
    MAX_SEQ_LEN,
    TokenSequence,
    Vocabulary,
    build_vocab,
    detokenize,
    encode,
    load_vocab,
    save_vocab,
    tokenize,
)
from .training import (
    Metrics,
    TrainConfig,
    TrainHistory,
    adamw_step,
    evaluate,
    gradient_check,
    mse_loss,
    rmse,
    sweep,
    train,
)

__version__ = "0.1.0"
