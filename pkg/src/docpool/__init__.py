"""Compose document embeddings from per-sentence embedding matrices and
evaluate them on alignment and classification tasks."""

from .align import (
    AlignmentResult,
    BootstrapCI,
    ExactIndex,
    bootstrap_ci,
    build_index,
    match,
    recall,
    topk,
)
from .corpus import (
    CollectionStats,
    Document,
    ExcerptStrategy,
    Sentence,
    TokenRangeSpec,
    collect_stats,
    load_manifest,
    select_excerpt,
    split_halves,
    tokenize_words,
    write_manifest,
)
from .embed_store import (
    EmbeddingMatrix,
    PcaModel,
    l2_normalize,
    load_embeddings,
    pca_apply,
    pca_fit,
    read_semb,
    store_embeddings,
    write_semb,
)
from .errors import DocpoolError, FormatError, ValidationError
from .learner import (
    PoolerModel,
    TrainConfig,
    att_pert_pool,
    attention_weights,
    forward,
    grad_check,
    init_model,
    load_checkpoint,
    micro_f1,
    predict,
    save_checkpoint,
    train,
    zero_shot_eval,
)
from .pert import (
    PertWindowBank,
    boilerplate_weights,
    build_window_bank,
    pert_pdf,
    tf_pert,
    tk_pert,
    window_weights,
)
from .weighting import (
    WeightVector,
    idf4,
    make_weights,
    pool_weighted,
    sentence_tfidf,
    tf2,
    tf4,
    tfidf_scores,
)

__version__ = "0.1.0"
