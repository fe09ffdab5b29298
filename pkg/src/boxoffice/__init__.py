"""Movie box-office revenue prediction toolkit.

Two-stage pipeline: self-supervised pretraining (masked field prediction +
visual grounding of content keywords in poster objects) followed by
Huber-loss regression finetuning on log10 revenue, plus the supporting
feature engineering, keyword clustering, ingestion, and poster retrieval.
"""

from .clustering import (
    KeywordClusterMap,
    KeywordEmbedding,
    agglomerate,
    build_cluster_map,
    build_tfidf,
    cooc_embed,
)
from .encoder import (
    Checkpoint,
    EncoderConfig,
    MovieEncoder,
    encode_movies,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .errors import BoxOfficeError, DataError, NumericError
from .features import (
    FeatureStats,
    NumeralEmbedderConfig,
    PersonStats,
    SlotLayout,
    TokenizedMovie,
    Vocabulary,
    build_vocabulary,
    competition_features,
    normalize_feature,
    numeral_embed,
    person_stats,
    tokenize,
)
from .finetune import FinetuneConfig, Prediction, evaluate, finetune, huber, predict
from .pobj import PosterObjectSet, read_pobj, validate_pobj, write_pobj
from .pretrain import (
    MaskPlan,
    PretrainConfig,
    apply_mask,
    mlm_loss,
    pretrain_loop,
    set_similarity,
    vg_loss,
)
from .records import MovieRecord, SplitAssignment, parse_corpus, stratified_split
from .retrieval import RetrievalIndex, build_index, query
from .synth import SyntheticSpec, generate

__version__ = "0.1.0"
