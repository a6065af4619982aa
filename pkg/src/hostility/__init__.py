"""Multi-dimensional hostility detection for Devanagari-script posts."""

from .data import (
    FINE_DIMENSIONS,
    LabelCounts,
    LabelSet,
    LabeledPost,
    SplitBundle,
    hostile_subset,
    label_stats,
    parse_corpus,
    read_corpus,
    stratified_split,
    write_corpus,
)
from .encoder import (
    ClassifierHead,
    EncoderOutput,
    EncoderSpec,
    SequenceEncoder,
    TinyTransformerEncoder,
    TokenSequence,
    build_encoder,
    register_external_encoder,
)
from .metrics import (
    MetricsReport,
    evaluate,
    misclassification_report,
    weighted_f1,
    weighted_fine_grained,
)
from .strategies import (
    PredictionSet,
    StrategyConfig,
    TrainedBundle,
    aux_fuse,
    bce,
    mlc_loss,
    mtl_loss,
    predict,
    train,
)
from .textprep import clean_text

__all__ = [
    "FINE_DIMENSIONS",
    "LabelCounts",
    "LabelSet",
    "LabeledPost",
    "SplitBundle",
    "hostile_subset",
    "label_stats",
    "parse_corpus",
    "read_corpus",
    "stratified_split",
    "write_corpus",
    "ClassifierHead",
    "EncoderOutput",
    "EncoderSpec",
    "SequenceEncoder",
    "TinyTransformerEncoder",
    "TokenSequence",
    "build_encoder",
    "register_external_encoder",
    "MetricsReport",
    "evaluate",
    "misclassification_report",
    "weighted_f1",
    "weighted_fine_grained",
    "PredictionSet",
    "StrategyConfig",
    "TrainedBundle",
    "aux_fuse",
    "bce",
    "mlc_loss",
    "mtl_loss",
    "predict",
    "train",
    "clean_text",
]

__version__ = "0.1.0"
