"""Label-set level evaluation and error analysis for multi-label classifiers."""

from .confusion import (
    ErrorKind,
    PowerSetConfusion,
    build_confusion,
    classify_error,
    group_query,
    label_drilldown,
    taxonomy_summary,
)
from .dataset import (
    AlignedPairs,
    AnnotatedInstance,
    Corpus,
    PredictionRecord,
    RunManifest,
    align,
    corpus_stats,
    load_corpus,
    load_predictions,
)
from .labelspace import (
    DEFAULT_SCHEMA,
    LabelSchema,
    LabelSet,
    enumerate_powerset,
    format_codes,
    match_pattern,
    parse_binary_code,
    parse_pattern,
)
from .metrics import aggregate_runs, evaluate, instance_scores, labelset_counts

__version__ = "0.1.0"
