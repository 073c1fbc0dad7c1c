"""Reference resolution in visually grounded dialogue via text generation.

The pipeline: load a dialogue corpus over fixed image sets, build the
linguistic context for each mention, produce a referent description
(heuristics, annotated ground truth, or a text generator), embed the
description and the candidate images, and resolve the mention to the
best-scoring image. Evaluation runs cross-validation by image set and
reports retrieval and text-similarity metrics with exact random
baselines. An HTTP service plus browser UI covers the two human
evaluation protocols.
"""

from .context import (
    DEFAULT_MARKERS,
    FULL,
    W3,
    W7,
    W13,
    ContextWindowSpec,
    LinguisticContext,
    MarkerCollisionError,
    MarkerConfig,
    SerializedSample,
    build_context,
    export_finetune_dataset,
    parse_window,
    serialize_sample,
    strip_sample_markers,
)
from .corpus import (
    Corpus,
    CorpusError,
    CorpusLoadError,
    CorpusValidationError,
    Dialogue,
    FoldSpec,
    Image,
    ImageSet,
    Mention,
    RankingEvent,
    Utterance,
    candidate_set_at,
    load_corpus,
    make_folds,
    save_corpus,
    single_image_mentions,
)
from .crossval import (
    CrossValReport,
    DescriberSpec,
    FoldResult,
    LeakageError,
    run_cross_validation,
    write_report_files,
)
from .describers import (
    DEFAULT_LEXICON,
    CoreferenceChain,
    CorefClusterOutput,
    EchoGeneratorBackend,
    FixtureGeneratorBackend,
    HttpGeneratorBackend,
    ProformLexicon,
    ReferentDescription,
    coref_aggregate,
    crdg_generate,
    describe_coref,
    describe_mention,
    describe_substitution,
    gold_cluster_output,
    gt_chain_concat,
    gt_manual,
    gt_set_of_words,
    label_function,
    load_cluster_file,
)
from .metrics import (
    RetrievalMetrics,
    TextGenMetrics,
    accuracy,
    bleu,
    corpus_bleu,
    cosine_text_similarity,
    expected_random_accuracy,
    expected_random_mrr,
    jaccard,
    mrr,
    ndcg,
    retrieval_metrics,
    rouge_l,
    textgen_metrics,
)
from .retrieval import (
    CandidateMatrix,
    EmbeddingCache,
    HashEmbeddingBackend,
    HttpEmbeddingBackend,
    PlantedOracleBackend,
    RetrievalResult,
    TextEmbedding,
    encode_candidates,
    encode_text,
    identify,
    score_and_rank,
)
from .service import ExperimentSession, Response, SessionStore, create_app, score_sessions
from .text import tokenize, unique_in_order

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LEXICON",
    "DEFAULT_MARKERS",
    "FULL",
    "W13",
    "W3",
    "W7",
    "CandidateMatrix",
    "ContextWindowSpec",
    "CoreferenceChain",
    "CorefClusterOutput",
    "Corpus",
    "CorpusError",
    "CorpusLoadError",
    "CorpusValidationError",
    "CrossValReport",
    "DescriberSpec",
    "Dialogue",
    "EchoGeneratorBackend",
    "EmbeddingCache",
    "ExperimentSession",
    "FixtureGeneratorBackend",
    "FoldResult",
    "FoldSpec",
    "HashEmbeddingBackend",
    "HttpEmbeddingBackend",
    "HttpGeneratorBackend",
    "Image",
    "ImageSet",
    "LeakageError",
    "LinguisticContext",
    "MarkerCollisionError",
    "MarkerConfig",
    "Mention",
    "PlantedOracleBackend",
    "RankingEvent",
    "ReferentDescription",
    "Response",
    "RetrievalMetrics",
    "RetrievalResult",
    "SerializedSample",
    "SessionStore",
    "TextEmbedding",
    "TextGenMetrics",
    "Utterance",
    "accuracy",
    "bleu",
    "build_context",
    "candidate_set_at",
    "coref_aggregate",
    "corpus_bleu",
    "cosine_text_similarity",
    "crdg_generate",
    "create_app",
    "describe_coref",
    "describe_mention",
    "describe_substitution",
    "encode_candidates",
    "encode_text",
    "expected_random_accuracy",
    "expected_random_mrr",
    "export_finetune_dataset",
    "gold_cluster_output",
    "gt_chain_concat",
    "gt_manual",
    "gt_set_of_words",
    "identify",
    "jaccard",
    "label_function",
    "load_cluster_file",
    "load_corpus",
    "make_folds",
    "mrr",
    "ndcg",
    "parse_window",
    "retrieval_metrics",
    "rouge_l",
    "run_cross_validation",
    "save_corpus",
    "score_and_rank",
    "score_sessions",
    "serialize_sample",
    "single_image_mentions",
    "strip_sample_markers",
    "textgen_metrics",
    "tokenize",
    "unique_in_order",
    "write_report_files",
]
