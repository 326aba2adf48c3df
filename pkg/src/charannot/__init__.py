"""charannot: LLM-assisted annotation of fiction-character behaviors.

Pipeline stages: chunk a full text, annotate character behaviors per chunk,
disambiguate character names, review annotation quality with a
human-in-the-loop session, then compute statistics and embeddings.
"""

__version__ = "0.1.0"

from .annotator import AnnotateOptions, annotate, build_prompt, parse_annotation_response
from .backends import HttpBackend, ScriptedMock
from .chunker import ChunkerConfig, chunk_text, reconstruct_text
from .disambiguator import candidate_pairs, confirm_pseudonym, disambiguate, gather_evidence
from .embeddings import (
    HashEmbeddingBackend,
    character_profile_text,
    cosine_similarity,
    embed_characters,
)
from .model import (
    Annotation,
    AnnotationCorpus,
    ChunkSet,
    EvalRecord,
    MergeSet,
    RatingScale,
    TraitSpec,
    parse_corpus,
    serialize_corpus,
)
from .review import ReviewSession, beta_credible_interval, quality_report, sample_annotations
from .stats import (
    character_counts,
    chi_square_independence,
    compute_statistics,
    mean_trait_score,
    pearson,
)
from .tokens import count_tokens

__all__ = [
    "__version__",
    "AnnotateOptions",
    "Annotation",
    "AnnotationCorpus",
    "ChunkSet",
    "ChunkerConfig",
    "EvalRecord",
    "HashEmbeddingBackend",
    "HttpBackend",
    "MergeSet",
    "RatingScale",
    "ReviewSession",
    "ScriptedMock",
    "TraitSpec",
    "annotate",
    "beta_credible_interval",
    "build_prompt",
    "candidate_pairs",
    "character_counts",
    "character_profile_text",
    "chi_square_independence",
    "chunk_text",
    "compute_statistics",
    "confirm_pseudonym",
    "cosine_similarity",
    "count_tokens",
    "disambiguate",
    "embed_characters",
    "gather_evidence",
    "mean_trait_score",
    "parse_annotation_response",
    "parse_corpus",
    "pearson",
    "quality_report",
    "reconstruct_text",
    "sample_annotations",
    "serialize_corpus",
]
