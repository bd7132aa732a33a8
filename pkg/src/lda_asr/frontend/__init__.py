from .batching import AugmentConfig, Batch, language_onehot, make_batch, sample_indices
from .features import frame_stack, frame_unstack, spec_augment
from .storage import read_corpus, write_corpus
from .synthetic import (
    Corpus,
    LanguageSpec,
    Utterance,
    generate_corpus,
    make_language_specs,
    split_by_language,
)

__all__ = [
    "AugmentConfig",
    "Batch",
    "Corpus",
    "LanguageSpec",
    "Utterance",
    "frame_stack",
    "frame_unstack",
    "generate_corpus",
    "language_onehot",
    "make_batch",
    "make_language_specs",
    "read_corpus",
    "sample_indices",
    "spec_augment",
    "split_by_language",
    "write_corpus",
]
