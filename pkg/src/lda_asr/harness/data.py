"""Corpus construction from a run config, and its on-disk layout."""

from __future__ import annotations

from pathlib import Path

from ..frontend import Corpus, generate_corpus, make_language_specs, read_corpus, write_corpus

SPLITS = ("supervised", "unlabeled", "test")


def build_corpus(config, seed=None):
    seed = config.seed if seed is None else seed
    specs = make_language_specs(
        num_languages=config.num_languages, vocab_size=config.vocab_size, raw_dim=config.raw_dim,
        head_languages=config.head_languages, head_supervised=config.head_supervised,
        tail_supervised=config.tail_supervised, unlabeled_count=config.unlabeled_count,
        test_count=config.test_count, noise_scale=config.noise_scale,
        remapped_fraction=config.remapped_fraction, accent_scale=config.accent_scale,
        seed=seed,
    )
    return generate_corpus(specs, seed)


def save_corpus(corpus, root):
    root = Path(root)
    for split in SPLITS:
        write_corpus(root / split, getattr(corpus, split))
    return root


def load_corpus(root):
    root = Path(root)
    return Corpus(*(read_corpus(root / split) for split in SPLITS))
