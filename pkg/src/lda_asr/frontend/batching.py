"""Mixed-language batch assembly and sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, DimensionError, LanguageRangeError
from .features import frame_stack, spec_augment


@dataclass
class Batch:
    stacked_features: np.ndarray   # (B, T, d)
    feature_lengths: np.ndarray    # (B,)
    language_onehot: np.ndarray    # (B, K) with exactly one 1 per row
    targets: np.ndarray            # (B, U_max), padded with pad_token
    target_lengths: np.ndarray     # (B,)
    utt_ids: tuple = ()

    @property
    def size(self):
        return self.stacked_features.shape[0]

    @property
    def language_ids(self):
        return self.language_onehot.argmax(axis=1)

    def frame_mask(self):
        T = self.stacked_features.shape[1]
        return np.arange(T)[None, :] < self.feature_lengths[:, None]


@dataclass
class AugmentConfig:
    n_freq_masks: int = 2
    max_freq_len: int = 7
    n_time_masks: int = 2
    max_time_len: int = 5


def language_onehot(language_ids, num_languages):
    ids = np.asarray(language_ids, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= num_languages):
        raise LanguageRangeError(f"language ids {ids.tolist()} outside [0, {num_languages})")
    onehot = np.zeros((len(ids), num_languages), dtype=np.float32)
    onehot[np.arange(len(ids)), ids] = 1.0
    return onehot


def make_batch(utterances, num_languages, pad_token=0, stack_factor=1, augment=None, seed=0):
    """Stack, pad and tag a list of utterances.

    ``augment`` (an :class:`AugmentConfig`) applies SpecAugment to the raw
    frames before stacking; utterance ``i`` uses seed ``(seed, i)``.
    """
    utterances = list(utterances)
    if not utterances:
        raise ContractError("cannot build a batch from zero utterances")
    dims = {u.features.shape[1] for u in utterances}
    if len(dims) != 1:
        raise DimensionError(f"utterances disagree on feature dimension: {sorted(dims)}")
    feats = []
    for i, u in enumerate(utterances):
        raw = u.features
        if augment is not None:
            raw = spec_augment(raw, augment.n_freq_masks, augment.max_freq_len,
                               augment.n_time_masks, augment.max_time_len, seed=[seed, i])
        feats.append(frame_stack(raw, stack_factor))
    lengths = np.array([f.shape[0] for f in feats], dtype=np.int64)
    T, d = int(lengths.max()), feats[0].shape[1]
    stacked = np.zeros((len(feats), T, d), dtype=np.float32)
    for i, f in enumerate(feats):
        stacked[i, :f.shape[0]] = f
    target_lengths = np.array([len(u.transcript) for u in utterances], dtype=np.int64)
    targets = np.full((len(utterances), max(1, int(target_lengths.max()))), pad_token, dtype=np.int64)
    for i, u in enumerate(utterances):
        targets[i, :len(u.transcript)] = u.transcript
    return Batch(
        stacked_features=stacked,
        feature_lengths=lengths,
        language_onehot=language_onehot([u.language_id for u in utterances], num_languages),
        targets=targets,
        target_lengths=target_lengths,
        utt_ids=tuple(u.utt_id for u in utterances),
    )


def sample_indices(utterances, batch_size, rng, sampling="language"):
    """Draw one batch worth of utterance indices.

    ``sampling="language"`` picks a language uniformly, then an utterance of
    it; ``"utterance"`` samples uniformly over the pool, reproducing its
    natural imbalance. A dict of per-language weights is also accepted.
    """
    if sampling == "utterance":
        return rng.integers(0, len(utterances), size=batch_size)
    by_lang = {}
    for i, u in enumerate(utterances):
        by_lang.setdefault(u.language_id, []).append(i)
    langs = sorted(by_lang)
    if isinstance(sampling, dict):
        weights = np.array([float(sampling.get(k, 0.0)) for k in langs])
        if weights.sum() <= 0:
            raise ContractError("language sampling weights sum to zero")
        weights = weights / weights.sum()
    elif sampling == "language":
        weights = np.full(len(langs), 1.0 / len(langs))
    else:
        raise ContractError(f"unknown sampling mode {sampling!r}")
    chosen = rng.choice(len(langs), size=batch_size, p=weights)
    return np.array([by_lang[langs[c]][rng.integers(len(by_lang[langs[c]]))] for c in chosen])
