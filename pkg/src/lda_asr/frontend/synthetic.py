"""Synthetic multilingual corpora.

Each language owns an emission table: token ``v`` is rendered as a run of
noisy frames around ``emission[v]``. Languages share a pool of acoustic
prototypes but map a subset of tokens to different prototypes and carry a
small per-language offset, so a language-blind model confuses them while a
language-aware one need not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError, LanguageRangeError


@dataclass
class Utterance:
    features: np.ndarray
    language_id: int
    transcript: tuple = ()
    supervised: bool = True
    utt_id: str = ""
    reference: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.transcript = tuple(int(t) for t in self.transcript)
        self.reference = tuple(int(t) for t in self.reference) or self.transcript
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ContractError(f"utterance {self.utt_id!r} needs a non-empty T x d feature matrix")
        if self.supervised != bool(self.transcript):
            raise ContractError(
                f"utterance {self.utt_id!r}: transcript must be non-empty exactly when supervised"
            )
        if self.language_id < 0:
            raise LanguageRangeError(f"negative language id {self.language_id}")

    @property
    def num_frames(self):
        return self.features.shape[0]

    def with_transcript(self, tokens):
        """Return a supervised copy carrying ``tokens`` (e.g. a pseudo-label)."""
        return Utterance(self.features, self.language_id, tuple(tokens), True,
                         self.utt_id, self.reference)


@dataclass
class LanguageSpec:
    language_id: int
    emission: np.ndarray
    noise_scale: float = 0.1
    supervised_count: int = 0
    unlabeled_count: int = 0
    test_count: int = 0
    transitions: np.ndarray | None = None
    min_tokens: int = 3
    max_tokens: int = 6
    min_frames_per_token: int = 4
    max_frames_per_token: int = 8

    def __post_init__(self):
        self.emission = np.asarray(self.emission, dtype=np.float32)
        if self.emission.ndim != 2:
            raise ConfigError("emission table must be V x d_raw")
        if len({row.tobytes() for row in self.emission}) != len(self.emission):
            raise ConfigError(f"language {self.language_id}: emission means must be distinct")
        if min(self.supervised_count, self.unlabeled_count, self.test_count) < 0:
            raise ConfigError("corpus sizes must be non-negative")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ConfigError("token count range is empty")
        if not 1 <= self.min_frames_per_token <= self.max_frames_per_token:
            raise ConfigError("frames-per-token range is empty")

    @property
    def vocab_size(self):
        return self.emission.shape[0]


@dataclass
class Corpus:
    supervised: list = field(default_factory=list)
    unlabeled: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def languages(self):
        return sorted({u.language_id for u in self.supervised + self.unlabeled + self.test})


def split_by_language(utterances):
    groups = {}
    for u in utterances:
        groups.setdefault(u.language_id, []).append(u)
    return dict(sorted(groups.items()))


def make_language_specs(num_languages=4, vocab_size=32, raw_dim=32, *, head_languages=2,
                        head_supervised=200, tail_supervised=10, unlabeled_count=120,
                        test_count=24, noise_scale=0.1, remapped_fraction=0.25,
                        accent_scale=0.5, branching=4, seed=0):
    """Build an imbalanced family of languages over a shared prototype pool.

    Head languages (the first ``head_languages`` ids) keep the canonical
    token-to-prototype map; every other language permutes a
    ``remapped_fraction`` of its tokens and gets ``tail_supervised``
    transcribed utterances.
    """
    rng = np.random.default_rng(seed)
    prototypes = rng.standard_normal((vocab_size, raw_dim)).astype(np.float32)
    specs = []
    for k in range(num_languages):
        mapping = np.arange(vocab_size)
        if k >= head_languages:
            n_moved = max(2, int(round(remapped_fraction * vocab_size)))
            moved = rng.choice(vocab_size, size=n_moved, replace=False)
            mapping[moved] = moved[np.roll(np.arange(n_moved), 1)]
        accent = accent_scale * rng.standard_normal(raw_dim).astype(np.float32)
        emission = prototypes[mapping] + accent
        transitions = np.zeros((vocab_size, vocab_size))
        for v in range(vocab_size):
            successors = rng.choice(
                [w for w in range(vocab_size) if w != v], size=branching, replace=False
            )
            transitions[v, successors] = rng.dirichlet(np.ones(branching))
        head = k < head_languages
        specs.append(LanguageSpec(
            language_id=k,
            emission=emission,
            noise_scale=noise_scale,
            supervised_count=head_supervised if head else tail_supervised,
            unlabeled_count=unlabeled_count,
            test_count=test_count,
            transitions=transitions,
        ))
    return specs


def _sample_transcript(spec, rng):
    length = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
    V = spec.vocab_size
    tokens = [int(rng.integers(V))]
    while len(tokens) < length:
        if spec.transitions is not None:
            nxt = int(rng.choice(V, p=spec.transitions[tokens[-1]]))
        else:
            nxt = int(rng.integers(V - 1))
            nxt += nxt >= tokens[-1]  # no immediate repeats
        tokens.append(nxt)
    return tokens


def render_features(spec, tokens, rng):
    """Emission means of ``tokens`` held for a random number of frames, plus noise."""
    frames = []
    for tok in tokens:
        if not 0 <= tok < spec.vocab_size:
            raise LanguageRangeError(f"token {tok} outside vocabulary of size {spec.vocab_size}")
        n = int(rng.integers(spec.min_frames_per_token, spec.max_frames_per_token + 1))
        frames.append(np.repeat(spec.emission[tok][None, :], n, axis=0))
    feats = np.concatenate(frames, axis=0)
    if spec.noise_scale > 0:
        feats = feats + spec.noise_scale * rng.standard_normal(feats.shape)
    return feats.astype(np.float32)


def generate_corpus(specs, seed):
    """Sample supervised, unlabeled and test utterances for every language.

    Output is a pure function of ``(specs, seed)``.
    """
    if not specs:
        raise ConfigError("need at least one language spec")
    ids = [s.language_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate language ids in {ids}")
    corpus = Corpus()
    for spec in specs:
        rng = np.random.default_rng([seed, spec.language_id])
        for split, count in (("sup", spec.supervised_count), ("unl", spec.unlabeled_count),
                             ("test", spec.test_count)):
            for i in range(count):
                tokens = _sample_transcript(spec, rng)
                feats = render_features(spec, tokens, rng)
                utt_id = f"l{spec.language_id}-{split}-{i:05d}"
                if split == "unl":
                    corpus.unlabeled.append(Utterance(feats, spec.language_id, (), False,
                                                      utt_id, reference=tuple(tokens)))
                elif split == "sup":
                    corpus.supervised.append(Utterance(feats, spec.language_id, tokens, True, utt_id))
                else:
                    corpus.test.append(Utterance(feats, spec.language_id, tokens, True, utt_id))
    return corpus
