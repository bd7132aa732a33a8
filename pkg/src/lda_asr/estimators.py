"""Estimator-style wrappers: ``fit`` / ``predict`` / ``score`` over lists of utterances.

``X`` is always a sequence of :class:`Utterance`. ``y``, when given, is a
parallel sequence of token sequences that replaces the utterances' own
transcripts. ``predict`` returns cascaded-pass greedy hypotheses and
``score`` returns ``1 - mean WER`` so that larger is better.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .checkpoints import Checkpoint
from .config import RunConfig
from .errors import ConfigError, ContractError, LanguageRangeError
from .frontend import Utterance
from .harness.evaluation import wer
from .harness.training import finetune_full, finetune_lda, train_backbone
from .model import TransducerModel
from .nst import run_nst


def resolve_config(config):
    if config is None:
        return RunConfig()
    if isinstance(config, RunConfig):
        return config
    if isinstance(config, dict):
        return RunConfig(**config)
    raise ConfigError(f"config must be a RunConfig, a dict or None, not {type(config).__name__}")


def check_utterances(X, config=None, labeled=None):
    """Validate ``X`` as a non-empty list of utterances inside the model's language range."""
    if isinstance(X, Utterance):
        raise ContractError("X must be a sequence of utterances, not a single utterance")
    X = list(X)
    if not X:
        raise ContractError("X is empty")
    for utt in X:
        if not isinstance(utt, Utterance):
            raise ContractError(f"X holds {type(utt).__name__}, expected Utterance")
        if labeled is True and not utt.transcript:
            raise ContractError(f"utterance {utt.utt_id!r} has no transcript")
        if labeled is False and utt.transcript:
            raise ContractError(f"utterance {utt.utt_id!r} is labeled")
    if config is not None:
        bad = sorted({u.language_id for u in X if u.language_id >= config.num_languages})
        if bad:
            raise LanguageRangeError(f"languages {bad} outside [0, {config.num_languages})")
    return X


def check_targets(X, y, config):
    """Attach ``y`` to ``X`` (when given) and require every utterance to be labeled."""
    if y is None:
        return check_utterances(X, config, labeled=True)
    X = check_utterances(X, config)
    y = [tuple(int(t) for t in seq) for seq in y]
    if len(y) != len(X):
        raise ContractError(f"X has {len(X)} utterances but y has {len(y)} transcripts")
    for seq in y:
        if not seq:
            raise ContractError("empty transcript in y")
        if min(seq) < 0 or max(seq) >= config.vocab_size:
            raise ContractError(f"transcript tokens must lie in [0, {config.vocab_size})")
    return [u.with_transcript(seq) for u, seq in zip(X, y)]


def as_model(source):
    """A :class:`TransducerModel` from a model, a checkpoint, or a fitted estimator."""
    if isinstance(source, TransducerModel):
        return source
    if isinstance(source, Checkpoint):
        return source.to_model()
    if isinstance(source, _TransducerEstimator):
        check_is_fitted(source, "model_")
        return source.model_
    raise ContractError(f"cannot build a model from {type(source).__name__}")


class _TransducerEstimator(BaseEstimator):
    def _model_for(self, utt):
        return self.model_

    def predict(self, X):
        check_is_fitted(self)
        X = check_utterances(X, self.config_)
        return [self._model_for(u).decode(u, pass_name="second").tokens for u in X]

    def score(self, X, y=None):
        X = check_targets(X, y, self.config_) if y is not None else check_utterances(X, self.config_)
        hyps = self.predict(X)
        return 1.0 - float(np.mean([wer(u.reference, h) for u, h in zip(X, hyps)]))

    def to_checkpoint(self, step=None):
        check_is_fitted(self, "model_")
        return Checkpoint.from_model(self.model_, self.n_steps_ if step is None else step)


class CascadedTransducer(_TransducerEstimator):
    """Multilingual backbone trained from scratch (adapters bypassed)."""

    def __init__(self, config=None, steps=None, seed=0):
        self.config = config
        self.steps = steps
        self.seed = seed

    def fit(self, X, y=None):
        cfg = resolve_config(self.config)
        X = check_targets(X, y, cfg)
        steps = cfg.backbone_steps if self.steps is None else self.steps
        model = TransducerModel.initialize(cfg, self.seed)
        self.model_, self.optimizer_ = train_backbone(model, X, cfg, steps=steps)
        self.config_, self.n_steps_ = cfg, steps
        return self

    def _model_for(self, utt):
        return _NoAdapters(self.model_)


class LDAFinetuner(_TransducerEstimator):
    """Language-dependent adapters trained over a frozen ``backbone``."""

    def __init__(self, backbone=None, steps=None, seed=2):
        self.backbone = backbone
        self.steps = steps
        self.seed = seed

    def fit(self, X, y=None):
        base = as_model(self.backbone)
        cfg = base.config
        X = check_targets(X, y, cfg)
        steps = cfg.finetune_steps if self.steps is None else self.steps
        self.model_, self.optimizer_ = finetune_lda(base, X, cfg, steps=steps, seed=self.seed)
        self.config_, self.n_steps_ = cfg, steps
        return self


class FullFinetuner(_TransducerEstimator):
    """Per-language copies of ``backbone`` with every parameter trained."""

    def __init__(self, backbone=None, steps=None, seed=3):
        self.backbone = backbone
        self.steps = steps
        self.seed = seed

    def fit(self, X, y=None):
        base = as_model(self.backbone)
        cfg = base.config
        X = check_targets(X, y, cfg)
        steps = cfg.finetune_steps if self.steps is None else self.steps
        self.models_ = finetune_full(base, X, cfg, steps=steps, seed=self.seed)
        self.config_, self.n_steps_ = cfg, steps
        return self

    def _model_for(self, utt):
        if utt.language_id not in self.models_:
            raise ContractError(f"no model was trained for language {utt.language_id}")
        return _NoAdapters(self.models_[utt.language_id])


class NoisyStudentTrainer(_TransducerEstimator):
    """Teacher-student rounds over unlabeled audio; the last student is an LDA model."""

    def __init__(self, backbone=None, teacher=None, iterations=None, keep_fraction=None):
        self.backbone = backbone
        self.teacher = teacher
        self.iterations = iterations
        self.keep_fraction = keep_fraction

    def fit(self, X, y=None, unlabeled=None, dev=None):
        base = as_model(self.backbone)
        overrides = {}
        if self.iterations is not None:
            overrides["nst_iterations"] = self.iterations
        if self.keep_fraction is not None:
            overrides["keep_fraction"] = self.keep_fraction
        cfg = base.config.replace(**overrides)
        X = check_targets(X, y, cfg)
        if unlabeled is None:
            raise ContractError("NoisyStudentTrainer.fit needs unlabeled utterances")
        unlabeled = check_utterances(unlabeled, cfg, labeled=False)
        teacher = None if self.teacher is None else as_model(self.teacher)
        self.model_, self.ledger_ = run_nst(X, unlabeled, cfg, base, dev=dev, teacher=teacher)
        self.config_, self.n_steps_ = cfg, cfg.finetune_steps
        return self


class _NoAdapters:
    """Decode through ``model`` with the adapters bypassed."""

    def __init__(self, model):
        self.model = model

    def decode(self, utt, pass_name="second"):
        return self.model.decode(utt, pass_name=pass_name, use_adapters=False)
