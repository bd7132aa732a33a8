"""The complete streaming transducer: cascaded encoder, adapters, prediction and joint networks."""

from __future__ import annotations

import numpy as np

from . import backbone, lda
from .errors import ContractError, LanguageRangeError
from .frontend import frame_stack, language_onehot
from .numerics import Tensor, no_grad
from .transducer import beam_decode, greedy_decode, init_decoder, transducer_loss

PASS_NAMES = ("first", "second")


def is_adapter_slice(name):
    """Names of per-language adapter tensors (the shared adapter layer norm is excluded)."""
    return name.startswith("adapter/") and name.rsplit("/", 1)[1] in lda.ADAPTER_TENSORS


def is_adapter(name):
    return name.startswith("adapter/")


class TransducerModel:
    """Named float32 tensors plus the config that shapes them.

    ``backbone_names`` is everything except adapters: the encoder, the
    prediction network and the joint network. ``adapter_names`` are the
    per-language D, U, D_b and U_b stacks.
    """

    def __init__(self, config, params):
        self.config = config
        self.params = {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in params.items()}

    @classmethod
    def initialize(cls, config, seed=None):
        rng = np.random.default_rng(config.seed if seed is None else seed)
        params = backbone.init_encoder(config, rng)
        params.update(init_decoder(config, rng))
        params.update(lda.init_adapters(config, rng))
        return cls(config, params)

    # -- parameter groups ------------------------------------------------------

    @property
    def names(self):
        return sorted(self.params)

    @property
    def backbone_names(self):
        return sorted(k for k in self.params if not is_adapter(k))

    @property
    def adapter_names(self):
        return sorted(k for k in self.params if is_adapter_slice(k))

    def set_trainable(self, names):
        names = set(names)
        unknown = names - set(self.params)
        if unknown:
            raise ContractError(f"unknown parameter names: {sorted(unknown)[:3]}")
        for k, t in self.params.items():
            t.requires_grad = k in names
            t.grad = None
        return self

    @property
    def trainable_names(self):
        return sorted(k for k, t in self.params.items() if t.requires_grad)

    def arrays(self):
        return {k: t.data for k, t in self.params.items()}

    def copy(self):
        return TransducerModel(self.config, {k: Tensor(t.data.copy()) for k, t in self.params.items()})

    def num_parameters(self, names=None):
        names = self.params if names is None else names
        return int(sum(self.params[k].size for k in names))

    # -- forward -------------------------------------------------------------------

    def encode(self, features, lengths, onehot=None, use_adapters=True, first_pass_only=False):
        return backbone.encode_cascaded(features, lengths, self.params, self.config, onehot,
                                        use_adapters=use_adapters, first_pass_only=first_pass_only)

    def loss(self, batch, use_adapters=True, fastemit_lambda=None):
        """Weighted first-pass plus second-pass transducer loss on a :class:`Batch`."""
        cfg = self.config
        skip_second = cfg.second_pass_weight == 0
        first, second = self.encode(batch.stacked_features, batch.feature_lengths,
                                     batch.language_onehot, use_adapters, first_pass_only=skip_second)
        args = (batch.feature_lengths, batch.targets, batch.target_lengths, self.params, cfg, fastemit_lambda)
        total = transducer_loss(first, *args) * cfg.first_pass_weight
        if not skip_second:
            total = total + transducer_loss(second, *args) * cfg.second_pass_weight
        return total

    def encode_utterance(self, utterance, use_adapters=True):
        """(first, second) encodings of one utterance as (T, d) arrays."""
        if not 0 <= utterance.language_id < self.config.num_languages:
            raise LanguageRangeError(
                f"language {utterance.language_id} outside model range [0, {self.config.num_languages})")
        feats = frame_stack(utterance.features, self.config.stack_factor)[None]
        onehot = language_onehot([utterance.language_id], self.config.num_languages)
        with no_grad():
            first, second = self.encode(feats, [feats.shape[1]], onehot, use_adapters)
        return first.data[0], second.data[0]

    def decode(self, utterance, pass_name="second", use_adapters=True, beam_width=None, lm=None,
               lm_weight=0.0):
        """Greedy (default) or beam decode of one utterance with the chosen encoder pass."""
        if pass_name not in PASS_NAMES:
            raise ContractError(f"pass must be one of {PASS_NAMES}")
        first, second = self.encode_utterance(utterance, use_adapters)
        enc = first if pass_name == "first" else second
        cfg = self.config
        if beam_width is None:
            return greedy_decode(enc, self.params, cfg.max_symbols_per_frame, cfg.ln_eps)
        return beam_decode(enc, self.params, beam_width, lm, lm_weight, cfg.max_symbols_per_frame,
                           cfg.ln_eps)
