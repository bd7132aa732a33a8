"""Language-dependent adapters.

Each block stores the weights of all K languages stacked along the first
axis: ``D`` is (K*d, h), ``U`` is (K*h, d), ``D_b`` is (K, h) and ``U_b`` is
(K, d). A one-hot language matrix picks one slice per utterance and the
block computes ``x + U_x(relu(D_x(LN(x)) + D_b) ) + U_b`` as a residual
branch. The layer norm is shared by all languages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, LanguageRangeError
from .numerics import Tensor, ops

ADAPTER_TENSORS = ("D", "U", "D_b", "U_b")


def adapter_slots(config):
    """(pass, layer) pairs that carry an adapter."""
    slots = []
    for pass_name, count in (("causal", config.causal_layers), ("noncausal", config.noncausal_layers)):
        last = count if config.adapter_after_last else count - 1
        slots.extend((pass_name, i) for i in range(last))
    return slots


def adapter_name(pass_name, layer, tensor):
    return f"adapter/{pass_name}/{layer}/{tensor}"


@dataclass
class AdapterBlock:
    D: Tensor
    U: Tensor
    D_b: Tensor | None
    U_b: Tensor | None
    ln_g: Tensor
    ln_b: Tensor
    num_languages: int
    eps: float = 1e-5

    @property
    def model_dim(self):
        return self.D.shape[0] // self.num_languages

    @property
    def hidden(self):
        return self.D.shape[1]

    @classmethod
    def from_params(cls, params, pass_name, layer, config):
        get = lambda t: params.get(adapter_name(pass_name, layer, t))  # noqa: E731
        return cls(get("D"), get("U"), get("D_b"), get("U_b"), get("ln_g"), get("ln_b"),
                   config.num_languages, config.ln_eps)


@dataclass
class SelectedWeights:
    D_x: Tensor            # (B, d, h)
    U_x: Tensor            # (B, h, d)
    D_b: Tensor | None     # (B, h)
    U_b: Tensor | None     # (B, d)
    language_ids: np.ndarray


def init_adapters(config, rng, scale=0.02):
    """Down projections small random, up projections and both biases zero."""
    K, d, h = config.num_languages, config.model_dim, config.adapter_hidden
    params = {}
    for pass_name, i in adapter_slots(config):
        params[adapter_name(pass_name, i, "D")] = (scale * rng.standard_normal((K * d, h))).astype(np.float32)
        params[adapter_name(pass_name, i, "U")] = np.zeros((K * h, d), np.float32)
        if config.adapter_bias:
            params[adapter_name(pass_name, i, "D_b")] = np.zeros((K, h), np.float32)
            params[adapter_name(pass_name, i, "U_b")] = np.zeros((K, d), np.float32)
        params[adapter_name(pass_name, i, "ln_g")] = np.ones(d, np.float32)
        params[adapter_name(pass_name, i, "ln_b")] = np.zeros(d, np.float32)
    return params


def onehot_to_ids(language_onehot, num_languages):
    onehot = np.asarray(language_onehot)
    if onehot.ndim != 2:
        raise DimensionError(f"language one-hot must be (B, K), got {onehot.shape}")
    is_binary = np.all((onehot == 0) | (onehot == 1))
    if not is_binary or not np.all(onehot.sum(axis=1) == 1):
        raise ContractError("every language row must be exactly one-hot")
    ids = onehot.argmax(axis=1)
    if np.any(ids >= num_languages):
        raise LanguageRangeError(f"language id {int(ids.max())} >= K={num_languages}")
    if onehot.shape[1] != num_languages:
        raise DimensionError(f"one-hot width {onehot.shape[1]} != K={num_languages}")
    return ids


def select_language_weights(block, language_onehot):
    """Gather each utterance's language slice of D, U and the biases."""
    K, d, h = block.num_languages, block.model_dim, block.hidden
    ids = onehot_to_ids(language_onehot, K)
    if block.U.shape != (K * h, d):
        raise DimensionError(f"U has shape {block.U.shape}, expected {(K * h, d)}")
    D_x = ops.take_rows(block.D.reshape(K, d, h), ids)
    U_x = ops.take_rows(block.U.reshape(K, h, d), ids)
    D_b = ops.take_rows(block.D_b, ids) if block.D_b is not None else None
    U_b = ops.take_rows(block.U_b, ids) if block.U_b is not None else None
    return SelectedWeights(D_x, U_x, D_b, U_b, ids)


def adapter_forward(x, block, language_onehot):
    """Residual language-dependent bottleneck on (B, T, d) inputs."""
    if x.shape[-1] != block.model_dim or x.shape[0] != np.asarray(language_onehot).shape[0]:
        raise DimensionError(
            f"adapter input {x.shape} vs d={block.model_dim}, batch {np.asarray(language_onehot).shape[0]}"
        )
    sel = select_language_weights(block, language_onehot)
    h = ops.layer_norm(x, block.ln_g, block.ln_b, block.eps)
    h = ops.einsum("btd,bdh->bth", h, sel.D_x)
    if sel.D_b is not None:
        h = h + sel.D_b.reshape(x.shape[0], 1, block.hidden)
    h = ops.relu(h)
    out = ops.einsum("bth,bhd->btd", h, sel.U_x)
    if sel.U_b is not None:
        out = out + sel.U_b.reshape(x.shape[0], 1, block.model_dim)
    return x + out


def adapter_param_budget(d, h, K, layer_count, backbone_total):
    """Fraction of ``backbone_total`` that one language's adapter slices occupy.

    Per layer a language owns a d x h down projection, an h x d up
    projection and their biases; the shared layer norm is not counted.
    ``K`` does not enter: the per-language share is independent of it.
    """
    if min(d, h, K, layer_count, backbone_total) <= 0:
        raise ContractError("budget arguments must all be positive")
    return per_language_adapter_params(d, h, layer_count) / backbone_total


def per_language_adapter_params(d, h, layer_count):
    return layer_count * (2 * d * h + h + d)
