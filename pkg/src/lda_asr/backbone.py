"""Cascaded Conformer encoder: a causal first pass feeding a non-causal second pass.

Parameters live in a flat ``{name: Tensor}`` dict so checkpoints, adapter
extraction and freezing all work on names. Layer ``i`` of pass ``p`` uses the
prefix ``encoder/{p}/{i}``; ``p`` is ``causal`` or ``noncausal``.
"""

from __future__ import annotations

import math

import numpy as np

from . import lda
from .errors import ConfigError, DimensionError
from .numerics import Tensor, ops

PASSES = ("causal", "noncausal")


def layer_prefixes(config):
    return [f"encoder/causal/{i}" for i in range(config.causal_layers)] + [
        f"encoder/noncausal/{i}" for i in range(config.noncausal_layers)
    ]


# -- initialisation ------------------------------------------------------------


def _dense(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)


def init_conformer_layer(rng, d, ffn_mult, kernel, prefix):
    zeros, ones = np.zeros(d, np.float32), np.ones(d, np.float32)
    p = {}
    for ffn in ("ffn1", "ffn2"):
        p[f"{prefix}/{ffn}/ln_g"], p[f"{prefix}/{ffn}/ln_b"] = ones.copy(), zeros.copy()
        p[f"{prefix}/{ffn}/w1"] = _dense(rng, d, ffn_mult * d)
        p[f"{prefix}/{ffn}/b1"] = np.zeros(ffn_mult * d, np.float32)
        p[f"{prefix}/{ffn}/w2"] = _dense(rng, ffn_mult * d, d)
        p[f"{prefix}/{ffn}/b2"] = zeros.copy()
    p[f"{prefix}/mhsa/ln_g"], p[f"{prefix}/mhsa/ln_b"] = ones.copy(), zeros.copy()
    for proj in ("q", "k", "v", "o"):
        p[f"{prefix}/mhsa/w{proj}"] = _dense(rng, d, d)
        p[f"{prefix}/mhsa/b{proj}"] = zeros.copy()
    p[f"{prefix}/conv/ln_g"], p[f"{prefix}/conv/ln_b"] = ones.copy(), zeros.copy()
    p[f"{prefix}/conv/pw1_w"] = _dense(rng, d, 2 * d)
    p[f"{prefix}/conv/pw1_b"] = np.zeros(2 * d, np.float32)
    p[f"{prefix}/conv/dw_k"] = (rng.standard_normal((kernel, d)) / math.sqrt(kernel)).astype(np.float32)
    p[f"{prefix}/conv/dw_b"] = zeros.copy()
    p[f"{prefix}/conv/norm_g"], p[f"{prefix}/conv/norm_b"] = ones.copy(), zeros.copy()
    p[f"{prefix}/conv/pw2_w"] = _dense(rng, d, d)
    p[f"{prefix}/conv/pw2_b"] = zeros.copy()
    p[f"{prefix}/final_ln/g"], p[f"{prefix}/final_ln/b"] = ones.copy(), zeros.copy()
    return p


def init_encoder(config, rng):
    d = config.model_dim
    params = {
        "frontend/input_proj/w": _dense(rng, config.input_dim, d),
        "frontend/input_proj/b": np.zeros(d, np.float32),
        "frontend/pos_emb": (0.02 * rng.standard_normal((config.max_frames, d))).astype(np.float32),
    }
    for prefix in layer_prefixes(config):
        params.update(init_conformer_layer(rng, d, config.ffn_mult, config.conv_kernel, prefix))
    return params


def conformer_layer_param_count(d, ffn_mult, kernel):
    """Closed form for one layer: (4m + 7) d^2 + (2m + k + 22) d."""
    return (4 * ffn_mult + 7) * d * d + (2 * ffn_mult + kernel + 22) * d


def encoder_param_count(config):
    d = config.model_dim
    per_layer = conformer_layer_param_count(d, config.ffn_mult, config.conv_kernel)
    return config.input_dim * d + d + config.max_frames * d + config.total_layers * per_layer


# -- masks ------------------------------------------------------------------------


def attention_mask(T, lengths=None, causal=False, left_context=-1):
    """Boolean (B, 1, T, T) mask of allowed (query, key) pairs.

    Keys beyond an utterance's length are never visible. Causal masks
    additionally hide future keys and, when ``left_context >= 0``, keys more
    than ``left_context`` frames in the past.
    """
    if lengths is None:
        lengths = np.array([T])
    lengths = np.asarray(lengths)
    keys = np.arange(T)[None, :] < lengths[:, None]            # (B, T)
    allowed = np.broadcast_to(keys[:, None, None, :], (len(lengths), 1, T, T)).copy()
    if causal:
        i = np.arange(T)[:, None]
        j = np.arange(T)[None, :]
        band = j <= i
        if left_context >= 0:
            band &= (i - j) <= left_context
        allowed &= band
    # a padded query row may see nothing; give it its own frame to stay finite
    allowed |= np.eye(T, dtype=bool)
    return allowed


# -- layer ------------------------------------------------------------------------------


def _ffn(x, params, prefix, eps):
    h = ops.layer_norm(x, params[f"{prefix}/ln_g"], params[f"{prefix}/ln_b"], eps)
    h = ops.silu(ops.linear(h, params[f"{prefix}/w1"], params[f"{prefix}/b1"]))
    return ops.linear(h, params[f"{prefix}/w2"], params[f"{prefix}/b2"])


def _self_attention(x, params, prefix, mask, num_heads, eps):
    B, T, d = x.shape
    dh = d // num_heads
    h = ops.layer_norm(x, params[f"{prefix}/ln_g"], params[f"{prefix}/ln_b"], eps)
    q = ops.linear(h, params[f"{prefix}/wq"], params[f"{prefix}/bq"]).reshape(B, T, num_heads, dh)
    k = ops.linear(h, params[f"{prefix}/wk"], params[f"{prefix}/bk"]).reshape(B, T, num_heads, dh)
    v = ops.linear(h, params[f"{prefix}/wv"], params[f"{prefix}/bv"]).reshape(B, T, num_heads, dh)
    scores = ops.einsum("bihd,bjhd->bhij", q, k) * (1.0 / math.sqrt(dh))
    probs = ops.softmax(scores, mask=mask)
    ctx = ops.einsum("bhij,bjhd->bihd", probs, v).reshape(B, T, d)
    return ops.linear(ctx, params[f"{prefix}/wo"], params[f"{prefix}/bo"])


def _convolution(x, params, prefix, frame_mask, causal, eps):
    h = ops.layer_norm(x, params[f"{prefix}/ln_g"], params[f"{prefix}/ln_b"], eps)
    h = ops.glu(ops.linear(h, params[f"{prefix}/pw1_w"], params[f"{prefix}/pw1_b"]))
    # padded frames must not leak into valid ones through the kernel
    h = h * frame_mask[:, :, None].astype(h.dtype)
    h = ops.depthwise_conv1d(h, params[f"{prefix}/dw_k"], causal=causal) + params[f"{prefix}/dw_b"]
    h = ops.silu(ops.layer_norm(h, params[f"{prefix}/norm_g"], params[f"{prefix}/norm_b"], eps))
    return ops.linear(h, params[f"{prefix}/pw2_w"], params[f"{prefix}/pw2_b"])


def conformer_layer(x, params, prefix, attention_mask, frame_mask=None, *, causal, num_heads, eps=1e-5):
    """Half FFN -> self-attention -> convolution -> half FFN -> layer norm.

    ``attention_mask`` is (T, T) or broadcastable to (B, H, T, T); causal
    layers must be given a lower-triangular mask.
    """
    B, T, _ = x.shape
    mask = np.asarray(attention_mask, dtype=bool)
    if mask.shape[-2:] != (T, T):
        raise DimensionError(f"attention mask {mask.shape} does not match sequence length {T}")
    if causal and np.any(np.triu(np.ones((T, T), dtype=bool), 1) & mask.reshape(-1, T, T).any(axis=0)):
        raise DimensionError("causal layer received a mask that exposes future frames")
    if frame_mask is None:
        frame_mask = np.ones((B, T), dtype=bool)
    x = x + 0.5 * _ffn(x, params, f"{prefix}/ffn1", eps)
    x = x + _self_attention(x, params, f"{prefix}/mhsa", mask, num_heads, eps)
    x = x + _convolution(x, params, f"{prefix}/conv", frame_mask, causal, eps)
    x = x + 0.5 * _ffn(x, params, f"{prefix}/ffn2", eps)
    return ops.layer_norm(x, params[f"{prefix}/final_ln/g"], params[f"{prefix}/final_ln/b"], eps)


# -- cascade ---------------------------------------------------------------------------------


def _run_pass(x, params, config, pass_name, count, lengths, language_onehot, use_adapters):
    B, T, _ = x.shape
    causal = pass_name == "causal"
    mask = attention_mask(T, lengths, causal=causal, left_context=config.left_context if causal else -1)
    frame_mask = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
    for i in range(count):
        x = conformer_layer(x, params, f"encoder/{pass_name}/{i}", mask, frame_mask,
                            causal=causal, num_heads=config.num_heads, eps=config.ln_eps)
        if use_adapters and (config.adapter_after_last or i < count - 1):
            x = lda.adapter_forward(x, lda.AdapterBlock.from_params(params, pass_name, i, config),
                                    language_onehot)
    return x


def embed_input(features, params, config):
    features = features if isinstance(features, Tensor) else Tensor(features)
    B, T, width = features.shape
    if width != config.input_dim:
        raise DimensionError(f"features have width {width}, model expects {config.input_dim}")
    if T > config.max_frames:
        raise DimensionError(f"{T} frames exceed max_frames={config.max_frames}")
    x = ops.linear(features, params["frontend/input_proj/w"], params["frontend/input_proj/b"])
    return x + params["frontend/pos_emb"][:T]


def check_adapters(params, config):
    """Raise unless every adapter slot of both passes is populated."""
    expected = lda.adapter_slots(config)
    missing = [f"adapter/{p}/{i}" for p, i in expected if f"adapter/{p}/{i}/D" not in params]
    if missing:
        raise ConfigError(f"adapters missing for {len(missing)} layer(s): {missing[:3]}")


def encode_cascaded(features, lengths, params, config, language_onehot=None, use_adapters=True,
                    first_pass_only=False):
    """Return ``(first_pass, second_pass)`` encodings, each (B, T, d).

    Adapters run after each layer when ``use_adapters`` is set and a one-hot
    language matrix is supplied.
    """
    use_adapters = use_adapters and language_onehot is not None
    if use_adapters:
        check_adapters(params, config)
    lengths = np.asarray(lengths)
    x = embed_input(features, params, config)
    first = _run_pass(x, params, config, "causal", config.causal_layers, lengths,
                      language_onehot, use_adapters)
    if first_pass_only:
        return first, None
    second = _run_pass(first, params, config, "noncausal", config.noncausal_layers, lengths,
                       language_onehot, use_adapters)
    return first, second
