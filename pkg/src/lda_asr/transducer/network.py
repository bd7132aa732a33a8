"""Prediction network and HAT-factorised joint network."""

from __future__ import annotations

import math

import numpy as np

from ..errors import LanguageRangeError
from ..numerics import Tensor, ops


def init_decoder(config, rng):
    V, e, j, d = config.vocab_size, config.embed_dim, config.joint_dim, config.model_dim

    def dense(fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)

    # row V of each table is the start-of-history marker
    return {
        "prediction/emb_prev1": (rng.standard_normal((V + 1, e)) / math.sqrt(e)).astype(np.float32),
        "prediction/emb_prev2": (rng.standard_normal((V + 1, e)) / math.sqrt(e)).astype(np.float32),
        "prediction/ln_g": np.ones(e, np.float32),
        "prediction/ln_b": np.zeros(e, np.float32),
        "prediction/proj_w": dense(e, j),
        "prediction/proj_b": np.zeros(j, np.float32),
        "joint/enc_w": dense(d, j),
        "joint/enc_b": np.zeros(j, np.float32),
        "joint/pred_w": dense(j, j),
        "joint/pred_b": np.zeros(j, np.float32),
        "joint/out_w": dense(j, V + 1),
        "joint/out_b": np.zeros(V + 1, np.float32),
    }


def decoder_param_count(config):
    V, e, j, d = config.vocab_size, config.embed_dim, config.joint_dim, config.model_dim
    prediction = 2 * (V + 1) * e + 2 * e + e * j + j
    joint = d * j + j + j * j + j + j * (V + 1) + (V + 1)
    return prediction + joint


def history_indices(targets, target_lengths, vocab_size):
    """(prev1, prev2) token indices for prediction states u = 0..U_max.

    State ``u`` has emitted ``targets[:u]``; missing history is the start
    marker (index ``vocab_size``).
    """
    targets = np.asarray(targets)
    B, U = targets.shape
    start = vocab_size
    padded = np.concatenate([np.full((B, 2), start), targets], axis=1)
    prev1 = padded[:, 1:U + 2]     # token u (1-based) or start
    prev2 = padded[:, 0:U + 1]
    return prev1, prev2


def prediction_forward(params, prev1, prev2, vocab_size, eps=1e-5):
    """Embed the last two non-blank tokens (start marker = ``vocab_size``).

    The two positions use separate tables; their embeddings are summed,
    normalised and projected to the joint width.
    """
    prev1 = np.asarray(prev1, dtype=np.int64)
    prev2 = np.asarray(prev2, dtype=np.int64)
    for arr in (prev1, prev2):
        if arr.size and (arr.min() < 0 or arr.max() > vocab_size):
            raise LanguageRangeError(f"history token outside [0, {vocab_size})")
    emb = ops.take_rows(params["prediction/emb_prev1"], prev1) + ops.take_rows(
        params["prediction/emb_prev2"], prev2
    )
    emb = ops.layer_norm(emb, params["prediction/ln_g"], params["prediction/ln_b"], eps)
    return ops.linear(emb, params["prediction/proj_w"], params["prediction/proj_b"])


def project_encoder(params, enc):
    return ops.linear(enc, params["joint/enc_w"], params["joint/enc_b"])


def project_prediction(params, pred):
    return ops.linear(pred, params["joint/pred_w"], params["joint/pred_b"])


def joint_logits(params, enc_proj, pred_proj):
    return ops.linear(ops.tanh(enc_proj + pred_proj), params["joint/out_w"], params["joint/out_b"])


def hat_logprobs(logits):
    """Split (..., V+1) joint logits into HAT log-probabilities.

    Returns ``(log_p_blank, log_p_labels)`` with
    ``log_p_blank = log sigmoid(z_blank)`` and
    ``log_p_labels = log(1 - sigmoid(z_blank)) + log_softmax(z_labels)``.
    """
    V = logits.shape[-1] - 1
    blank_logit = logits[..., V]
    log_p_blank = ops.log_sigmoid(blank_logit)
    log_not_blank = ops.log_sigmoid(-blank_logit)
    label_lp = ops.log_softmax(logits[..., :V])
    shape = log_not_blank.shape + (1,)
    return log_p_blank, label_lp + log_not_blank.reshape(shape)


def joint_hat(params, enc_proj, pred_proj):
    """HAT log-probabilities for projected encoder / prediction vectors (broadcasting)."""
    return hat_logprobs(joint_logits(params, enc_proj, pred_proj))


def as_tensor_dict(arrays, trainable=()):
    trainable = set(trainable)
    return {k: Tensor(v, requires_grad=k in trainable) for k, v in arrays.items()}
