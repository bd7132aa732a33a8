"""Transducer negative log-likelihood over the (T, U+1) alignment lattice.

The lattice op takes per-node log P(blank) and log P(next label) and runs
the forward/backward recursions in double precision. Its gradient is exact;
FastEmit scales the part that flows through label arcs by ``1 + lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, TrainingError
from ..numerics import Tensor, ops
from .network import history_indices, joint_logits, hat_logprobs, prediction_forward, \
    project_encoder, project_prediction


@dataclass
class LossLattice:
    log_alpha: np.ndarray      # (B, T, U+1)
    log_beta: np.ndarray       # (B, T+1, U+2), padded
    log_blank: np.ndarray      # (B, T, U+1), -inf outside each utterance
    log_label: np.ndarray      # (B, T, U+1), -inf where no label arc exists
    log_likelihood: np.ndarray  # (B,)


def _masked_lattice(lp_blank, lp_label, frame_lengths, target_lengths):
    B, T, U1 = lp_blank.shape
    t = np.arange(T)[None, :, None]
    u = np.arange(U1)[None, None, :]
    T_b = np.asarray(frame_lengths)[:, None, None]
    U_b = np.asarray(target_lengths)[:, None, None]
    blank = np.where((t < T_b) & (u <= U_b), lp_blank.astype(np.float64), -np.inf)
    label = np.full((B, T, U1), -np.inf)
    if U1 > 1:
        label[:, :, :U1 - 1] = lp_label.astype(np.float64)[:, :, :U1 - 1]
    label = np.where((t < T_b) & (u < U_b), label, -np.inf)
    return blank, label


def forward_backward(lp_blank, lp_label, frame_lengths, target_lengths):
    """Forward (alpha) and backward (beta) log-variables for a padded batch.

    ``lp_blank`` is (B, T, U+1); ``lp_label`` is (B, T, U) with
    ``lp_label[b, t, u] = log P(y_{u+1} | t, u)``.
    """
    frame_lengths = np.asarray(frame_lengths, dtype=np.int64)
    target_lengths = np.asarray(target_lengths, dtype=np.int64)
    if np.any(frame_lengths < 1):
        raise ContractError("every utterance needs at least one frame")
    if np.any(target_lengths < 0):
        raise ContractError("target lengths must be non-negative")
    if not (np.all(np.isfinite(lp_blank)) and np.all(np.isfinite(lp_label))):
        raise TrainingError("non-finite joint log-probabilities in transducer loss")
    blank, label = _masked_lattice(lp_blank, lp_label, frame_lengths, target_lengths)
    B, T, U1 = blank.shape
    bidx = np.arange(B)

    alpha = np.full((B, T, U1), -np.inf)
    alpha[:, 0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            from_blank = alpha[:, t - 1, u] + blank[:, t - 1, u] if t > 0 else -np.inf
            from_label = alpha[:, t, u - 1] + label[:, t, u - 1] if u > 0 else -np.inf
            alpha[:, t, u] = np.logaddexp(from_blank, from_label)

    beta = np.full((B, T + 1, U1 + 1), -np.inf)
    beta[bidx, frame_lengths, target_lengths] = 0.0  # virtual terminal node
    for t in range(T - 1, -1, -1):
        for u in range(U1 - 1, -1, -1):
            value = np.logaddexp(blank[:, t, u] + beta[:, t + 1, u], label[:, t, u] + beta[:, t, u + 1])
            # shorter utterances keep their virtual terminal inside the grid
            terminal = (t == frame_lengths) & (u == target_lengths)
            beta[:, t, u] = np.where(terminal, 0.0, value)

    ll_alpha = alpha[bidx, frame_lengths - 1, target_lengths] + blank[bidx, frame_lengths - 1, target_lengths]
    return LossLattice(alpha, beta, blank, label, ll_alpha)


def lattice_nll(lp_blank, lp_label, frame_lengths, target_lengths, fastemit_lambda=0.0):
    """Per-utterance transducer NLL as a differentiable (B,) float64 Tensor."""
    if fastemit_lambda < 0:
        raise ContractError("FastEmit lambda must be non-negative")
    lattice = forward_backward(lp_blank.data, lp_label.data, frame_lengths, target_lengths)
    log_z = lattice.log_likelihood
    alpha, beta = lattice.log_alpha, lattice.log_beta
    B, T, U1 = alpha.shape

    def backward(g):
        g = np.asarray(g, dtype=np.float64).reshape(B, 1, 1)
        occ_blank = np.exp(alpha + lattice.log_blank + beta[:, 1:, :U1] - log_z[:, None, None])
        occ_label = np.exp(alpha + lattice.log_label + beta[:, :T, 1:] - log_z[:, None, None])
        grad_blank = -g * occ_blank
        grad_label = -g * occ_label[:, :, :U1 - 1]
        if fastemit_lambda:
            grad_label = grad_label * (1.0 + fastemit_lambda)
        return (grad_blank.astype(lp_blank.dtype), grad_label.astype(lp_label.dtype))

    return Tensor.from_op(-log_z, (lp_blank, lp_label), backward)


def lattice_from_logits(logits, targets):
    """(log_p_blank, log_p_next_label) from (B, T, U+1, V+1) joint logits."""
    log_p_blank, log_p_labels = hat_logprobs(logits)
    B, T, U1, _ = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if U1 > 1:
        index = np.broadcast_to(targets[:, None, :U1 - 1], (B, T, U1 - 1))
        lp_label = ops.gather_last(log_p_labels[:, :, :U1 - 1, :], index)
    else:
        lp_label = Tensor(np.zeros((B, T, 0), dtype=logits.dtype))
    return log_p_blank, lp_label


def transducer_loss(enc, frame_lengths, targets, target_lengths, params, config,
                    fastemit_lambda=None, reduce=True):
    """Mean (or per-utterance) transducer NLL of ``targets`` given encodings ``enc``.

    ``enc`` is (B, T, d); ``targets`` is (B, U_max) padded.
    """
    if fastemit_lambda is None:
        fastemit_lambda = config.fastemit_lambda
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= config.vocab_size):
        raise ContractError("target tokens must lie in [0, V)")
    prev1, prev2 = history_indices(targets, target_lengths, config.vocab_size)
    pred = prediction_forward(params, prev1, prev2, config.vocab_size, config.ln_eps)
    enc_proj = project_encoder(params, enc)                    # (B, T, j)
    pred_proj = project_prediction(params, pred)               # (B, U+1, j)
    B, T, j = enc_proj.shape
    U1 = pred_proj.shape[1]
    logits = joint_logits(params, enc_proj.reshape(B, T, 1, j), pred_proj.reshape(B, 1, U1, j))
    lp_blank, lp_label = lattice_from_logits(logits, targets)
    nll = lattice_nll(lp_blank, lp_label, frame_lengths, target_lengths, fastemit_lambda)
    if not np.all(np.isfinite(nll.data)):
        raise TrainingError("non-finite transducer loss")
    return nll.mean() if reduce else nll
