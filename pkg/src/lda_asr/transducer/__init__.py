"""Prediction network, HAT joint, transducer loss and decoding."""

from .decoding import Hypothesis, JointScorer, beam_decode, beam_search, greedy_decode, greedy_search
from .loss import LossLattice, forward_backward, lattice_from_logits, lattice_nll, transducer_loss
from .network import (
    decoder_param_count,
    hat_logprobs,
    history_indices,
    init_decoder,
    joint_hat,
    joint_logits,
    prediction_forward,
    project_encoder,
    project_prediction,
)

__all__ = [
    "Hypothesis", "JointScorer", "LossLattice", "beam_decode", "beam_search", "decoder_param_count",
    "forward_backward", "greedy_decode", "greedy_search", "hat_logprobs", "history_indices",
    "init_decoder", "joint_hat", "joint_logits", "lattice_from_logits", "lattice_nll",
    "prediction_forward", "project_encoder", "project_prediction", "transducer_loss",
]
