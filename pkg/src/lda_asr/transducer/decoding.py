"""Frame-synchronous greedy and beam search over HAT log-probabilities.

Both searches talk to the model through a *scorer*: a callable
``scorer(t, tokens) -> (log_p_blank, log_p_labels)`` for frame ``t`` and the
non-blank tokens emitted so far. :class:`JointScorer` wraps a trained
prediction/joint network; tests may pass any other callable.

At most ``max_symbols_per_frame`` labels are emitted per frame. A path that
reaches the cap advances to the next frame without a blank term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..numerics import Tensor, no_grad
from .network import hat_logprobs, joint_logits, prediction_forward, project_encoder, \
    project_prediction


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    score: float          # am_score + lm_weight * lm_score
    am_score: float
    lm_score: float = 0.0


class JointScorer:
    """HAT scores for one utterance's encoder output, with per-history caching."""

    def __init__(self, enc_sequence, params, eps=1e-5):
        enc = enc_sequence.data if isinstance(enc_sequence, Tensor) else np.asarray(enc_sequence)
        if enc.ndim != 2:
            raise ContractError(f"expected a (T, d) encoder sequence, got {enc.shape}")
        self.params = params
        self.vocab_size = params["joint/out_b"].shape[0] - 1
        self.eps = eps
        with no_grad():
            self.enc_proj = project_encoder(params, Tensor(enc)).data
        self.num_frames = self.enc_proj.shape[0]
        self._pred = {}
        self._cache = {}

    def _prediction(self, key):
        if key not in self._pred:
            with no_grad():
                pred = prediction_forward(self.params, np.array([key[0]]), np.array([key[1]]),
                                          self.vocab_size, self.eps)
                self._pred[key] = project_prediction(self.params, pred).data[0]
        return self._pred[key]

    def __call__(self, t, tokens):
        V = self.vocab_size
        key = (tokens[-1] if len(tokens) >= 1 else V, tokens[-2] if len(tokens) >= 2 else V)
        if (t, key) not in self._cache:
            with no_grad():
                logits = joint_logits(self.params, Tensor(self.enc_proj[t]), Tensor(self._prediction(key)))
                log_blank, log_labels = hat_logprobs(logits)
            self._cache[(t, key)] = (float(log_blank.data.reshape(-1)[0]),
                                    log_labels.data.reshape(-1).astype(np.float64))
        return self._cache[(t, key)]


def _lm_step(lm, tokens, token):
    return 0.0 if lm is None else float(lm.log_prob(tokens, token))


def _lm_end(lm, tokens):
    return 0.0 if lm is None or not hasattr(lm, "end_log_prob") else float(lm.end_log_prob(tokens))


def greedy_search(num_frames, scorer, max_symbols_per_frame=3):
    """Emit the arg-max symbol until blank wins (ties go to blank) or the cap is hit."""
    if max_symbols_per_frame < 1:
        raise ContractError("max_symbols_per_frame must be >= 1")
    tokens, score = [], 0.0
    for t in range(num_frames):
        for _ in range(max_symbols_per_frame):
            log_blank, log_labels = scorer(t, tuple(tokens))
            best = int(np.argmax(log_labels))
            if log_blank >= log_labels[best]:
                score += log_blank
                break
            tokens.append(best)
            score += float(log_labels[best])
    return Hypothesis(tuple(tokens), score, score, 0.0)


@dataclass
class _Path:
    tokens: tuple
    am: float
    lm: float
    fused: float = field(init=False)
    weight: float = 0.0

    def __post_init__(self):
        self.fused = self.am + self.weight * self.lm


def beam_search(num_frames, scorer, beam_width=4, lm=None, lm_weight=0.0, max_symbols_per_frame=3):
    """Frame-synchronous beam search with optional shallow fusion.

    Paths that finish a frame with the same token sequence are merged by
    summing their acoustic probabilities. Candidates are ranked by fused
    score with a stable sort (finished paths first, then labels by index), so
    a width-1 search without an LM reproduces :func:`greedy_search`.
    """
    if beam_width < 1:
        raise ContractError("beam_width must be >= 1")
    if max_symbols_per_frame < 1:
        raise ContractError("max_symbols_per_frame must be >= 1")
    w = float(lm_weight)
    finished = {(): _Path((), 0.0, 0.0, w)}
    for t in range(num_frames):
        active, finished = list(finished.values()), {}
        for s in range(max_symbols_per_frame + 1):
            if not active:
                break
            done = dict(finished)
            labels = []
            for path in active:
                if s == max_symbols_per_frame:
                    _merge(done, _Path(path.tokens, path.am, path.lm, w))
                    continue
                log_blank, log_labels = scorer(t, path.tokens)
                _merge(done, _Path(path.tokens, path.am + log_blank, path.lm, w))
                lm_steps = np.array([_lm_step(lm, path.tokens, k) for k in range(len(log_labels))]) \
                    if lm is not None and w else np.zeros(len(log_labels))
                fused = log_labels + w * lm_steps
                for k in np.argsort(-fused, kind="stable")[:beam_width]:
                    labels.append(_Path(path.tokens + (int(k),), path.am + float(log_labels[k]),
                                        path.lm + float(lm_steps[k]), w))
            pool = list(done.values()) + labels
            order = sorted(range(len(pool)), key=lambda i: -pool[i].fused)[:beam_width]
            kept = [pool[i] for i in sorted(order)]
            finished = {p.tokens: p for p in kept if p.tokens in done and done[p.tokens] is p}
            active = [p for p in kept if not (p.tokens in done and done[p.tokens] is p)]
    results = []
    for path in finished.values():
        lm_total = path.lm + (_lm_end(lm, path.tokens) if lm is not None and w else 0.0)
        results.append(Hypothesis(path.tokens, path.am + w * lm_total, path.am, lm_total))
    results.sort(key=lambda h: (-h.score, h.tokens))
    return results


def _merge(table, path):
    old = table.get(path.tokens)
    if old is None:
        table[path.tokens] = path
    else:
        table[path.tokens] = _Path(path.tokens, float(np.logaddexp(old.am, path.am)), path.lm, path.weight)


def greedy_decode(enc_sequence, params, max_symbols_per_frame=3, eps=1e-5):
    scorer = JointScorer(enc_sequence, params, eps)
    return greedy_search(scorer.num_frames, scorer, max_symbols_per_frame)


def beam_decode(enc_sequence, params, beam_width=4, lm=None, lm_weight=0.0, max_symbols_per_frame=3,
                eps=1e-5):
    scorer = JointScorer(enc_sequence, params, eps)
    return beam_search(scorer.num_frames, scorer, beam_width, lm, lm_weight, max_symbols_per_frame)
