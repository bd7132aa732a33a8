"""Noisy student training: n-gram LM, fused teacher transcription, score filtering, the iteration loop."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, TrainingError


class NGramLM:
    """Add-k smoothed n-gram model over V tokens plus an end marker.

    Histories are left-padded with a start symbol, so every sentence has
    exactly ``order - 1`` tokens of context. A context never seen in training
    falls back to the uniform distribution.
    """

    START = -1

    def __init__(self, order, smoothing, vocab_size):
        if order < 1:
            raise ConfigError("n-gram order must be >= 1")
        if smoothing < 0:
            raise ConfigError("smoothing must be >= 0")
        self.order = order
        self.smoothing = float(smoothing)
        self.vocab_size = vocab_size
        self.counts = defaultdict(lambda: np.zeros(vocab_size + 1, dtype=np.float64))

    @property
    def end(self):
        return self.vocab_size

    def context(self, history):
        if self.order == 1:
            return ()
        padded = (self.START,) * (self.order - 1) + tuple(history)
        return padded[-(self.order - 1):]

    def add(self, tokens):
        tokens = tuple(int(t) for t in tokens)
        if any(t < 0 or t >= self.vocab_size for t in tokens):
            raise ContractError(f"LM tokens must lie in [0, {self.vocab_size})")
        for i, tok in enumerate(tokens + (self.end,)):
            self.counts[self.context(tokens[:i])][tok] += 1.0

    def distribution(self, history):
        """Conditional probabilities over the V tokens and the end marker (index V)."""
        ctx = self.context(history)
        counts = self.counts.get(ctx)
        size = self.vocab_size + 1
        if counts is None or (counts.sum() == 0 and self.smoothing == 0):
            return np.full(size, 1.0 / size)
        return (counts + self.smoothing) / (counts.sum() + self.smoothing * size)

    def log_prob(self, history, token):
        p = self.distribution(history)[token]
        return math.log(p) if p > 0 else -math.inf

    def end_log_prob(self, history):
        return self.log_prob(history, self.end)

    def sequence_log_prob(self, tokens, include_end=True):
        tokens = tuple(tokens)
        total = sum(self.log_prob(tokens[:i], t) for i, t in enumerate(tokens))
        return total + (self.end_log_prob(tokens) if include_end else 0.0)


def train_ngram_lm(transcripts, order=3, smoothing=0.1, vocab_size=32):
    transcripts = [t for t in transcripts]
    if not transcripts:
        raise ConfigError("cannot train an LM on an empty corpus")
    lm = NGramLM(order, smoothing, vocab_size)
    for tokens in transcripts:
        lm.add(tokens)
    return lm


def fused_score(am_logprob, lm_logprob, lm_weight):
    return am_logprob + lm_weight * lm_logprob


@dataclass(frozen=True)
class PseudoLabel:
    utt_id: str
    language_id: int
    tokens: tuple
    score: float          # fused log-prob / max(1, token count)
    fused_total: float
    iteration: int = 0


def normalized_score(fused_total, num_tokens):
    return fused_total / max(1, num_tokens)


def transcribe_unlabeled(teacher, utterances, lm, config, iteration=0, use_adapters=True):
    """LM-fused beam transcription with the teacher's non-causal pass."""
    labels = []
    for utt in utterances:
        if utt.supervised or len(utt.transcript):
            raise ContractError(f"utterance {utt.utt_id} is labeled; only unlabeled data is transcribed")
        hyps = teacher.decode(utt, pass_name="second", use_adapters=use_adapters,
                              beam_width=config.beam_width, lm=lm, lm_weight=config.lm_weight)
        best = hyps[0]
        if not math.isfinite(best.score):
            raise TrainingError(f"non-finite teacher score on {utt.utt_id}", iteration=iteration)
        labels.append(PseudoLabel(utt.utt_id, utt.language_id, best.tokens,
                                  normalized_score(best.score, len(best.tokens)), best.score, iteration))
    return labels


def filter_transcripts(labels, keep_fraction, per_language=True):
    """Keep the ceil(fraction * n) best-scoring labels, per language when asked.

    Ties go to the smaller utterance id. Output order is score-descending
    within each language, languages ascending.
    """
    if not 0 < keep_fraction <= 1:
        raise ConfigError("keep_fraction must lie in (0, 1]")
    groups = defaultdict(list)
    for label in labels:
        groups[label.language_id if per_language else 0].append(label)
    kept = []
    for key in sorted(groups):
        group = sorted(groups[key], key=lambda lab: (-lab.score, lab.utt_id))
        kept.extend(group[:math.ceil(keep_fraction * len(group))])
    return kept


@dataclass
class IterationRecord:
    iteration: int
    student_kind: str
    kept: dict                 # language -> kept pseudo-label count
    train_size: int
    wer: dict                  # language -> cascaded-pass WER on the dev split


@dataclass
class NSTLedger:
    records: list = field(default_factory=list)

    def to_text(self):
        lines = ["iteration\tstudent\ttrain_size\tkept\twer"]
        for r in self.records:
            kept = ",".join(f"{k}:{v}" for k, v in sorted(r.kept.items()))
            wer = ",".join(f"{k}:{v:.4f}" for k, v in sorted(r.wer.items()))
            lines.append(f"{r.iteration}\t{r.student_kind}\t{r.train_size}\t{kept}\t{wer}")
        return "\n".join(lines) + "\n"


def student_kind(iteration, iterations):
    return "lda" if iteration == iterations else "full"


def run_nst(supervised, unlabeled, config, backbone_model, dev=None, teacher=None, progress=None):
    """Teacher -> student loop; the last student is an LDA model over ``backbone_model``.

    ``teacher`` is the iteration-0 teacher (trained on supervised data only);
    when omitted the backbone itself is used, without adapters. Students
    1 .. n-1 start from the backbone and train every parameter with adapters
    on; student n trains only the adapter slices of a frozen copy of the
    backbone. Returns ``(final_model, ledger)``.
    """
    from .harness.evaluation import evaluate_model
    from .harness.training import finetune

    if config.nst_iterations < 1:
        raise ConfigError("nst_iterations must be >= 1")
    lm = train_ngram_lm([u.transcript for u in supervised], config.lm_order, config.lm_smoothing,
                        config.vocab_size)
    by_id = {u.utt_id: u for u in unlabeled}
    teacher_uses_adapters = teacher is not None
    teacher = backbone_model if teacher is None else teacher
    ledger = NSTLedger()
    student = None
    for it in range(1, config.nst_iterations + 1):
        labels = transcribe_unlabeled(teacher, unlabeled, lm, config, iteration=it - 1,
                                      use_adapters=teacher_uses_adapters)
        kept = filter_transcripts(labels, config.keep_fraction, config.per_language_filter)
        # an empty hypothesis carries no supervision for the transducer
        pseudo = [by_id[lab.utt_id].with_transcript(lab.tokens) for lab in kept if lab.tokens]
        train_set = list(supervised) + pseudo
        kind = student_kind(it, config.nst_iterations)
        student = backbone_model.copy()
        names = student.adapter_names if kind == "lda" else student.adapter_names + student.backbone_names
        steps = config.finetune_steps if kind == "lda" else config.student_steps
        try:
            student, _ = finetune(student, train_set, names, steps, config, seed=config.seed + 100 * it)
        except TrainingError as exc:
            raise TrainingError(f"iteration {it} diverged: {exc}", iteration=it) from None
        counts = defaultdict(int)
        for lab in kept:
            counts[lab.language_id] += 1
        wer = {}
        if dev is not None:
            wer = {k: v for k, v in evaluate_model(student, dev).wer["second"].items()}
        ledger.records.append(IterationRecord(it, kind, dict(counts), len(train_set), wer))
        if progress is not None:
            progress(ledger.records[-1])
        teacher, teacher_uses_adapters = student, True
    return student, ledger
