"""WER, per-language evaluation, peak-checkpoint selection and relative-WER reports."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, LanguageRangeError

PASSES = ("first", "second")


def edit_distance(ref, hyp):
    ref, hyp = list(ref), list(hyp)
    prev = np.arange(len(hyp) + 1)
    for i, r in enumerate(ref, 1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return int(prev[-1])


def wer(reference, hypothesis):
    """Unit-cost edit distance over max(1, len(reference))."""
    return edit_distance(reference, hypothesis) / max(1, len(reference))


@dataclass
class EvalReport:
    wer: dict                       # pass -> {language: mean WER}
    step: int = 0
    model_id: str = ""
    scores: dict = field(default_factory=dict)   # pass -> {utt_id: decode score}
    hypotheses: dict = field(default_factory=dict)

    @property
    def languages(self):
        return sorted(self.wer["second"])

    def to_text(self):
        lines = ["model\tstep\tlanguage\tfirst_pass_wer\tsecond_pass_wer"]
        for k in self.languages:
            lines.append(f"{self.model_id}\t{self.step}\t{k}\t{self.wer['first'][k]:.6f}\t"
                         f"{self.wer['second'][k]:.6f}")
        return "\n".join(lines) + "\n"


def evaluate_model(model, utterances, step=0, model_id="", use_adapters=True, models_by_language=None):
    """Greedy-decode every utterance with each pass; utterance-weighted WER per language.

    Utterances are decoded one at a time so each result depends only on its
    own language's weights. ``models_by_language`` routes languages to
    separate models (the per-language full-finetune baseline).
    """
    utterances = list(utterances)
    if not utterances:
        raise ContractError("evaluation set is empty")
    totals = {p: defaultdict(list) for p in PASSES}
    scores = {p: {} for p in PASSES}
    hyps = {p: {} for p in PASSES}
    for utt in utterances:
        chosen = model if models_by_language is None else models_by_language.get(utt.language_id)
        if chosen is None or not 0 <= utt.language_id < chosen.config.num_languages:
            raise LanguageRangeError(f"language {utt.language_id} not covered by the model")
        for p in PASSES:
            hyp = chosen.decode(utt, pass_name=p, use_adapters=use_adapters)
            totals[p][utt.language_id].append(wer(utt.reference, hyp.tokens))
            scores[p][utt.utt_id] = hyp.score
            hyps[p][utt.utt_id] = hyp.tokens
    table = {p: {k: float(np.mean(v)) for k, v in sorted(totals[p].items())} for p in PASSES}
    return EvalReport(table, step, model_id, scores, hyps)


def select_peak_checkpoints(reports):
    """Per language, the step with the lowest second-pass WER (earliest step on ties)."""
    reports = list(reports)
    if not reports:
        raise ContractError("need at least one report")
    best = {}
    for rep in sorted(reports, key=lambda r: r.step):
        for k, value in rep.wer["second"].items():
            if k not in best or value < best[k][1]:
                best[k] = (rep.step, value)
    return best


@dataclass
class WERRReport:
    per_language: dict         # language -> relative reduction, or None when undefined
    average: float | None

    def to_text(self):
        lines = ["language\twerr"]
        for k, v in sorted(self.per_language.items()):
            lines.append(f"{k}\t{'undefined' if v is None else f'{100 * v:.2f}%'}")
        avg = "undefined" if self.average is None else f"{100 * self.average:.2f}%"
        lines.append(f"average\t{avg}")
        return "\n".join(lines) + "\n"


def report_werr(baseline, candidate, pass_name="second"):
    """(base - cand) / base per language and its macro average; zero bases are undefined."""
    base = baseline.wer[pass_name] if isinstance(baseline, EvalReport) else baseline
    cand = candidate.wer[pass_name] if isinstance(candidate, EvalReport) else candidate
    if set(base) != set(cand):
        raise ContractError("baseline and candidate cover different languages")
    per = {}
    for k in sorted(base):
        per[k] = None if base[k] == 0 else (base[k] - cand[k]) / base[k]
    defined = [v for v in per.values() if v is not None]
    return WERRReport(per, float(np.mean(defined)) if defined else None)
