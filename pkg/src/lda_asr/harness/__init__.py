"""CLI, evaluation, reporting and training loops."""

from .data import build_corpus, load_corpus, save_corpus
from .evaluation import EvalReport, WERRReport, edit_distance, evaluate_model, report_werr, \
    select_peak_checkpoints, wer
from .training import evaluation_copy, finetune, finetune_full, finetune_lda, train_backbone

__all__ = [
    "EvalReport", "WERRReport", "build_corpus", "edit_distance", "evaluate_model", "evaluation_copy",
    "finetune", "finetune_full", "finetune_lda", "load_corpus", "report_werr", "save_corpus",
    "select_peak_checkpoints", "train_backbone", "wer",
]
