"""Command-line entry point: one pipeline stage per invocation.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 merge refused.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..checkpoints import Checkpoint, load_checkpoint, merge_adapters, save_checkpoint, zero_adapter
from ..config import RunConfig
from ..errors import CheckpointError, ConfigError, DataError, LanguageRangeError, MergeError
from ..model import TransducerModel
from ..nst import run_nst
from .data import build_corpus, load_corpus, save_corpus
from .evaluation import EvalReport, evaluate_model, report_werr
from .training import finetune_full, finetune_lda, train_backbone

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_MERGE = 0, 2, 3, 4


def _config(args):
    overrides = {"seed": args.seed} if args.seed is not None else {}
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig(**overrides)


def _out(args):
    if not args.out:
        raise ConfigError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _single_checkpoint(args):
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for this command")
    return load_checkpoint(args.checkpoint[0])


def _data(args):
    if not args.data:
        raise ConfigError("--data is required for this command")
    return load_corpus(args.data)


def cmd_gen_data(args):
    cfg = _config(args)
    root = save_corpus(build_corpus(cfg), _out(args))
    print(f"wrote corpus to {root}")


def cmd_train_backbone(args):
    cfg = _config(args)
    corpus = _data(args)
    model, _ = train_backbone(TransducerModel.initialize(cfg), corpus.supervised, cfg)
    path = save_checkpoint(Checkpoint.from_model(model, cfg.backbone_steps, kind="backbone"),
                           _out(args) / "backbone.ldac")
    print(path)


def cmd_finetune_lda(args):
    cfg = _config(args)
    base = _single_checkpoint(args).to_model()
    corpus = _data(args)
    out = _out(args)

    def save(step, model):
        print(save_checkpoint(Checkpoint.from_model(model, step, kind="lda"), out / f"lda_step{step:06d}.ldac"))

    finetune_lda(base, corpus.supervised, cfg, every=cfg.eval_every, on_checkpoint=save)


def cmd_finetune_full(args):
    cfg = _config(args)
    base = _single_checkpoint(args).to_model()
    out = _out(args)
    for k, model in finetune_full(base, _data(args).supervised, cfg).items():
        print(save_checkpoint(Checkpoint.from_model(model, cfg.finetune_steps, kind="full", language=k),
                              out / f"full_lang{k}.ldac"))


def cmd_nst_run(args):
    cfg = _config(args)
    base = _single_checkpoint(args).to_model()
    corpus = _data(args)
    out = _out(args)
    final, ledger = run_nst(corpus.supervised, corpus.unlabeled, cfg, base, dev=corpus.test)
    (out / "nst_ledger.tsv").write_text(ledger.to_text(), encoding="utf-8")
    print(save_checkpoint(Checkpoint.from_model(final, cfg.finetune_steps, kind="nst"), out / "nst_final.ldac"))
    sys.stdout.write(ledger.to_text())


def cmd_merge_adapters(args):
    if not args.checkpoint:
        raise ConfigError("merge-adapters needs --checkpoint/--lang pairs")
    if len(args.lang) != len(args.checkpoint):
        raise ConfigError("every --checkpoint must be paired with one --lang")
    base = load_checkpoint(args.base) if args.base else load_checkpoint(args.checkpoint[0])
    pairs = [(lang, load_checkpoint(path)) for path, lang in zip(args.checkpoint, args.lang)]
    merged = merge_adapters(pairs, base)
    print(save_checkpoint(merged, _out(args) / "merged.ldac"))


def cmd_zero_adapter(args):
    if len(args.lang) != 1:
        raise ConfigError("zero-adapter needs exactly one --lang")
    ckpt = zero_adapter(_single_checkpoint(args), args.lang[0])
    print(save_checkpoint(ckpt, _out(args) / f"zeroed_lang{args.lang[0]}.ldac"))


def cmd_evaluate(args):
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for this command")
    test = _data(args).test
    texts = []
    for i, path in enumerate(args.checkpoint):
        ckpt = load_checkpoint(path)
        report = evaluate_model(ckpt.to_model(), test, step=ckpt.step, model_id=Path(path).stem)
        texts.append(report.to_text() if i == 0 else report.to_text().split("\n", 1)[1])
    text = "".join(texts)
    if args.out:
        (_out(args) / "eval.tsv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def read_eval_table(path):
    """Parse a table written by ``evaluate`` back into one report (first model listed)."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None
    if not lines or not lines[0].startswith("model\t"):
        raise DataError(f"{path}: not an evaluation table")
    table = {"first": {}, "second": {}}
    first_model = None
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split("\t")
        if len(parts) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 fields")
        model_id, _, lang, w1, w2 = parts
        first_model = model_id if first_model is None else first_model
        if model_id != first_model:
            continue
        table["first"][int(lang)] = float(w1)
        table["second"][int(lang)] = float(w2)
    return EvalReport(table, model_id=first_model or "")


def cmd_report(args):
    if not (args.baseline and args.candidate):
        raise ConfigError("report needs --baseline and --candidate tables")
    result = report_werr(read_eval_table(args.baseline), read_eval_table(args.candidate), args.pass_name)
    sys.stdout.write(result.to_text())


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-backbone": cmd_train_backbone,
    "finetune-lda": cmd_finetune_lda,
    "finetune-full": cmd_finetune_full,
    "nst-run": cmd_nst_run,
    "merge-adapters": cmd_merge_adapters,
    "zero-adapter": cmd_zero_adapter,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="lda-asr", description="Language-dependent adapter ASR pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value run configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint", action="append", default=[], help="checkpoint path (repeatable)")
        p.add_argument("--lang", action="append", type=int, default=[], help="language paired with --checkpoint")
        p.add_argument("--data", help="corpus directory written by gen-data")
        p.add_argument("--base", help="base checkpoint for merge-adapters")
        p.add_argument("--baseline", help="baseline evaluation table for report")
        p.add_argument("--candidate", help="candidate evaluation table for report")
        p.add_argument("--pass", dest="pass_name", default="second", choices=("first", "second"))
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        COMMANDS[args.command](args)
    except MergeError as exc:
        print(f"merge refused: {exc}", file=sys.stderr)
        return EXIT_MERGE
    except (ConfigError, LanguageRangeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
