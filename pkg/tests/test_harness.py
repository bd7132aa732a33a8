import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lda_asr.checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from lda_asr.config import RunConfig
from lda_asr.errors import ContractError, LanguageRangeError
from lda_asr.frontend import Utterance
from lda_asr.harness import cli
from lda_asr.harness.data import build_corpus, load_corpus, save_corpus
from lda_asr.harness.evaluation import (EvalReport, edit_distance, evaluate_model, report_werr,
                                        select_peak_checkpoints, wer)
from lda_asr.harness.training import finetune_full, finetune_lda, train_backbone
from lda_asr.model import TransducerModel
from lda_asr.transducer import Hypothesis

TINY = RunConfig(raw_dim=4, stack_factor=2, model_dim=16, num_heads=2, ffn_mult=2, conv_kernel=3,
                 causal_layers=1, noncausal_layers=1, max_frames=64, num_languages=2, adapter_hidden=4,
                 vocab_size=6, embed_dim=8, joint_dim=8, head_languages=1, head_supervised=6,
                 tail_supervised=3, unlabeled_count=4, test_count=2, batch_size=4, warmup_steps=5,
                 backbone_steps=3, finetune_steps=4, student_steps=2, nst_iterations=2, beam_width=2,
                 eval_every=2)

a, b, c, d, x, y = range(6)

# (reference, hypothesis, edit distance), each worked out by hand
WER_CASES = [
    ((a, b, c), (a, b, c), 0),
    ((a, b, c), (a, x, c), 1),
    ((a,), (), 1),
    ((), (), 0),
    ((), (a, b), 2),
    ((a, b), (), 2),
    ((a, b, c), (b, c), 1),
    ((a, b, c), (a, b), 1),
    ((a, b, c), (a, b, c, d), 1),
    ((a, b, c), (x, a, b, c), 1),
    ((a, b, c), (c, b, a), 2),
    ((a, b), (b, a), 2),
    ((a, b, c, d), (a, c, d), 1),
    ((a, b, c, d), (x, y, x, y), 4),
    ((a, a, a), (a,), 2),
    ((a,), (a, a, a), 2),
    ((a, b, a, b), (b, a, b, a), 2),
    ((a, b, c, d), (a, x, c, y), 2),
    ((a, b, c), (x, y), 3),
    ((a, b, c, d, x), (b, c, d, x, a), 2),
]


@pytest.mark.parametrize("ref,hyp,dist", WER_CASES)
def test_wer_hand_cases(ref, hyp, dist):
    assert edit_distance(ref, hyp) == dist
    assert wer(ref, hyp) == dist / max(1, len(ref))


def test_wer_named_examples():
    assert wer((a, b, c), (a, x, c)) == 1 / 3
    assert wer((a,), ()) == 1.0
    assert wer((a,), (a, x, y, x)) == 3.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=6), st.lists(st.integers(0, 3), max_size=6),
       st.lists(st.integers(0, 3), max_size=6))
def test_edit_distance_is_a_metric(p, q, r):
    assert edit_distance(p, q) == edit_distance(q, p)
    assert (edit_distance(p, q) == 0) == (p == q)
    assert edit_distance(p, r) <= edit_distance(p, q) + edit_distance(q, r)
    assert abs(len(p) - len(q)) <= edit_distance(p, q) <= max(len(p), len(q))


# --- evaluation -------------------------------------------------------------------

class ScriptedModel:
    """Returns fixed hypotheses; stands in for a trained model in evaluation tests."""

    def __init__(self, config, outputs=None):
        self.config = config
        self.outputs = outputs or {}

    def decode(self, utt, pass_name="second", use_adapters=True):
        tokens = self.outputs.get((utt.utt_id, pass_name), ())
        return Hypothesis(tuple(tokens), -1.0, -1.0, 0.0)


def eval_set():
    return [Utterance(np.zeros((4, 4)), k, (1, 2), True, f"t{k}{i}") for k in range(2) for i in range(2)]


def test_empty_hypotheses_give_wer_one():
    report = evaluate_model(ScriptedModel(TINY), eval_set())
    assert report.wer == {"first": {0: 1.0, 1: 1.0}, "second": {0: 1.0, 1: 1.0}}


def test_perfect_hypotheses_give_wer_zero_and_utterance_weighting():
    utts = eval_set()
    outputs = {(u.utt_id, p): u.reference for u in utts for p in ("first", "second")}
    outputs[("t00", "second")] = (1,)
    report = evaluate_model(ScriptedModel(TINY, outputs), utts, step=7, model_id="m")
    assert report.wer["first"] == {0: 0.0, 1: 0.0}
    assert report.wer["second"] == {0: 0.25, 1: 0.0}
    assert report.to_text().splitlines()[1] == "m\t7\t0\t0.000000\t0.250000"


def test_evaluation_errors():
    with pytest.raises(ContractError):
        evaluate_model(ScriptedModel(TINY), [])
    far = [Utterance(np.zeros((4, 4)), 5, (1,), True, "far")]
    with pytest.raises(LanguageRangeError):
        evaluate_model(ScriptedModel(TINY), far)


def test_real_model_evaluation_is_deterministic():
    model = TransducerModel.initialize(TINY, 0)
    corpus = build_corpus(TINY)
    r1 = evaluate_model(model, corpus.test)
    r2 = evaluate_model(model, corpus.test)
    assert r1.wer == r2.wer and r1.scores == r2.scores
    assert set(r1.languages) == {0, 1}


# --- peaks and relative reductions ---------------------------------------------------

def report(step, second, first=None):
    return EvalReport({"first": first or dict(second), "second": second}, step)


def test_peaks_per_language():
    reps = [report(100, {0: 0.1, 1: 0.5}), report(300, {0: 0.2, 1: 0.3}), report(200, {0: 0.15, 1: 0.4})]
    assert select_peak_checkpoints(reps) == {0: (100, 0.1), 1: (300, 0.3)}


def test_peaks_single_and_ties():
    assert select_peak_checkpoints([report(5, {0: 0.2, 1: 0.3})]) == {0: (5, 0.2), 1: (5, 0.3)}
    tied = [report(300, {0: 0.2}), report(100, {0: 0.2})]
    assert select_peak_checkpoints(tied) == {0: (100, 0.2)}
    with pytest.raises(ContractError):
        select_peak_checkpoints([])


def test_peaks_use_cascaded_pass():
    reps = [report(1, {0: 0.3}, first={0: 0.0}), report(2, {0: 0.2}, first={0: 0.9})]
    assert select_peak_checkpoints(reps) == {0: (2, 0.2)}


def test_werr_examples():
    r = report_werr(report(0, {0: 0.16, 1: 0.08}), report(0, {0: 0.14, 1: 0.05}))
    assert r.per_language[0] == pytest.approx(0.125)
    assert r.per_language[1] == pytest.approx(0.375)
    assert r.average == pytest.approx(0.25)
    same = report_werr(report(0, {0: 0.3, 1: 0.2}), report(0, {0: 0.3, 1: 0.2}))
    assert same.per_language == {0: 0.0, 1: 0.0} and same.average == 0.0


def test_werr_regressions_not_clipped_and_zero_base_undefined():
    r = report_werr(report(0, {0: 0.1, 1: 0.0, 2: 0.2}), report(0, {0: 0.2, 1: 0.1, 2: 0.1}))
    assert r.per_language[0] == pytest.approx(-1.0)
    assert r.per_language[1] is None
    assert r.average == pytest.approx(-0.25)
    assert "undefined" in r.to_text()
    with pytest.raises(ContractError):
        report_werr(report(0, {0: 0.1}), report(0, {1: 0.1}))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 2), st.floats(0.01, 2)), min_size=1, max_size=5))
def test_werr_swap_flips_sign(pairs):
    base = {k: p for k, (p, _) in enumerate(pairs)}
    cand = {k: q for k, (_, q) in enumerate(pairs)}
    fwd = report_werr(report(0, base), report(0, cand)).per_language
    back = report_werr(report(0, cand), report(0, base)).per_language
    for k in base:
        assert np.sign(fwd[k]) == -np.sign(back[k])


# --- training loops ------------------------------------------------------------------

def test_lda_training_touches_only_adapters():
    corpus = build_corpus(TINY)
    backbone, _ = train_backbone(TransducerModel.initialize(TINY, 0), corpus.supervised, TINY)
    seen = []
    lda, _ = finetune_lda(backbone, corpus.supervised, TINY, every=2, on_checkpoint=lambda s, m: seen.append(s))
    assert seen == [2, 4]
    for name in backbone.names:
        same = lda.params[name].data.tobytes() == backbone.params[name].data.tobytes()
        assert same == (name not in backbone.adapter_names)


def test_full_finetune_one_model_per_language():
    corpus = build_corpus(TINY)
    backbone = TransducerModel.initialize(TINY, 0)
    models = finetune_full(backbone, corpus.supervised, TINY, steps=2)
    assert sorted(models) == [0, 1]
    for model in models.values():
        assert model.config == TINY
        for name in backbone.adapter_names:
            assert model.params[name].data.tobytes() == backbone.params[name].data.tobytes()
        assert any(model.params[n].data.tobytes() != backbone.params[n].data.tobytes()
                   for n in backbone.backbone_names)


# --- command line --------------------------------------------------------------------

@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "run.cfg"
    cfg_path.write_text(TINY.to_text(), encoding="utf-8")
    assert cli.main(["gen-data", "--config", str(cfg_path), "--out", str(root / "data")]) == 0
    assert cli.main(["train-backbone", "--config", str(cfg_path), "--data", str(root / "data"),
                     "--out", str(root / "bb")]) == 0
    return root, cfg_path


def test_cli_pipeline(workspace, capsys):
    root, cfg = workspace
    bb = str(root / "bb" / "backbone.ldac")
    data = str(root / "data")
    assert cli.main(["finetune-lda", "--config", str(cfg), "--data", data, "--checkpoint", bb,
                     "--out", str(root / "lda")]) == 0
    steps = sorted(p.name for p in (root / "lda").iterdir())
    assert steps == ["lda_step000002.ldac", "lda_step000004.ldac"]
    s2, s4 = (str(root / "lda" / n) for n in steps)
    assert cli.main(["merge-adapters", "--checkpoint", s2, "--lang", "0", "--checkpoint", s4, "--lang", "1",
                     "--base", s4, "--out", str(root / "merged")]) == 0
    merged = str(root / "merged" / "merged.ldac")
    capsys.readouterr()
    assert cli.main(["evaluate", "--data", data, "--checkpoint", s2, "--out", str(root / "e2")]) == 0
    assert capsys.readouterr().out.startswith("model\tstep\tlanguage")
    assert cli.main(["evaluate", "--data", data, "--checkpoint", merged, "--out", str(root / "em")]) == 0
    assert cli.main(["report", "--baseline", str(root / "e2" / "eval.tsv"),
                     "--candidate", str(root / "em" / "eval.tsv")]) == 0
    out = capsys.readouterr().out
    # language 0 of the merge comes from the step-2 checkpoint: no change there
    assert "0\t0.00%" in out or "0\tundefined" in out
    assert cli.main(["zero-adapter", "--checkpoint", s4, "--lang", "1", "--out", str(root / "z")]) == 0
    zeroed = load_checkpoint(root / "z" / "zeroed_lang1.ldac")
    assert zeroed.fingerprint == load_checkpoint(s4).fingerprint


def test_cli_foreign_merge_exits_4(workspace, tmp_path):
    root, cfg = workspace
    bb = root / "bb" / "backbone.ldac"
    other = Checkpoint.from_model(TransducerModel.initialize(TINY, 99))
    other_path = save_checkpoint(other, tmp_path / "other.ldac")
    code = cli.main(["merge-adapters", "--checkpoint", str(other_path), "--lang", "0", "--base", str(bb),
                     "--out", str(tmp_path)])
    assert code == 4


def test_cli_exit_codes(workspace, tmp_path):
    root, cfg = workspace
    data = str(root / "data")
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("no_such_key = 3\n", encoding="utf-8")
    assert cli.main(["gen-data", "--config", str(bad_cfg), "--out", str(tmp_path)]) == 2
    assert cli.main(["not-a-command"]) == 2
    assert cli.main(["evaluate", "--data", data]) == 2
    assert cli.main(["zero-adapter", "--checkpoint", str(root / "bb" / "backbone.ldac"), "--lang", "9",
                     "--out", str(tmp_path)]) == 2
    junk = tmp_path / "junk.ldac"
    junk.write_bytes(b"nope")
    assert cli.main(["evaluate", "--data", data, "--checkpoint", str(junk)]) == 3
    assert cli.main(["evaluate", "--data", str(tmp_path / "missing"),
                     "--checkpoint", str(root / "bb" / "backbone.ldac")]) == 3
    assert cli.main(["report", "--baseline", str(junk), "--candidate", str(junk)]) == 3


def test_corpus_round_trip(tmp_path):
    corpus = build_corpus(TINY)
    back = load_corpus(save_corpus(corpus, tmp_path))
    for split in ("supervised", "unlabeled", "test"):
        ours, theirs = getattr(corpus, split), getattr(back, split)
        assert [u.utt_id for u in ours] == [u.utt_id for u in theirs]
        assert all(np.array_equal(p.features, q.features) for p, q in zip(ours, theirs))
        # unlabeled records carry no transcript on disk, so the hidden reference stays in memory only
        expected = [() if split == "unlabeled" else u.reference for u in ours]
        assert [u.reference for u in theirs] == expected
