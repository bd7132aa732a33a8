import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lda_asr.checkpoints import Checkpoint
from lda_asr.config import RunConfig
from lda_asr.errors import ConfigError, ContractError, LanguageRangeError
from lda_asr.estimators import (CascadedTransducer, FullFinetuner, LDAFinetuner, NoisyStudentTrainer,
                                as_model, check_targets, check_utterances, resolve_config)
from lda_asr.frontend import Utterance
from lda_asr.harness.data import build_corpus
from lda_asr.model import TransducerModel

TINY = RunConfig(raw_dim=4, stack_factor=2, model_dim=16, num_heads=2, ffn_mult=2, conv_kernel=3,
                 causal_layers=1, noncausal_layers=1, max_frames=64, num_languages=2, adapter_hidden=4,
                 vocab_size=6, embed_dim=8, joint_dim=8, head_languages=1, head_supervised=6,
                 tail_supervised=3, unlabeled_count=4, test_count=2, batch_size=4, warmup_steps=5,
                 backbone_steps=3, finetune_steps=3, student_steps=2, nst_iterations=2, beam_width=2)


@pytest.fixture(scope="module")
def corpus():
    return build_corpus(TINY)


@pytest.fixture(scope="module")
def backbone(corpus):
    return CascadedTransducer(TINY, seed=0).fit(corpus.supervised)


def test_params_round_trip():
    est = LDAFinetuner(steps=7, seed=4)
    assert est.get_params() == {"backbone": None, "steps": 7, "seed": 4}
    est.set_params(steps=9)
    assert clone(est).get_params()["steps"] == 9


def test_unfitted_predict_raises(corpus):
    with pytest.raises(NotFittedError):
        CascadedTransducer(TINY).predict(corpus.test)


def test_backbone_fit_predict_score(backbone, corpus):
    hyps = backbone.predict(corpus.test)
    assert len(hyps) == len(corpus.test)
    assert all(isinstance(h, tuple) for h in hyps)
    assert backbone.score(corpus.test) <= 1.0
    assert backbone.n_steps_ == TINY.backbone_steps


def test_lda_finetuner_accepts_any_backbone_source(backbone, corpus):
    a = LDAFinetuner(backbone).fit(corpus.supervised)
    b = LDAFinetuner(backbone.to_checkpoint()).fit(corpus.supervised)
    assert a.predict(corpus.test) == b.predict(corpus.test)
    for name in backbone.model_.backbone_names:
        assert a.model_.params[name].data.tobytes() == backbone.model_.params[name].data.tobytes()


def test_full_finetuner_routes_by_language(backbone, corpus):
    est = FullFinetuner(backbone, steps=2).fit(corpus.supervised)
    assert sorted(est.models_) == [0, 1]
    assert len(est.predict(corpus.test)) == len(corpus.test)


def test_noisy_student(backbone, corpus):
    est = NoisyStudentTrainer(backbone, iterations=2).fit(corpus.supervised, unlabeled=corpus.unlabeled)
    assert [r.student_kind for r in est.ledger_.records] == ["full", "lda"]
    with pytest.raises(ContractError):
        NoisyStudentTrainer(backbone).fit(corpus.supervised)


def test_y_overrides_transcripts(backbone, corpus):
    X = corpus.test[:2]
    y = [(1, 2), (3,)]
    attached = check_targets(X, y, TINY)
    assert [u.transcript for u in attached] == y
    assert backbone.score(X, y) == backbone.score(attached)


def test_validation_helpers():
    utt = Utterance(np.zeros((4, 4)), 0, (1,), True, "u")
    with pytest.raises(ContractError):
        check_utterances([])
    with pytest.raises(ContractError):
        check_utterances(utt)
    with pytest.raises(ContractError):
        check_utterances([np.zeros((4, 4))])
    with pytest.raises(ContractError):
        check_utterances([utt], labeled=False)
    with pytest.raises(LanguageRangeError):
        check_utterances([Utterance(np.zeros((4, 4)), 3, (1,), True, "far")], TINY)
    with pytest.raises(ContractError):
        check_targets([utt], [(1,), (2,)], TINY)
    with pytest.raises(ContractError):
        check_targets([utt], [(9,)], TINY)
    with pytest.raises(ContractError):
        check_targets([utt], [()], TINY)
    with pytest.raises(ConfigError):
        resolve_config("nope")
    assert resolve_config({"vocab_size": 7}).vocab_size == 7
    with pytest.raises(ContractError):
        as_model(42)
    model = TransducerModel.initialize(TINY, 0)
    assert as_model(model) is model
    assert as_model(Checkpoint.from_model(model)).config == TINY
