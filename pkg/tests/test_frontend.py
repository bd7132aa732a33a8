import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lda_asr.errors import ConfigError, ContractError, DataError, DimensionError
from lda_asr.frontend import (
    LanguageSpec,
    Utterance,
    frame_stack,
    frame_unstack,
    generate_corpus,
    make_batch,
    make_language_specs,
    read_corpus,
    sample_indices,
    spec_augment,
    write_corpus,
)


def small_spec(k=0, noise=0.0, sup=4, unl=8, test=0):
    emission = np.arange(5 * 3, dtype=np.float32).reshape(5, 3) + 10 * k
    return LanguageSpec(k, emission, noise_scale=noise, supervised_count=sup,
                        unlabeled_count=unl, test_count=test)


def test_noiseless_single_token_reproduces_emission_mean():
    spec = small_spec()
    spec.min_tokens = spec.max_tokens = 1
    corpus = generate_corpus([spec], seed=3)
    for u in corpus.supervised:
        (tok,) = u.transcript
        assert np.array_equal(u.features, np.repeat(spec.emission[tok][None], u.num_frames, 0))


def test_noiseless_token_three():
    spec = small_spec()
    from lda_asr.frontend.synthetic import render_features
    feats = render_features(spec, [3], np.random.default_rng(0))
    assert np.array_equal(feats, np.tile(spec.emission[3], (feats.shape[0], 1)))


def test_same_seed_same_corpus():
    specs = make_language_specs(seed=1, head_supervised=5, tail_supervised=2,
                                unlabeled_count=3, test_count=2)
    a, b = generate_corpus(specs, seed=9), generate_corpus(specs, seed=9)
    for xs, ys in ((a.supervised, b.supervised), (a.unlabeled, b.unlabeled), (a.test, b.test)):
        assert len(xs) == len(ys)
        for x, y in zip(xs, ys):
            assert x.features.tobytes() == y.features.tobytes()
            assert x.transcript == y.transcript


def test_count_contract():
    corpus = generate_corpus([small_spec(sup=4, unl=8)], seed=0)
    assert len(corpus.supervised) == 4
    assert len(corpus.unlabeled) == 8
    assert all(not u.transcript and not u.supervised for u in corpus.unlabeled)
    assert all(u.transcript and u.supervised for u in corpus.supervised)


def test_duplicate_language_rejected():
    with pytest.raises(ConfigError):
        generate_corpus([small_spec(0), small_spec(0)], seed=0)


def test_tail_languages_smallest_supervised():
    specs = make_language_specs(head_supervised=40, tail_supervised=2)
    counts = [s.supervised_count for s in specs]
    assert counts[:2] == [40, 40] and counts[2:] == [2, 2]


def test_unlabeled_utterance_with_transcript_rejected():
    with pytest.raises(ContractError):
        Utterance(np.zeros((2, 3)), 0, (1,), supervised=False)


# -- frame stacking -----------------------------------------------------------


def test_frame_stack_shapes():
    assert frame_stack(np.ones((8, 128)), 4).shape == (2, 512)
    assert frame_stack(np.ones((4, 128)), 4).shape == (1, 512)


def test_frame_stack_zero_pads_partial_window():
    x = np.arange(5 * 128, dtype=np.float32).reshape(5, 128) + 1
    out = frame_stack(x, 4)
    assert out.shape == (2, 512)
    assert np.array_equal(out[0], x[:4].reshape(-1))
    assert np.array_equal(out[1, :128], x[4])
    assert np.all(out[1, 128:] == 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 6), st.integers(1, 5))
def test_unstack_recovers_frames_plus_padding(T, d, factor):
    x = np.random.default_rng(T * d).standard_normal((T, d)).astype(np.float32)
    back = frame_unstack(frame_stack(x, factor), factor)
    assert np.array_equal(back[:T], x)
    assert np.all(back[T:] == 0)


# -- SpecAugment ----------------------------------------------------------------


def test_spec_augment_zero_lengths_identity():
    x = np.random.default_rng(0).standard_normal((20, 16)).astype(np.float32)
    assert np.array_equal(spec_augment(x, 2, 0, 2, 0, seed=1), x)


def test_spec_augment_deterministic_and_masks():
    x = np.random.default_rng(0).standard_normal((200, 128)).astype(np.float32) + 5
    a = spec_augment(x, 2, 27, 2, 50, seed=4)
    b = spec_augment(x, 2, 27, 2, 50, seed=4)
    assert np.array_equal(a, b)
    changed = a != x
    assert np.all(a[changed] == 0)
    assert changed.any()


def test_spec_augment_full_scale_mask_bounds():
    x = np.ones((300, 128), dtype=np.float32)
    for seed in range(20):
        out = spec_augment(x, 2, 27, 0, 0, seed=seed)
        assert (out.sum(axis=0) == 0).sum() <= 2 * 27
        out = spec_augment(x, 0, 0, 2, 50, seed=seed)
        assert (out.sum(axis=1) == 0).sum() <= 2 * 50


def test_spec_augment_rejects_negative():
    with pytest.raises(ContractError):
        spec_augment(np.ones((3, 3)), -1, 1, 1, 1, seed=0)


# -- batches ----------------------------------------------------------------------


def utt(T, lang, tokens=(1,), d=3):
    return Utterance(np.ones((T, d)), lang, tokens, True, f"u{T}{lang}")


def test_onehot_rows():
    b = make_batch([utt(2, 0), utt(2, 2)], num_languages=4)
    assert np.array_equal(b.language_onehot, [[1, 0, 0, 0], [0, 0, 1, 0]])
    assert np.all(b.language_onehot.sum(axis=1) == 1)


def test_single_utterance_no_padding():
    u = utt(3, 1, (4, 5))
    b = make_batch([u], num_languages=2)
    assert b.stacked_features.shape == (1, 3, 3)
    assert np.array_equal(b.stacked_features[0], u.features)
    assert np.array_equal(b.targets, [[4, 5]])


def test_padding_to_batch_maximum():
    b = make_batch([utt(3, 0, (1,)), utt(5, 1, (1, 2, 3))], num_languages=2, pad_token=0)
    assert b.stacked_features.shape[1] == 5
    assert b.feature_lengths.tolist() == [3, 5]
    assert b.target_lengths.tolist() == [1, 3]
    assert np.all(b.stacked_features[0, 3:] == 0)


def test_make_batch_empty_and_mismatch():
    with pytest.raises(ContractError):
        make_batch([], num_languages=2)
    with pytest.raises(DimensionError):
        make_batch([utt(2, 0, d=3), utt(2, 0, d=4)], num_languages=2)


def test_language_sampling_uniform_over_languages():
    pool = [utt(2, 0) for _ in range(95)] + [utt(2, 1) for _ in range(5)]
    idx = sample_indices(pool, 4000, np.random.default_rng(0), sampling="language")
    frac_tail = np.mean([pool[i].language_id == 1 for i in idx])
    assert 0.45 < frac_tail < 0.55
    idx = sample_indices(pool, 4000, np.random.default_rng(0), sampling="utterance")
    assert np.mean([pool[i].language_id == 1 for i in idx]) < 0.1


# -- storage --------------------------------------------------------------------------


def test_corpus_roundtrip(tmp_path):
    corpus = generate_corpus([small_spec(0, noise=0.3), small_spec(1, noise=0.3)], seed=5)
    utts = corpus.supervised + corpus.unlabeled
    write_corpus(tmp_path, utts)
    back = read_corpus(tmp_path)
    assert [u.utt_id for u in back] == [u.utt_id for u in utts]
    for a, b in zip(utts, back):
        assert a.features.tobytes() == b.features.tobytes()
        assert a.transcript == b.transcript and a.supervised == b.supervised
        assert a.language_id == b.language_id


def test_record_layout_is_little_endian(tmp_path):
    u = Utterance(np.array([[1.5, -2.0]], dtype=np.float32), 1, (7, 8), True, "x")
    write_corpus(tmp_path, [u])
    raw = (tmp_path / "lang1" / "x.utt").read_bytes()
    assert raw[:8] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
    assert np.frombuffer(raw[8:16], "<f4").tolist() == [1.5, -2.0]
    assert raw[16:] == b"7 8\n"
    assert (tmp_path / "manifest.tsv").read_text() == "lang1/x.utt\t1\t1\n"


def test_truncated_record_is_data_error(tmp_path):
    u = Utterance(np.ones((4, 2)), 0, (1,), True, "t")
    write_corpus(tmp_path, [u])
    path = tmp_path / "lang0" / "t.utt"
    path.write_bytes(path.read_bytes()[:12])
    with pytest.raises(DataError):
        read_corpus(tmp_path)
