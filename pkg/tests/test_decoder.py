import math
from dataclasses import replace

import pytest

from xdlm_pipeline.data.corpus import synth_copy_corpus
from xdlm_pipeline.data.tokenizer import encode_ids
from xdlm_pipeline.diffusion.process import NoiseKind
from xdlm_pipeline.processors.decoder import (
    encoder_input, format_trace, generate, predict_length, step_grid, sweep_iterations, translate_corpus,
)

SOURCES = ["a b c", "d e", "f a b c d"]


@pytest.mark.parametrize("T, n, expected", [
    (20, 1, [20]),
    (10, 4, [10, 7, 4, 1]),
    (4, 10, [4, 3, 2, 1]),
    (5, 2, [5, 1]),
    (20, 3, [20, 11, 1]),
    (1, 1, [1]),
])
def test_step_grid(T, n, expected):
    assert step_grid(T, n) == expected


def test_full_grid_visits_every_step():
    assert step_grid(20, 20) == list(range(20, 0, -1))


def test_predict_length_ranking(tiny_model, vocab, bpe):
    ranked = predict_length(tiny_model, encoder_input(encode_ids(vocab, bpe, "a b c"), 0))
    assert sorted(length for length, _ in ranked) == list(range(1, 17))
    scores = [score for _, score in ranked]
    assert scores == sorted(scores, reverse=True)
    assert sum(math.exp(s) for s in scores) == pytest.approx(1.0)


def test_single_iteration_decode(tiny_model, vocab, bpe, schedule, absorbing, decode_config):
    config = replace(decode_config, n_iterations=1)
    out = translate_corpus(tiny_model, SOURCES, schedule, absorbing, config, vocab, bpe, trace=True)
    assert len(out) == 3
    for translation in out:
        assert [t for t, _ in translation.trace] == [4, 0]
        final = translation.trace[-1][1]
        assert len(final) == translation.predicted_length
        assert all(not vocab.is_reserved(i) for i in final)
        assert len(translation.hypothesis.split()) == translation.predicted_length
        assert math.isfinite(translation.score)


def test_trace_follows_grid(tiny_model, vocab, bpe, schedule, absorbing, decode_config):
    translation = generate(tiny_model, "a b c", schedule, None, decode_config, vocab, bpe, absorbing, trace=True)
    assert [t for t, _ in translation.trace] == [4, 3, 2, 1, 0]
    assert set(translation.trace[0][1]) == {vocab.mask_id}
    assert len(format_trace(translation, vocab).splitlines()) == 5
    assert "<mask>" in format_trace(translation, vocab).splitlines()[0]


def test_length_beam_keeps_best_candidate(tiny_model, vocab, bpe, schedule, absorbing, decode_config):
    config = replace(decode_config, length_beam=3)
    translation = generate(tiny_model, "a b c d", schedule, None, config, vocab, bpe, absorbing)
    assert len(translation.candidates) == 3
    assert len({length for length, _ in translation.candidates}) == 3
    best_length, best_score = max(translation.candidates, key=lambda item: item[1])
    assert translation.predicted_length == best_length
    assert translation.score == best_score


def test_beam_follows_length_ranking(tiny_model, vocab, bpe, schedule, absorbing, decode_config):
    ids = encode_ids(vocab, bpe, "a b c d")
    ranked = predict_length(tiny_model, encoder_input(ids, vocab.language_index(vocab.languages[0])))
    config = replace(decode_config, length_beam=3)
    translation = generate(tiny_model, "a b c d", schedule, None, config, vocab, bpe, absorbing)
    assert [length for length, _ in translation.candidates] == [length for length, _ in ranked[:3]]


def test_decoding_is_deterministic(tiny_model, vocab, bpe, schedule, absorbing, decode_config):
    config = replace(decode_config, routing="stochastic", sample_x0=True)
    first = translate_corpus(tiny_model, SOURCES, schedule, absorbing, config, vocab, bpe)
    second = translate_corpus(tiny_model, SOURCES, schedule, absorbing, config, vocab, bpe)
    assert [t.hypothesis for t in first] == [t.hypothesis for t in second]


def test_multinomial_noise_decode(tiny_model, vocab, bpe, schedule, decode_config):
    noise = NoiseKind.for_vocabulary("multinomial", vocab)
    config = replace(decode_config, routing="stochastic")
    translation = generate(tiny_model, "a b", schedule, None, config, vocab, bpe, noise, trace=True)
    assert all(not vocab.is_reserved(i) for _, ids in translation.trace for i in ids)


def test_source_without_known_subwords(tiny_model, vocab, bpe, schedule, absorbing, decode_config):
    out = translate_corpus(tiny_model, ["zzz", "a"], schedule, absorbing, decode_config, vocab, bpe)
    assert out[0].hypothesis == ""
    assert out[0].predicted_length == 0
    assert out[1].predicted_length >= 1


def test_sweep_reports_each_count(tiny_model, vocab, bpe, schedule, absorbing, decode_config):
    corpus = synth_copy_corpus(5, 1, 4, 6, seed=1)
    reports = sweep_iterations(tiny_model, corpus, [1, 2, 10], schedule, absorbing, decode_config, vocab, bpe)
    assert [r.n_iterations for r in reports] == [1, 2, 4]
    assert all(0.0 <= r.bleu_word <= 100.0 and r.n_sentences == 5 for r in reports)
