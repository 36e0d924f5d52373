import math
from collections import Counter

import pytest

from xdlm_pipeline.data.corpus import (
    DIGIT_WORDS, ParallelCorpus, SentencePair, corpus_stats, load_parallel, load_tsv,
    mix_corpora, save_parallel, split_corpus, synth_copy_corpus, synth_mapping_corpus,
)
from xdlm_pipeline.exceptions import AlignmentError, ConfigurationError, CorpusEncodingError


def write(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return str(path)


def test_load_parallel_three_lines(tmp_path):
    src = write(tmp_path / "a.de", ["eins", "zwei", "drei"])
    tgt = write(tmp_path / "a.en", ["one", "two", "three"])
    corpus = load_parallel(src, tgt, "de", "en")
    assert len(corpus) == 3
    assert corpus[1] == SentencePair("zwei", "two", "de", "en")
    assert corpus.n_dropped == 0


def test_load_parallel_reports_both_counts(tmp_path):
    src = write(tmp_path / "a.de", ["1", "2", "3", "4", "5"])
    tgt = write(tmp_path / "a.en", ["1", "2", "3", "4"])
    with pytest.raises(AlignmentError, match="5.*4"):
        load_parallel(src, tgt, "de", "en")


def test_empty_side_dropped_and_counted(tmp_path):
    src = write(tmp_path / "a.de", ["eins", "", "drei"])
    tgt = write(tmp_path / "a.en", ["one", "two", "  "])
    corpus = load_parallel(src, tgt, "de", "en")
    assert len(corpus) == 1
    assert corpus.n_dropped == 2


def test_invalid_utf8_names_line(tmp_path):
    src = tmp_path / "a.de"
    src.write_bytes(b"gut\n\xff\xfe\n")
    tgt = write(tmp_path / "a.en", ["good", "bad"])
    with pytest.raises(CorpusEncodingError, match="line 2"):
        load_parallel(str(src), tgt, "de", "en")


def test_load_tsv_and_column_check(tmp_path):
    good = write(tmp_path / "ok.tsv", ["a b\tA B", "c\tC"])
    corpus = load_tsv(good, "x", "y")
    assert corpus.sources == ["a b", "c"]
    assert corpus.targets == ["A B", "C"]

    bad = write(tmp_path / "bad.tsv", ["a\tb\tc"])
    with pytest.raises(AlignmentError, match="line 1"):
        load_tsv(bad, "x", "y")


def test_save_then_load(tmp_path):
    corpus = synth_copy_corpus(12, 1, 4, 5, seed=3)
    source_path, target_path = save_parallel(corpus, str(tmp_path / "data" / "train"))
    assert source_path.endswith("train.src")
    assert load_parallel(source_path, target_path, "src", "tgt") == corpus


@pytest.mark.parametrize("source", ["one\ntwo", "one\rtwo"])
def test_save_rejects_line_breaks(tmp_path, source):
    corpus = ParallelCorpus((SentencePair("ok", "fine", "src", "tgt"), SentencePair(source, "x", "src", "tgt")),
                            "src", "tgt")
    with pytest.raises(AlignmentError, match="Pair 2"):
        save_parallel(corpus, str(tmp_path / "train"))
    assert not (tmp_path / "train.src").exists()


def test_same_language_rejected():
    with pytest.raises(ConfigurationError):
        SentencePair("a", "b", "en", "en")


def test_copy_corpus_is_copy_and_deterministic():
    corpus = synth_copy_corpus(1, 3, 3, 5, seed=7)
    assert corpus[0].source == corpus[0].target
    assert len(corpus[0].source.split()) == 3
    assert synth_copy_corpus(50, 1, 8, 5, seed=9) == synth_copy_corpus(50, 1, 8, 5, seed=9)


def test_copy_corpus_lengths_uniform():
    n = 10000
    corpus = synth_copy_corpus(n, 2, 12, 6, seed=1)
    counts = Counter(len(pair.source.split()) for pair in corpus)
    p = 1 / 11
    sigma = math.sqrt(n * p * (1 - p))
    assert set(counts) == set(range(2, 13))
    for length in range(2, 13):
        assert abs(counts[length] - n * p) < 4 * sigma


def test_mapping_corpus_definition():
    corpus = synth_mapping_corpus(1, {"1": "one"}, 2, 2, seed=0)
    assert corpus[0].source == "1 1"
    assert corpus[0].target == "one one"


def test_mapping_corpus_tokenwise_scan():
    corpus = synth_mapping_corpus(5000, DIGIT_WORDS, 1, 8, seed=4)
    for pair in corpus:
        assert pair.target.split() == [DIGIT_WORDS[token] for token in pair.source.split()]


@pytest.mark.parametrize("table", [{}, {"1": "one", "2": "one"}])
def test_mapping_corpus_rejects_bad_tables(table):
    with pytest.raises(ConfigurationError):
        synth_mapping_corpus(3, table, 1, 2, seed=0)


def test_reversed_swaps_direction():
    corpus = synth_mapping_corpus(5, DIGIT_WORDS, 1, 3, seed=2)
    back = corpus.reversed()
    assert (back.source_lang, back.target_lang) == ("tgt", "src")
    assert back.sources == corpus.targets


def test_mix_and_split():
    a = synth_copy_corpus(30, 1, 3, 4, seed=1)
    b = synth_mapping_corpus(20, DIGIT_WORDS, 1, 3, seed=2)
    mixed = mix_corpora([a, b], seed=0)
    assert len(mixed) == 50
    assert sorted(mixed.sources) == sorted(a.sources + b.sources)
    assert mix_corpora([a, b], seed=0) == mixed

    train, valid, test = split_corpus(mixed, 5, 10)
    assert (len(train), len(valid), len(test)) == (35, 5, 10)
    assert (train.split, valid.split, test.split) == ("train", "valid", "test")
    with pytest.raises(ConfigurationError):
        split_corpus(mixed, 40, 20)


def test_mix_rejects_different_language_pairs():
    a = synth_copy_corpus(3, 1, 2, 3, seed=1)
    b = synth_copy_corpus(3, 1, 2, 3, seed=1, source_lang="de", target_lang="en")
    with pytest.raises(ConfigurationError):
        mix_corpora([a, b], seed=0)


def test_corpus_stats():
    corpus = ParallelCorpus((SentencePair("a b", "c", "x", "y"), SentencePair("d", "e f g", "x", "y")),
                            "x", "y", split="test")
    assert corpus_stats(corpus) == {
        'split': "test", 'n_pairs': 2, 'n_dropped': 0, 'src_tokens': 3, 'tgt_tokens': 4,
    }
