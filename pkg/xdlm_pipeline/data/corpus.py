# data/corpus.py
"""
Parallel corpus ingestion and synthetic toy corpora
"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from xdlm_pipeline.exceptions import AlignmentError, ConfigurationError, CorpusEncodingError

SPLITS = ("train", "valid", "test")

DIGIT_WORDS = {
    "0": "zero", "1": "one", "2": "two", "3": "three", "4": "four",
    "5": "five", "6": "six", "7": "seven", "8": "eight", "9": "nine",
}


def _check_lang(tag):
    if not tag or not tag.isascii() or any(ch.isspace() for ch in tag):
        raise ConfigurationError(f"Invalid language tag: {tag!r}")


@dataclass(frozen=True)
class SentencePair:
    source: str
    target: str
    source_lang: str
    target_lang: str

    def __post_init__(self):
        if not self.source.strip() or not self.target.strip():
            raise ValueError("Sentence pair sides must be non-empty")
        _check_lang(self.source_lang)
        _check_lang(self.target_lang)
        if self.source_lang == self.target_lang:
            raise ConfigurationError(f"Language ids must differ, got {self.source_lang!r} twice")

    def reversed(self):
        return SentencePair(self.target, self.source, self.target_lang, self.source_lang)


@dataclass(frozen=True)
class ParallelCorpus:
    """An immutable, ordered list of sentence pairs sharing one language pair."""
    pairs: tuple
    source_lang: str
    target_lang: str
    split: str = "train"
    n_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'pairs', tuple(self.pairs))
        if self.split not in SPLITS:
            raise ConfigurationError(f"Unknown split {self.split!r}, expected one of {SPLITS}")
        _check_lang(self.source_lang)
        _check_lang(self.target_lang)
        for pair in self.pairs:
            if (pair.source_lang, pair.target_lang) != (self.source_lang, self.target_lang):
                raise ConfigurationError(
                    f"Pair languages ({pair.source_lang}, {pair.target_lang}) differ from corpus "
                    f"({self.source_lang}, {self.target_lang})"
                )

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, index):
        return self.pairs[index]

    @property
    def sources(self):
        return [pair.source for pair in self.pairs]

    @property
    def targets(self):
        return [pair.target for pair in self.pairs]

    def reversed(self):
        """Same corpus in the opposite translation direction."""
        return ParallelCorpus(
            tuple(pair.reversed() for pair in self.pairs),
            self.target_lang, self.source_lang, self.split, self.n_dropped
        )


def read_lines(path):
    """Read a UTF-8 file into a list of lines, naming the first undecodable line."""
    with open(path, 'rb') as f:
        raw = f.read()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    decoded = []
    for line_number, line in enumerate(lines, start=1):
        try:
            decoded.append(line.decode('utf-8').rstrip("\r"))
        except UnicodeDecodeError as e:
            raise CorpusEncodingError(f"{path}: invalid UTF-8 on line {line_number} ({e.reason})") from e
    return decoded


def _build_corpus(source_lines, target_lines, source_lang, target_lang, split, origin):
    pairs = []
    n_dropped = 0
    for source, target in zip(source_lines, target_lines):
        source, target = source.strip(), target.strip()
        if not source or not target:
            n_dropped += 1
            continue
        pairs.append(SentencePair(source, target, source_lang, target_lang))
    if n_dropped:
        logging.warning(f"Dropped {n_dropped} pairs with an empty side from {origin}")
    logging.info(f"Loaded {len(pairs)} pairs ({source_lang}-{target_lang}, {split}) from {origin}")
    return ParallelCorpus(tuple(pairs), source_lang, target_lang, split, n_dropped)


def load_parallel(source_path, target_path, source_lang, target_lang, split="train"):
    """
    Load a corpus from two line-aligned UTF-8 files, one sentence per line.
    Pairs with an empty side are dropped and counted in n_dropped.
    """
    source_lines = read_lines(source_path)
    target_lines = read_lines(target_path)
    if len(source_lines) != len(target_lines):
        raise AlignmentError(
            f"Line count mismatch: {source_path} has {len(source_lines)} lines, "
            f"{target_path} has {len(target_lines)}"
        )
    return _build_corpus(source_lines, target_lines, source_lang, target_lang, split, source_path)


def load_tsv(path, source_lang, target_lang, split="train"):
    """Load a corpus from a single 'source<TAB>target' file."""
    source_lines, target_lines = [], []
    for line_number, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            source_lines.append("")
            target_lines.append("")
            continue
        columns = line.split("\t")
        if len(columns) != 2:
            raise AlignmentError(f"{path}: line {line_number} has {len(columns)} columns, expected 2")
        source_lines.append(columns[0])
        target_lines.append(columns[1])
    return _build_corpus(source_lines, target_lines, source_lang, target_lang, split, path)


def save_parallel(corpus, prefix):
    """Write {prefix}.{source_lang} and {prefix}.{target_lang}; returns both paths."""
    for index, pair in enumerate(corpus, start=1):
        if any(ch in text for text in (pair.source, pair.target) for ch in "\r\n"):
            raise AlignmentError(f"Pair {index} contains a line break and cannot be saved one sentence per line")
    directory = os.path.dirname(prefix)
    if directory:
        os.makedirs(directory, exist_ok=True)
    source_path = f"{prefix}.{corpus.source_lang}"
    target_path = f"{prefix}.{corpus.target_lang}"
    with open(source_path, 'w', encoding='utf-8', newline="\n") as f:
        f.writelines(f"{source}\n" for source in corpus.sources)
    with open(target_path, 'w', encoding='utf-8', newline="\n") as f:
        f.writelines(f"{target}\n" for target in corpus.targets)
    logging.info(f"Saved {len(corpus)} pairs to {source_path} and {target_path}")
    return source_path, target_path


def corpus_stats(corpus):
    """Statistics record emitted by `prepare`."""
    return {
        'split': corpus.split,
        'n_pairs': len(corpus),
        'n_dropped': corpus.n_dropped,
        'src_tokens': sum(len(source.split()) for source in corpus.sources),
        'tgt_tokens': sum(len(target.split()) for target in corpus.targets),
    }


def alphabet_symbols(alphabet_size):
    """Symbolic alphabet: a..z, then s26, s27, ..."""
    return [chr(ord('a') + i) if i < 26 else f"s{i}" for i in range(alphabet_size)]


def _check_lengths(min_len, max_len):
    if min_len < 1 or min_len > max_len:
        raise ConfigurationError(f"Need 1 <= min_len <= max_len, got {min_len}..{max_len}")


def synth_copy_corpus(n_pairs, min_len, max_len, alphabet_size, seed,
                      source_lang="src", target_lang="tgt", split="train"):
    """Copy task: target identical to source, tokens uniform over the alphabet."""
    _check_lengths(min_len, max_len)
    if alphabet_size < 2:
        raise ConfigurationError(f"alphabet_size must be >= 2, got {alphabet_size}")
    symbols = alphabet_symbols(alphabet_size)
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        sentence = " ".join(symbols[i] for i in rng.integers(0, alphabet_size, size=length))
        pairs.append(SentencePair(sentence, sentence, source_lang, target_lang))
    return ParallelCorpus(tuple(pairs), source_lang, target_lang, split)


def synth_mapping_corpus(n_pairs, mapping_table, min_len, max_len, seed,
                         source_lang="src", target_lang="tgt", split="train"):
    """Toy translation: each source token is substituted through an injective table."""
    if not mapping_table:
        raise ConfigurationError("mapping_table must not be empty")
    if len(set(mapping_table.values())) != len(mapping_table):
        raise ConfigurationError("mapping_table must be injective")
    for token in list(mapping_table) + list(mapping_table.values()):
        if not token or any(ch.isspace() for ch in token):
            raise ConfigurationError(f"Mapping tokens must be non-empty words, got {token!r}")
    _check_lengths(min_len, max_len)

    domain = sorted(mapping_table)
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        tokens = [domain[i] for i in rng.integers(0, len(domain), size=length)]
        pairs.append(SentencePair(
            " ".join(tokens), " ".join(mapping_table[token] for token in tokens),
            source_lang, target_lang
        ))
    return ParallelCorpus(tuple(pairs), source_lang, target_lang, split)


def mix_corpora(corpora, seed, split="train"):
    """Shuffle several corpora of the same language pair into one."""
    if not corpora:
        raise ConfigurationError("mix_corpora needs at least one corpus")
    languages = {(corpus.source_lang, corpus.target_lang) for corpus in corpora}
    if len(languages) != 1:
        raise ConfigurationError(f"Cannot mix corpora with different language pairs: {sorted(languages)}")
    pairs = [pair for corpus in corpora for pair in corpus]
    order = np.random.default_rng(seed).permutation(len(pairs))
    source_lang, target_lang = languages.pop()
    return ParallelCorpus(tuple(pairs[i] for i in order), source_lang, target_lang, split)


def split_corpus(corpus, n_valid, n_test):
    """Cut the tail of a corpus into valid and test splits."""
    if n_valid + n_test > len(corpus):
        raise ConfigurationError(f"Cannot take {n_valid}+{n_test} held-out pairs from {len(corpus)}")
    n_train = len(corpus) - n_valid - n_test
    cut = lambda lo, hi, split: ParallelCorpus(
        corpus.pairs[lo:hi], corpus.source_lang, corpus.target_lang, split
    )
    return (
        cut(0, n_train, "train"),
        cut(n_train, n_train + n_valid, "valid"),
        cut(n_train + n_valid, len(corpus), "test"),
    )
