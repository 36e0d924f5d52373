# data/tokenizer.py
"""
Joint byte-pair encoding and the shared cross-lingual vocabulary
"""
import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field

from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.exceptions import ConfigurationError, DecodeError

MERGES_HEADER = "#version: 0.2"


@dataclass(frozen=True)
class BpeModel:
    """Ordered merge rules; earlier merges have higher priority."""
    merges: tuple = ()
    end_of_word: str = Config.END_OF_WORD
    _ranks: dict = field(default=None, init=False, repr=False, compare=False)
    _cache: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        merges = tuple(tuple(pair) for pair in self.merges)
        if len(set(merges)) != len(merges):
            raise ConfigurationError("BPE merge list contains duplicates")
        object.__setattr__(self, 'merges', merges)
        object.__setattr__(self, '_ranks', {pair: rank for rank, pair in enumerate(merges)})
        object.__setattr__(self, '_cache', {})

    def encode_word(self, word):
        """Apply merges by priority to one whitespace-free word."""
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = list(word[:-1]) + [word[-1] + self.end_of_word]
        while len(symbols) > 1:
            candidates = [
                (self._ranks[pair], i) for i, pair in enumerate(zip(symbols, symbols[1:]))
                if pair in self._ranks
            ]
            if not candidates:
                break
            _, position = min(candidates)
            symbols = _merge_symbols(symbols, (symbols[position], symbols[position + 1]))
        result = tuple(symbols)
        self._cache[word] = result
        return result

    def save(self, path):
        with open(path, 'w', encoding='utf-8', newline="\n") as f:
            f.write(MERGES_HEADER + "\n")
            f.writelines(f"{left} {right}\n" for left, right in self.merges)
        logging.info(f"Saved {len(self.merges)} merges to {path}")

    @classmethod
    def load(cls, path):
        merges = []
        with open(path, encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#version"):
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise ConfigurationError(f"{path}: malformed merge on line {line_number}")
                merges.append((parts[0], parts[1]))
        return cls(tuple(merges))


def _merge_symbols(symbols, pair):
    merged = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
            merged.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return merged


def _corpus_texts(corpora):
    for corpus in corpora:
        for pair in corpus:
            yield pair.source
            yield pair.target


def bpe_train(corpora, n_merges, end_of_word=Config.END_OF_WORD):
    """
    Learn merges jointly over the source and target sides of all corpora.
    Ties on frequency go to the lexicographically smallest pair.
    """
    if not corpora:
        raise ConfigurationError("bpe_train needs at least one corpus")
    if n_merges < 0:
        raise ConfigurationError(f"n_merges must be >= 0, got {n_merges}")

    word_counts = Counter(word for text in _corpus_texts(corpora) for word in text.split())
    words = {word: list(word[:-1]) + [word[-1] + end_of_word] for word in word_counts}

    merges = []
    while len(merges) < n_merges:
        pair_counts = Counter()
        for word, symbols in words.items():
            for pair in zip(symbols, symbols[1:]):
                pair_counts[pair] += word_counts[word]
        if not pair_counts:
            logging.info(f"No symbol pairs left after {len(merges)} merges")
            break
        best = min(pair_counts, key=lambda pair: (-pair_counts[pair], pair))
        merges.append(best)
        for word, symbols in words.items():
            if len(symbols) > 1:
                words[word] = _merge_symbols(symbols, best)

    logging.info(f"Learned {len(merges)} BPE merges from {len(word_counts)} word types")
    return BpeModel(tuple(merges), end_of_word)


def bpe_encode(model, text):
    """Whitespace pre-tokenization followed by per-word merging."""
    return [subword for word in text.split() for subword in model.encode_word(word)]


def subwords_to_text(subwords, end_of_word=Config.END_OF_WORD):
    """Join subwords into words at end-of-word markers."""
    words, current = [], ""
    for subword in subwords:
        if subword.endswith(end_of_word):
            words.append(current + subword[:-len(end_of_word)])
            current = ""
        else:
            current += subword
    if current:
        words.append(current)
    return " ".join(words)


class Vocabulary:
    """Token/id maps with specials first, then one id per language, then subwords."""

    def __init__(self, tokens, languages):
        if not languages:
            raise ConfigurationError("Vocabulary needs at least one language")
        if len(set(languages)) != len(languages):
            raise ConfigurationError(f"Duplicate language tags: {languages}")
        self.languages = tuple(languages)
        self.token_of = list(Config.SPECIAL_TOKENS) + [self.lang_token(tag) for tag in self.languages]
        self.n_reserved = len(self.token_of)
        for token in tokens:
            if token in Config.SPECIAL_TOKENS or token.startswith("<lang:"):
                raise ConfigurationError(f"Subword {token!r} collides with a reserved token")
            self.token_of.append(token)
        self.id_of = {token: index for index, token in enumerate(self.token_of)}
        if len(self.id_of) != len(self.token_of):
            raise ConfigurationError("Vocabulary tokens must be unique")

        self.pad_id, self.bos_id, self.eos_id, self.mask_id = range(4)
        self.specials = {
            'pad': self.pad_id, 'bos': self.bos_id, 'eos': self.eos_id, 'mask': self.mask_id,
        }
        self.lang_ids = {tag: self.id_of[self.lang_token(tag)] for tag in self.languages}

    @staticmethod
    def lang_token(tag):
        return f"<lang:{tag}>"

    def __len__(self):
        return len(self.token_of)

    def __eq__(self, other):
        return (isinstance(other, Vocabulary) and self.token_of == other.token_of
                and self.languages == other.languages)

    def language_index(self, tag):
        """Row of the language embedding table for a language tag."""
        try:
            return self.languages.index(tag)
        except ValueError:
            raise ConfigurationError(f"Language {tag!r} not in vocabulary {self.languages}") from None

    def is_reserved(self, token_id):
        return token_id < self.n_reserved

    @property
    def subword_ids(self):
        """Ids that may appear in text; also the support of multinomial noise."""
        return list(range(self.n_reserved, len(self)))

    def serialize(self):
        lines = ["#specials"]
        lines += [f"{token}\t{index}" for index, token in enumerate(Config.SPECIAL_TOKENS)]
        lines.append("#languages")
        lines += [f"{tag}\t{self.lang_ids[tag]}" for tag in self.languages]
        lines.append("#tokens")
        lines += [f"{token}\t{index}" for index, token in enumerate(self.token_of)
                  if index >= self.n_reserved]
        return "\n".join(lines) + "\n"

    def content_hash(self):
        return hashlib.md5(self.serialize().encode('utf-8')).hexdigest()

    def save(self, path):
        with open(path, 'w', encoding='utf-8', newline="\n") as f:
            f.write(self.serialize())
        logging.info(f"Saved vocabulary of {len(self)} entries to {path}")

    @classmethod
    def load(cls, path):
        sections = {'#specials': [], '#languages': [], '#tokens': []}
        current = None
        with open(path, encoding='utf-8') as f:
            for line in f:
                line = line.rstrip("\n")
                if line in sections:
                    current = sections[line]
                    continue
                if not line or current is None:
                    continue
                token, index = line.rsplit("\t", 1)
                current.append((token, int(index)))
        specials = [token for token, _ in sorted(sections['#specials'], key=lambda item: item[1])]
        if tuple(specials) != Config.SPECIAL_TOKENS:
            raise ConfigurationError(f"{path}: unexpected special tokens {specials}")
        languages = [tag for tag, _ in sorted(sections['#languages'], key=lambda item: item[1])]
        tokens = [token for token, _ in sorted(sections['#tokens'], key=lambda item: item[1])]
        vocab = cls(tokens, languages)
        for token, index in sections['#tokens']:
            if vocab.id_of[token] != index:
                raise ConfigurationError(f"{path}: token {token!r} stored with id {index}, rebuilt as {vocab.id_of[token]}")
        return vocab


def vocab_build(model, corpora, languages):
    """Specials, language ids, then every observed subword by descending frequency."""
    counts = Counter(
        subword for text in _corpus_texts(corpora) for subword in bpe_encode(model, text)
    )
    tokens = sorted(counts, key=lambda token: (-counts[token], token))
    vocab = Vocabulary(tokens, languages)
    logging.info(f"Built vocabulary: {vocab.n_reserved} reserved ids, {len(tokens)} subwords")
    return vocab


def encode_ids(vocab, model, text):
    """Text to subword ids; subwords absent from the vocabulary are skipped."""
    ids = []
    for subword in bpe_encode(model, text):
        index = vocab.id_of.get(subword)
        if index is None or vocab.is_reserved(index):
            logging.warning(f"Skipping out-of-vocabulary subword {subword!r}")
            continue
        ids.append(index)
    return ids


def ids_to_subwords(vocab, ids):
    """Map ids to subwords, dropping reserved ids (pad, mask, bos, eos, languages)."""
    subwords = []
    for index in ids:
        index = int(index)
        if index < 0 or index >= len(vocab):
            raise DecodeError(f"Token id {index} outside vocabulary of size {len(vocab)}")
        if not vocab.is_reserved(index):
            subwords.append(vocab.token_of[index])
    return subwords


def decode_ids(vocab, ids, end_of_word=Config.END_OF_WORD):
    return subwords_to_text(ids_to_subwords(vocab, ids), end_of_word)
