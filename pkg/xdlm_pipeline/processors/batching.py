# processors/batching.py
"""
Batch construction for the two training tasks.

TDLM: [bos] source [eos] target [eos] with per-token language ids and
positions restarting at 0 for the target segment; a fixed share of the real
tokens is selected and only those are diffused.
Fine-tuning: clean source on the encoder, target noised at t on the decoder.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.data.tokenizer import encode_ids
from xdlm_pipeline.diffusion.process import DiffusionState, forward_sample
from xdlm_pipeline.model.denoiser import ModelInput


@dataclass(frozen=True)
class EncodedPair:
    source_ids: tuple
    target_ids: tuple
    source_lang: str
    target_lang: str

    @property
    def n_tokens(self):
        return len(self.source_ids) + len(self.target_ids)


def encode_pair(pair, vocab, bpe, max_len):
    """Tokenize one SentencePair, truncating each side to max_len ids."""
    source = encode_ids(vocab, bpe, pair.source)
    target = encode_ids(vocab, bpe, pair.target)
    if len(source) > max_len or len(target) > max_len:
        logging.warning(f"Truncating pair to {max_len} ids per side "
                        f"(source {len(source)}, target {len(target)})")
    return EncodedPair(tuple(source[:max_len]), tuple(target[:max_len]), pair.source_lang, pair.target_lang)


def encode_pairs(pairs, vocab, bpe, max_len):
    return [
        pair if isinstance(pair, EncodedPair) else encode_pair(pair, vocab, bpe, max_len)
        for pair in pairs
    ]


def _pad(rows, fill, dtype=np.int64):
    width = max((len(row) for row in rows), default=0)
    out = np.full((len(rows), width), fill, dtype=dtype)
    for i, row in enumerate(rows):
        out[i, :len(row)] = row
    return out


def _padding(rows):
    width = max((len(row) for row in rows), default=0)
    return np.array([[j >= len(row) for j in range(width)] for row in rows], dtype=bool).reshape(len(rows), width)


def _pair_rng(seed, step_seed, index):
    return np.random.default_rng([seed, step_seed, index])


@dataclass
class TdlmBatch:
    """Padded (B, length) arrays; the encoder and decoder both read the noised concatenation."""
    ids: np.ndarray
    x0: np.ndarray
    langs: np.ndarray
    positions: np.ndarray
    padding: np.ndarray
    selected: np.ndarray
    loss_positions: np.ndarray
    timestep: np.ndarray
    n_skipped: int = 0

    def __len__(self):
        return len(self.timestep)

    @property
    def n_tokens(self):
        return int((~self.padding).sum())

    def to_model_input(self):
        ids = torch.as_tensor(self.ids)
        langs = torch.as_tensor(self.langs)
        positions = torch.as_tensor(self.positions)
        padding = torch.as_tensor(self.padding)
        return ModelInput(ids, langs, positions, padding, ids, langs, positions, padding,
                          torch.as_tensor(self.timestep))

    def training_tensors(self):
        """(ModelInput, x_0 targets, loss positions, true lengths or None)."""
        return self.to_model_input(), torch.as_tensor(self.x0), torch.as_tensor(self.loss_positions), None


@dataclass
class FinetuneBatch:
    encoder_ids: np.ndarray
    encoder_langs: np.ndarray
    encoder_positions: np.ndarray
    encoder_padding: np.ndarray
    decoder_ids: np.ndarray
    decoder_langs: np.ndarray
    decoder_positions: np.ndarray
    decoder_padding: np.ndarray
    x0: np.ndarray
    true_length: np.ndarray
    loss_positions: np.ndarray
    timestep: np.ndarray
    n_skipped: int = 0

    def __len__(self):
        return len(self.timestep)

    @property
    def n_tokens(self):
        return int((~self.encoder_padding).sum() + (~self.decoder_padding).sum())

    def to_model_input(self):
        return ModelInput(
            torch.as_tensor(self.encoder_ids), torch.as_tensor(self.encoder_langs),
            torch.as_tensor(self.encoder_positions), torch.as_tensor(self.encoder_padding),
            torch.as_tensor(self.decoder_ids), torch.as_tensor(self.decoder_langs),
            torch.as_tensor(self.decoder_positions), torch.as_tensor(self.decoder_padding),
            torch.as_tensor(self.timestep),
        )

    def training_tensors(self):
        return (self.to_model_input(), torch.as_tensor(self.x0),
                torch.as_tensor(self.loss_positions), torch.as_tensor(self.true_length))


def n_selected(n_real, mask_ratio):
    """floor(mask_ratio * n_real), at least 1."""
    return max(1, math.floor(mask_ratio * n_real + Config.EPS_FLOOR))


def make_tdlm_batch(pairs, vocab, bpe, schedule, noise, config, step_seed):
    """
    Build a TDLM batch. Pairs without a real token on either side are skipped
    and counted in n_skipped. Deterministic in (pairs, config, step_seed).
    """
    encoded = encode_pairs(pairs, vocab, bpe, config.max_len)
    rows = {name: [] for name in ("ids", "x0", "langs", "positions", "selected", "loss")}
    timesteps = []
    n_skipped = 0
    for index, pair in enumerate(encoded):
        source = list(pair.source_ids[:config.max_len - 2])
        target = list(pair.target_ids[:config.max_len - 1])
        n_real = len(source) + len(target)
        if n_real < 1:
            n_skipped += 1
            continue
        concat = [vocab.bos_id] + source + [vocab.eos_id] + target + [vocab.eos_id]
        source_lang = vocab.language_index(pair.source_lang)
        target_lang = vocab.language_index(pair.target_lang)
        langs = [source_lang] * (len(source) + 2) + [target_lang] * (len(target) + 1)
        positions = list(range(len(source) + 2)) + list(range(len(target) + 1))
        eligible = [*range(1, len(source) + 1), *range(len(source) + 2, len(source) + 2 + len(target))]

        rng = _pair_rng(config.seed, step_seed, index)
        chosen = rng.choice(eligible, size=min(n_selected(n_real, config.mask_ratio), n_real), replace=False)
        selected = np.zeros(len(concat), dtype=bool)
        selected[chosen] = True
        t = int(rng.integers(1, schedule.T + 1))
        noised = forward_sample(DiffusionState(concat, 0), t, schedule, noise,
                                int(rng.integers(2**32)), eligible=selected)

        rows["ids"].append(noised.ids)
        rows["x0"].append(concat)
        rows["langs"].append(langs)
        rows["positions"].append(positions)
        rows["selected"].append(selected)
        rows["loss"].append(selected if config.tdlm_loss_scope == "noised" else np.ones(len(concat), dtype=bool))
        timesteps.append(t)

    if n_skipped:
        logging.warning(f"Skipped {n_skipped} pair(s) too short for TDLM selection")
    return TdlmBatch(
        ids=_pad(rows["ids"], vocab.pad_id), x0=_pad(rows["x0"], vocab.pad_id),
        langs=_pad(rows["langs"], 0), positions=_pad(rows["positions"], 0),
        padding=_padding(rows["ids"]),
        selected=_pad(rows["selected"], False, dtype=bool),
        loss_positions=_pad(rows["loss"], False, dtype=bool),
        timestep=np.asarray(timesteps, dtype=np.int64), n_skipped=n_skipped,
    )


def make_finetune_batch(pairs, vocab, bpe, schedule, noise, config, step_seed):
    """
    Build a fine-tuning batch: t uniform in 1..T per pair, the whole target
    noised at t, loss on positions where x_t differs from x_0 or is the mask.
    """
    encoded = encode_pairs(pairs, vocab, bpe, config.max_len)
    sources, source_langs, targets, noised, target_langs, timesteps = [], [], [], [], [], []
    n_skipped = 0
    for index, pair in enumerate(encoded):
        if not pair.source_ids or not pair.target_ids:
            n_skipped += 1
            continue
        rng = _pair_rng(config.seed, step_seed, index)
        t = int(rng.integers(1, schedule.T + 1))
        xt = forward_sample(DiffusionState(pair.target_ids, 0), t, schedule, noise, int(rng.integers(2**32)))
        sources.append(pair.source_ids)
        source_langs.append([vocab.language_index(pair.source_lang)] * len(pair.source_ids))
        targets.append(pair.target_ids)
        noised.append(xt.ids)
        target_langs.append([vocab.language_index(pair.target_lang)] * len(pair.target_ids))
        timesteps.append(t)

    if n_skipped:
        logging.warning(f"Skipped {n_skipped} pair(s) with an empty side after tokenization")
    decoder_ids = _pad(noised, vocab.pad_id)
    x0 = _pad(targets, vocab.pad_id)
    decoder_padding = _padding(targets)
    loss_positions = ((decoder_ids != x0) | (decoder_ids == vocab.mask_id)) & ~decoder_padding
    return FinetuneBatch(
        encoder_ids=_pad(sources, vocab.pad_id), encoder_langs=_pad(source_langs, 0),
        encoder_positions=_pad([list(range(len(s))) for s in sources], 0), encoder_padding=_padding(sources),
        decoder_ids=decoder_ids, decoder_langs=_pad(target_langs, 0),
        decoder_positions=_pad([list(range(len(s))) for s in targets], 0), decoder_padding=decoder_padding,
        x0=x0, true_length=np.asarray([len(s) for s in targets], dtype=np.int64),
        loss_positions=loss_positions, timestep=np.asarray(timesteps, dtype=np.int64),
        n_skipped=n_skipped,
    )


BATCH_BUILDERS = {'tdlm': make_tdlm_batch, 'finetune': make_finetune_batch}


def token_batches(encoded, max_tokens, seed):
    """
    Endless stream of index lists over `encoded`, reshuffled every epoch.
    Each list holds at most max_tokens source + target ids (at least one pair).
    """
    rng = np.random.default_rng(seed)
    epoch = 0
    while True:
        order = rng.permutation(len(encoded))
        batch, tokens = [], 0
        for index in order:
            size = encoded[index].n_tokens
            if batch and tokens + size > max_tokens:
                yield batch
                batch, tokens = [], 0
            batch.append(int(index))
            tokens += size
        if batch:
            yield batch
        epoch += 1
        logging.debug(f"Finished batching epoch {epoch}")
