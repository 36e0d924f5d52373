# processors/decoder.py
"""
Non-autoregressive decoding: rank target lengths, start every candidate from
the stationary noise state at step T and walk a (possibly coarse) step grid
back to 0, re-predicting x_0 with the denoiser at each grid point.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from xdlm_pipeline.data.tokenizer import decode_ids, encode_ids
from xdlm_pipeline.diffusion.process import DiffusionState, reverse_step
from xdlm_pipeline.model.denoiser import ModelInput
from xdlm_pipeline.processors.evaluator import evaluate_texts


@dataclass
class Translation:
    source: str
    hypothesis: str
    predicted_length: int
    score: float = float("-inf")
    candidates: list = field(default_factory=list)   # (length, mean log-prob) per attempted length
    trace: list = None                                # (t, token ids) after each reverse step


def step_grid(T, n_iterations):
    """Descending steps from T to 1, evenly spaced, n_iterations of them (at most T)."""
    n = max(1, min(n_iterations, T))
    if n == 1:
        return [T]
    points = np.floor(np.linspace(T, 1, n) + 0.5).astype(int)
    return sorted({int(p) for p in points}, reverse=True)


def _encoder_tensors(sources, lang_indices):
    width = max(len(s) for s in sources)
    ids = torch.zeros((len(sources), width), dtype=torch.long)
    langs = torch.zeros_like(ids)
    positions = torch.zeros_like(ids)
    padding = torch.ones((len(sources), width), dtype=torch.bool)
    for row, (source, lang) in enumerate(zip(sources, lang_indices)):
        n = len(source)
        ids[row, :n] = torch.as_tensor(source, dtype=torch.long)
        langs[row, :n] = lang
        positions[row, :n] = torch.arange(n)
        padding[row, :n] = False
    return ids, langs, positions, padding


def encoder_input(source_ids, source_lang_index):
    """Single-sentence ModelInput whose decoder side is a one-token placeholder."""
    ids, langs, positions, padding = _encoder_tensors([list(source_ids)], [source_lang_index])
    placeholder = torch.zeros((1, 1), dtype=torch.long)
    return ModelInput(ids, langs, positions, padding, placeholder, placeholder.clone(),
                      placeholder.clone(), torch.zeros((1, 1), dtype=torch.bool),
                      torch.zeros(1, dtype=torch.long))


def _rank(length_logits_row):
    scores = torch.log_softmax(length_logits_row.double(), dim=-1).tolist()
    return sorted(((j + 1, s) for j, s in enumerate(scores)), key=lambda item: (-item[1], item[0]))


@torch.no_grad()
def predict_length(model, batch, row=0, memory=None):
    """
    Ranked [(length, log-probability)] over 1..max_len for sentence `row` of
    batch; ties go to the smaller length. memory reuses an encoding of batch.
    """
    model.train(False)
    if memory is None:
        memory = model.encode(batch)
    return _rank(model.length_logits(memory[row:row + 1], batch.encoder_padding[row:row + 1])[0])


def _initial_ids(noise, length, rng):
    return noise.sample(rng, length).tolist()


def _pick_x0(log_probs, sample, rng):
    if not sample:
        return log_probs.argmax(dim=-1).cpu().numpy()
    probs = log_probs.exp().double().cpu().numpy()
    u = rng.random(probs.shape[:-1])[..., None]
    return np.minimum((probs.cumsum(axis=-1) < u).sum(axis=-1), probs.shape[-1] - 1)


@torch.no_grad()
def _decode_chunk(model, items, schedule, routing, noise, decode_config, vocab, trace):
    """
    items: list of (source_ids, source_lang, target_lang, seed). Returns, per
    item, (best ids, best length, best score, candidates, trace).
    """
    model.train(False)
    device = next(model.parameters()).device
    enc_ids, enc_langs, enc_positions, enc_padding = _encoder_tensors(
        [item[0] for item in items], [item[1] for item in items]
    )
    source_batch = ModelInput(enc_ids, enc_langs, enc_positions, enc_padding, enc_ids, enc_langs,
                              enc_positions, enc_padding, torch.zeros(len(items), dtype=torch.long)).to(device)
    memory = model.encode(source_batch)

    # one candidate per (sentence, beam entry)
    owners, lengths = [], []
    for row in range(len(items)):
        for length, _ in predict_length(model, source_batch, row, memory)[:decode_config.length_beam]:
            owners.append(row)
            lengths.append(length)
    owner_index = torch.as_tensor(owners)
    cand_memory = memory[owner_index.to(device)]

    width = max(lengths)
    dec_padding = torch.as_tensor([[j >= n for j in range(width)] for n in lengths], dtype=torch.bool)
    dec_positions = torch.arange(width).repeat(len(lengths), 1) * (~dec_padding)
    dec_langs = torch.as_tensor([[items[o][2]] * width for o in owners], dtype=torch.long)

    rngs = [np.random.default_rng([items[o][3], rank]) for rank, o in enumerate(owners)]
    states = [DiffusionState(_initial_ids(noise, n, rng), schedule.T, (True,) * n)
              for n, rng in zip(lengths, rngs)]
    traces = [[(schedule.T, state.ids)] for state in states] if trace else None

    grid = step_grid(schedule.T, decode_config.n_iterations)
    log_probs = None
    for i, t in enumerate(grid):
        s = grid[i + 1] if i + 1 < len(grid) else 0
        dec_ids = torch.full((len(states), width), vocab.pad_id, dtype=torch.long)
        for c, state in enumerate(states):
            dec_ids[c, :len(state)] = torch.as_tensor(state.ids, dtype=torch.long)
        batch = ModelInput(
            enc_ids[owner_index], enc_langs[owner_index], enc_positions[owner_index],
            enc_padding[owner_index], dec_ids, dec_langs, dec_positions, dec_padding,
            torch.full((len(states),), t, dtype=torch.long),
        ).to(device)
        batch.validate(model.config)
        logits = model.decode(batch, cand_memory).double()
        logits[..., :vocab.n_reserved] = float("-inf")
        log_probs = torch.log_softmax(logits / decode_config.temperature, dim=-1)

        for c, state in enumerate(states):
            n = len(state)
            x0_hat = _pick_x0(log_probs[c, :n], decode_config.sample_x0, rngs[c])
            scores = log_probs[c, torch.arange(n), torch.as_tensor(x0_hat)].cpu().numpy()
            states[c] = reverse_step(
                state, tuple(int(x) for x in x0_hat), schedule, routing, noise,
                mode=decode_config.routing, rng_seed=rngs[c].integers(2**32),
                scores=scores, to_step=s,
            )
            if trace:
                traces[c].append((s, states[c].ids))

    results = []
    for row in range(len(items)):
        best = None
        candidates = []
        for c, owner in enumerate(owners):
            if owner != row:
                continue
            n = len(states[c])
            final = torch.as_tensor(states[c].ids, dtype=torch.long)
            score = float(log_probs[c, torch.arange(n), final].mean())
            candidates.append((n, score))
            if best is None or score > best[2]:
                best = (states[c].ids, n, score, traces[c] if trace else None)
        results.append((best[0], best[1], best[2], candidates, best[3]))
    return results


def translate_corpus(model, sources, schedule, noise, decode_config, vocab, bpe,
                     source_lang=None, target_lang=None, routing=None, batch_size=32, trace=False):
    """
    Decode a list of source sentences in padded chunks. Sentence i uses the
    seed decode_config.seed + i. Returns one Translation per source.
    """
    decode_config.validate()
    source_lang = source_lang or vocab.languages[0]
    target_lang = target_lang or vocab.languages[-1]
    if decode_config.n_iterations > schedule.T:
        logging.warning(f"n_iterations {decode_config.n_iterations} exceeds T={schedule.T}; using {schedule.T}")
    src_index, tgt_index = vocab.language_index(source_lang), vocab.language_index(target_lang)
    max_len = model.config.max_len

    translations = [None] * len(sources)
    items, slots = [], []
    for i, text in enumerate(sources):
        ids = encode_ids(vocab, bpe, text)
        if not ids:
            logging.warning(f"Source {i} has no in-vocabulary subwords; emitting an empty hypothesis")
            translations[i] = Translation(text, "", 0)
            continue
        if len(ids) > max_len:
            logging.warning(f"Truncating source {i} from {len(ids)} to {max_len} ids")
            ids = ids[:max_len]
        items.append((ids, src_index, tgt_index, decode_config.seed + i))
        slots.append(i)

    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        results = _decode_chunk(model, chunk, schedule, routing, noise, decode_config, vocab, trace)
        for slot, (ids, length, score, candidates, steps) in zip(slots[start:start + batch_size], results):
            translations[slot] = Translation(
                sources[slot], decode_ids(vocab, ids), length, score, candidates, steps
            )
        logging.info(f"Decoded {min(start + batch_size, len(items))}/{len(items)} sentences")
    return translations


def generate(model, source, schedule, routing, decode_config, vocab, bpe, noise,
             source_lang=None, target_lang=None, trace=False):
    return translate_corpus(model, [source], schedule, noise, decode_config, vocab, bpe,
                            source_lang, target_lang, routing=routing, trace=trace)[0]


def format_trace(translation, vocab):
    """One line per recorded step: 't<TAB>tokens', mask and pad spelled out."""
    lines = []
    for t, ids in translation.trace or []:
        lines.append(f"{t}\t" + " ".join(vocab.token_of[i] for i in ids))
    return "\n".join(lines)


def sweep_iterations(model, corpus, iteration_list, schedule, noise, decode_config, vocab, bpe,
                     routing=None, modes=("word", "bpe")):
    """Decode corpus once per iteration count; returns one EvalReport per count."""
    reports = []
    for n_iterations in iteration_list:
        config = replace(decode_config, n_iterations=n_iterations)
        translations = translate_corpus(model, corpus.sources, schedule, noise, config, vocab, bpe,
                                        corpus.source_lang, corpus.target_lang, routing=routing)
        report = evaluate_texts([t.hypothesis for t in translations], corpus.targets, bpe, modes,
                                n_iterations=min(n_iterations, schedule.T))
        logging.info(f"Sweep at {n_iterations} iterations: {report.summary()}")
        reports.append(report)
    return reports
