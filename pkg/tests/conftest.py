import pytest
import torch

from xdlm_pipeline.config.run_config import DecodeConfig, TrainConfig
from xdlm_pipeline.data.corpus import synth_copy_corpus
from xdlm_pipeline.data.tokenizer import bpe_train, vocab_build
from xdlm_pipeline.diffusion.process import NoiseKind
from xdlm_pipeline.diffusion.schedule import make_schedule
from xdlm_pipeline.model.denoiser import ModelConfig, ModelInput, build_model


@pytest.fixture
def copy_corpus():
    return synth_copy_corpus(60, 1, 6, 6, seed=0)


@pytest.fixture
def bpe(copy_corpus):
    # no merges: every symbol "a".."f" becomes one subword "a</w>"
    return bpe_train([copy_corpus], 0)


@pytest.fixture
def vocab(bpe, copy_corpus):
    return vocab_build(bpe, [copy_corpus], ["src", "tgt"])


@pytest.fixture
def schedule():
    return make_schedule("linear_mask", 4)


@pytest.fixture
def absorbing(vocab):
    return NoiseKind.for_vocabulary("absorbing", vocab)


@pytest.fixture
def train_config():
    return TrainConfig(lr=1e-3, warmup_steps=2, dropout=0.0, max_tokens_per_batch=64, max_len=16,
                       length_weight=0.1, T=4, seed=5, checkpoint_interval=0)


@pytest.fixture
def decode_config():
    return DecodeConfig(n_iterations=4, length_beam=1, routing="topk", seed=11)


def tiny_config(vocab_size, n_timesteps=5, **overrides):
    values = dict(n_layers_enc=1, n_layers_dec=1, hidden=16, n_heads=2, ffn=32, max_len=16,
                  n_timesteps=n_timesteps, dropout=0.0, vocab_size=vocab_size, n_langs=2)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def tiny_model(vocab):
    return build_model(tiny_config(len(vocab)), init_seed=3)


def random_input(config, batch=2, enc_len=4, dec_len=3, seed=0, low=4):
    """Random ModelInput without padding; ids drawn from [low, vocab_size)."""
    g = torch.Generator().manual_seed(seed)
    ids = lambda length: torch.randint(low, config.vocab_size, (batch, length), generator=g)
    return ModelInput(
        encoder_ids=ids(enc_len),
        encoder_langs=torch.zeros((batch, enc_len), dtype=torch.long),
        encoder_positions=torch.arange(enc_len).repeat(batch, 1),
        encoder_padding=torch.zeros((batch, enc_len), dtype=torch.bool),
        decoder_ids=ids(dec_len),
        decoder_langs=torch.ones((batch, dec_len), dtype=torch.long),
        decoder_positions=torch.arange(dec_len).repeat(batch, 1),
        decoder_padding=torch.zeros((batch, dec_len), dtype=torch.bool),
        timestep=torch.randint(1, config.n_timesteps, (batch,), generator=g),
    )
