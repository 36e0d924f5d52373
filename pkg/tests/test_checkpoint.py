import json
import os

import pytest
import torch

from xdlm_pipeline.exceptions import ConfigurationError, VocabularyMismatchError
from xdlm_pipeline.model.checkpoint_manager import CheckpointManager
from xdlm_pipeline.model.denoiser import build_model, forward
from tests.conftest import random_input, tiny_config


@pytest.fixture
def saved(tmp_path, vocab):
    model = build_model(tiny_config(len(vocab)), init_seed=9)
    path = str(tmp_path / "checkpoints" / "tdlm_step0000010.pt")
    CheckpointManager.save_checkpoint(model, path, vocab.content_hash(), "linear_mask:T=4", 10, task="tdlm",
                                     noise_kind="multinomial")
    return model, path


def test_round_trip_is_bit_identical(saved, vocab):
    model, path = saved
    loaded, metadata = CheckpointManager.load_checkpoint(path, vocab.content_hash())
    original, restored = model.state_dict(), loaded.state_dict()
    assert original.keys() == restored.keys()
    assert all(torch.equal(original[name], restored[name]) for name in original)
    assert loaded.config == model.config
    batch = random_input(model.config)
    assert torch.equal(forward(model, batch).logits, forward(loaded, batch).logits)
    assert metadata['step'] == 10


def test_sidecar_fields(saved, vocab):
    _, path = saved
    with open(os.path.splitext(path)[0] + ".json") as f:
        metadata = json.load(f)
    assert metadata['vocab_hash'] == vocab.content_hash()
    assert metadata['schedule'] == "linear_mask:T=4"
    assert metadata['task'] == "tdlm"
    assert metadata['model_config']['vocab_size'] == len(vocab)


def test_vocabulary_mismatch_refused(saved):
    _, path = saved
    with pytest.raises(VocabularyMismatchError):
        CheckpointManager.load_checkpoint(path, "0" * 64)


def test_latest_checkpoint_by_step(saved, vocab):
    model, path = saved
    directory = os.path.dirname(path)
    later = os.path.join(directory, "finetune_step0000003.pt")
    CheckpointManager.save_checkpoint(model, later, vocab.content_hash(), "linear_mask:T=4", 30)
    assert CheckpointManager.latest_checkpoint(directory) == later


def test_latest_checkpoint_empty_directory(tmp_path):
    assert CheckpointManager.latest_checkpoint(str(tmp_path)) is None


def test_noise_kind_recorded_and_checked(saved, vocab):
    _, path = saved
    assert CheckpointManager.load_metadata(path)['noise_kind'] == "multinomial"
    _, metadata = CheckpointManager.load_checkpoint(path, vocab.content_hash(), noise_kind="multinomial")
    assert metadata['step'] == 10
    with pytest.raises(ConfigurationError, match="multinomial noise, config has absorbing"):
        CheckpointManager.load_checkpoint(path, vocab.content_hash(), noise_kind="absorbing")
