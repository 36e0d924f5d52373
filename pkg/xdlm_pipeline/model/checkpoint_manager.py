# model/checkpoint_manager.py
"""Checkpoint management: parameter blob plus JSON sidecar."""

import datetime
import glob
import json
import logging
import os

import torch

from xdlm_pipeline.exceptions import ConfigurationError, VocabularyMismatchError
from xdlm_pipeline.model.denoiser import DenoiserModel, ModelConfig


class CheckpointManager:
    """Saves and restores denoiser checkpoints, refusing vocabulary mismatches."""

    @staticmethod
    def sidecar_path(checkpoint_path):
        return os.path.splitext(checkpoint_path)[0] + ".json"

    @staticmethod
    def save_checkpoint(model, checkpoint_path, vocab_hash, schedule_descriptor, step, task=None, noise_kind=None):
        """
        Write the state dict to checkpoint_path and the metadata next to it.
        Returns the metadata dictionary.
        """
        os.makedirs(os.path.dirname(checkpoint_path) or ".", exist_ok=True)
        metadata = {
            'model_config': model.config.to_dict(),
            'vocab_hash': vocab_hash,
            'schedule': schedule_descriptor,
            'noise_kind': noise_kind,
            'step': step,
            'task': task,
            'dtype': str(next(model.parameters()).dtype).replace("torch.", ""),
            'timestamp': datetime.datetime.now().isoformat(),
        }
        tmp_path = checkpoint_path + ".tmp"
        torch.save(model.state_dict(), tmp_path)
        os.replace(tmp_path, checkpoint_path)
        with open(CheckpointManager.sidecar_path(checkpoint_path), 'w') as f:
            json.dump(metadata, f, indent=2)
        logging.info(f"Checkpoint saved: {checkpoint_path} (step {step})")
        return metadata

    @staticmethod
    def load_metadata(checkpoint_path):
        with open(CheckpointManager.sidecar_path(checkpoint_path)) as f:
            return json.load(f)

    @staticmethod
    def load_checkpoint(checkpoint_path, vocab_hash, noise_kind=None):
        """
        Restore a model from checkpoint_path. The stored vocabulary hash must
        equal vocab_hash, and a stored noise kind must equal noise_kind when
        one is given. Returns (model, metadata).
        """
        metadata = CheckpointManager.load_metadata(checkpoint_path)
        if metadata['vocab_hash'] != vocab_hash:
            logging.error(f"Vocabulary hash mismatch for {checkpoint_path}: "
                          f"{metadata['vocab_hash']} != {vocab_hash}")
            raise VocabularyMismatchError(
                f"{checkpoint_path} was trained with vocabulary {metadata['vocab_hash']}, "
                f"current vocabulary is {vocab_hash}"
            )
        stored_noise = metadata.get('noise_kind')
        if noise_kind is not None and stored_noise is not None and stored_noise != noise_kind:
            logging.error(f"Noise kind mismatch for {checkpoint_path}: {stored_noise} != {noise_kind}")
            raise ConfigurationError(
                f"{checkpoint_path} was trained with {stored_noise} noise, config has {noise_kind}"
            )
        model = DenoiserModel(ModelConfig.from_dict(metadata['model_config']))
        model = model.to(getattr(torch, metadata.get('dtype', 'float32')))
        model.load_state_dict(torch.load(checkpoint_path, map_location="cpu", weights_only=True))
        logging.info(f"Loaded checkpoint: {checkpoint_path} (step {metadata['step']})")
        return model, metadata

    @staticmethod
    def latest_checkpoint(directory):
        """Most recent checkpoint in a directory by recorded step, or None."""
        candidates = []
        for path in glob.glob(os.path.join(directory, "*.pt")):
            try:
                candidates.append((CheckpointManager.load_metadata(path)['step'], path))
            except (OSError, KeyError, json.JSONDecodeError) as e:
                logging.warning(f"Ignoring checkpoint without readable metadata {path}: {e}")
        return max(candidates)[1] if candidates else None
