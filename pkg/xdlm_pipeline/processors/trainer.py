# processors/trainer.py
"""
Training loop shared by TDLM pretraining and translation fine-tuning
"""
import logging
import math
import os

import torch
from torch import nn
from torch.optim.lr_scheduler import LambdaLR

from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.exceptions import ConfigurationError, TrainingDivergedError
from xdlm_pipeline.model.checkpoint_manager import CheckpointManager
from xdlm_pipeline.model.denoiser import compute_loss
from xdlm_pipeline.processors.batching import BATCH_BUILDERS, encode_pairs, token_batches
from xdlm_pipeline.utils.loss_tracker import LossTracker

TASKS = tuple(BATCH_BUILDERS)


def lr_factor(step, warmup_steps):
    """Linear warmup to 1 over warmup_steps, then inverse-sqrt decay."""
    if warmup_steps <= 0:
        return 1.0 / math.sqrt(max(step, 1))
    step = max(step, 1)
    return min(step / warmup_steps, math.sqrt(warmup_steps / step))


def set_dropout(model, p):
    for module in model.modules():
        if isinstance(module, nn.Dropout):
            module.p = p
        elif isinstance(module, nn.MultiheadAttention):
            module.dropout = p


class Trainer:
    """Runs optimizer steps for one task and keeps the loss trace and checkpoints."""

    def __init__(self, model, vocab, bpe, schedule, noise, config, task,
                 output_dir=None, log_interval=100):
        if task not in TASKS:
            raise ConfigurationError(f"Unknown training task {task!r}, expected one of {TASKS}")
        config.validate(model.config.max_len)
        if len(vocab) != model.config.vocab_size:
            raise ConfigurationError(
                f"Model vocab_size {model.config.vocab_size} does not match vocabulary of {len(vocab)}"
            )
        if schedule.T + 1 != model.config.n_timesteps:
            raise ConfigurationError(
                f"Schedule has T={schedule.T} but the model embeds {model.config.n_timesteps} time steps"
            )
        self.model = model
        self.vocab = vocab
        self.bpe = bpe
        self.schedule = schedule
        self.noise = noise
        self.config = config
        self.task = task
        self.output_dir = output_dir
        self.log_interval = log_interval
        self.build_batch = BATCH_BUILDERS[task]
        self.last_checkpoint = None
        self.steps_done = 0

        trace_path = os.path.join(output_dir, Config.LOSS_TRACE_FILE) if output_dir else None
        self.tracker = LossTracker(trace_path)

        set_dropout(model, config.dropout)
        self.optimizer = torch.optim.AdamW(
            model.parameters(), lr=config.lr, betas=(0.9, 0.98), eps=1e-8,
            weight_decay=config.weight_decay,
        )
        self.scheduler = LambdaLR(self.optimizer, lambda index: lr_factor(index + 1, config.warmup_steps))

    def checkpoint(self, step):
        if not self.output_dir:
            return None
        path = os.path.join(self.output_dir, Config.DIR_STRUCTURE['checkpoints'],
                            f"{self.task}_step{step:07d}.pt")
        CheckpointManager.save_checkpoint(
            self.model, path, self.vocab.content_hash(), self.schedule.descriptor(), step, task=self.task,
            noise_kind=self.noise.variant,
        )
        self.last_checkpoint = path
        return path

    def _batch_for(self, encoded, indices, step):
        pairs = [encoded[i] for i in indices]
        return self.build_batch(pairs, self.vocab, self.bpe, self.schedule, self.noise, self.config, step)

    def train(self, corpus, n_steps, stop_when=None, check_every=250):
        """
        Run n_steps optimizer updates over corpus. stop_when(step), polled every
        check_every steps, ends training early when it returns True. Returns the
        LossTracker.
        """
        encoded = encode_pairs(corpus, self.vocab, self.bpe, self.config.max_len)
        if not encoded:
            raise ConfigurationError("Training corpus is empty")
        stream = token_batches(encoded, self.config.max_tokens_per_batch, self.config.seed)
        logging.info(f"Starting {self.task} training: {len(encoded)} pairs, {n_steps} steps, "
                     f"lr {self.config.lr}, warmup {self.config.warmup_steps}")

        last_step = n_steps
        for step in range(1, n_steps + 1):
            self._update(self._batch_for(encoded, next(stream), step), step)
            if self.config.checkpoint_interval and step % self.config.checkpoint_interval == 0 and step < n_steps:
                self.checkpoint(step)
            if stop_when is not None and step % check_every == 0 and step < n_steps and stop_when(step):
                logging.info(f"Stopping {self.task} training early at step {step}")
                last_step = step
                break

        self.steps_done = last_step
        self.checkpoint(last_step)
        self.tracker.save_tracking_df()
        logging.info(f"Finished {self.task} training after {last_step} steps")
        return self.tracker

    def _update(self, batch, step):
        lr = self.optimizer.param_groups[0]['lr']
        if len(batch) == 0:
            logging.warning(f"Step {step}: every pair in the batch was skipped")
            self.scheduler.step()
            return
        inputs, targets, loss_positions, true_length = batch.training_tensors()
        loss, token_loss, length_loss = compute_loss(
            self.model, inputs, targets, loss_positions, true_length, self.config.length_weight, train_mode=True
        )
        if not torch.isfinite(loss):
            logging.error(f"Non-finite loss {loss.item()} at step {step}; "
                          f"last checkpoint {self.last_checkpoint}")
            raise TrainingDivergedError(step, self.last_checkpoint)

        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.scheduler.step()
        self.tracker.log_step(step, token_loss.item(), length_loss.item(), lr)
        if step % self.log_interval == 0:
            logging.info(f"Step {step}: token loss {token_loss.item():.4f}, "
                         f"length loss {length_loss.item():.4f}, lr {lr:.2e}, {batch.n_tokens} tokens")


def train(model, corpus, task, config, n_steps, vocab, bpe, schedule, noise, output_dir=None):
    """Train model in place; returns (model, LossTracker)."""
    trainer = Trainer(model, vocab, bpe, schedule, noise, config, task, output_dir=output_dir)
    tracker = trainer.train(corpus, n_steps)
    return model, tracker
