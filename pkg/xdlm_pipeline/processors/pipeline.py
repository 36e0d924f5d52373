# processors/pipeline.py
"""
Orchestrates each command: logging, output directories, the config snapshot,
then the work itself, ending with a one-line result message.
"""
import logging
import os
import sys

import pandas as pd

from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.data.corpus import (
    DIGIT_WORDS, corpus_stats, load_parallel, load_tsv, save_parallel, split_corpus,
    synth_copy_corpus, synth_mapping_corpus,
)
from xdlm_pipeline.data.tokenizer import BpeModel, Vocabulary, bpe_train, vocab_build
from xdlm_pipeline.diffusion.process import NoiseKind, run_oracle_suite
from xdlm_pipeline.diffusion.schedule import NoiseSchedule, routing_probs, schedule_table
from xdlm_pipeline.exceptions import ConfigurationError
from xdlm_pipeline.model.checkpoint_manager import CheckpointManager
from xdlm_pipeline.model.denoiser import build_model
from xdlm_pipeline.processors.decoder import format_trace, sweep_iterations, translate_corpus
from xdlm_pipeline.processors.evaluator import evaluate
from xdlm_pipeline.processors.trainer import Trainer
from xdlm_pipeline.utils.file_utils import FileUtils
from xdlm_pipeline.utils.reporting import ReportGenerator

BPE_FILE = "bpe.codes"
VOCAB_FILE = "vocab.txt"


class TranslationPipeline:
    def __init__(self, run_config, output_dir):
        self.run_config = run_config
        self.output_dir = output_dir
        self.file_utils = FileUtils()

    def setup_logging(self):
        """Setup logging configuration"""
        FileUtils.create_directories(self.output_dir)
        logging.basicConfig(
            filename=os.path.join(self.output_dir, Config.LOG_FILE_NAME),
            level=getattr(logging, Config.LOG_LEVEL),
            format=Config.LOG_FORMAT,
            force=True,
        )
        self.file_utils.snapshot_config(self.run_config, self.output_dir)

    def _finish(self, result_message):
        logging.info(result_message)
        print(result_message)

    @staticmethod
    def load_corpus(source=None, target=None, tsv=None, source_lang="src", target_lang="tgt", split="train"):
        if tsv:
            FileUtils.require_paths(tsv)
            return load_tsv(tsv, source_lang, target_lang, split)
        if not (source and target):
            raise ConfigurationError("Give either --tsv or both --source and --target")
        FileUtils.require_paths(source, target)
        return load_parallel(source, target, source_lang, target_lang, split)

    def _load_tokenizer(self, bpe_path, vocab_path):
        FileUtils.require_paths(bpe_path, vocab_path)
        return BpeModel.load(bpe_path), Vocabulary.load(vocab_path)

    def _load_model(self, checkpoint, vocab):
        """Load a checkpoint file, or the latest checkpoint in a directory."""
        FileUtils.require_paths(checkpoint)
        if os.path.isdir(checkpoint):
            latest = CheckpointManager.latest_checkpoint(checkpoint)
            if latest is None:
                raise ConfigurationError(f"No checkpoints in {checkpoint}")
            logging.info(f"Using latest checkpoint {latest}")
            checkpoint = latest
        model, metadata = CheckpointManager.load_checkpoint(
            checkpoint, vocab.content_hash(), noise_kind=self.run_config['noise_kind']
        )
        schedule = NoiseSchedule.from_descriptor(metadata['schedule'])
        return model, schedule

    def prepare(self, corpus=None, synth=None, n_pairs=5000, n_valid=500, n_test=500,
                min_len=1, max_len=8, alphabet_size=8, source_lang="src", target_lang="tgt"):
        """Validate and describe a corpus, or write a synthetic one to data/."""
        self.setup_logging()
        seed = self.run_config.seed_for('data')
        if synth:
            total = n_pairs + n_valid + n_test
            if synth == "copy":
                full = synth_copy_corpus(total, min_len, max_len, alphabet_size, seed, source_lang, target_lang)
            elif synth == "mapping":
                full = synth_mapping_corpus(total, DIGIT_WORDS, min_len, max_len, seed, source_lang, target_lang)
            else:
                raise ConfigurationError(f"Unknown synthetic corpus {synth!r}")
            splits = split_corpus(full, n_valid, n_test)
            for part in splits:
                save_parallel(part, os.path.join(self.output_dir, Config.DIR_STRUCTURE['data'], part.split))
        else:
            splits = (corpus,)

        stats = [corpus_stats(part) for part in splits]
        ReportGenerator.write_json(stats, self.output_dir, "corpus_stats")
        self._finish("Prepare complete. " + "; ".join(
            f"{s['split']}: {s['n_pairs']} pairs ({s['n_dropped']} dropped), "
            f"{s['src_tokens']}/{s['tgt_tokens']} tokens" for s in stats
        ))
        return stats

    def bpe_train(self, corpora, languages=None):
        self.setup_logging()
        merges = self.run_config['bpe_merges']
        model = bpe_train(corpora, merges)
        languages = languages or list(dict.fromkeys(lang for c in corpora for lang in (c.source_lang, c.target_lang)))
        vocab = vocab_build(model, corpora, languages)
        model.save(os.path.join(self.output_dir, BPE_FILE))
        vocab.save(os.path.join(self.output_dir, VOCAB_FILE))
        self._finish(f"BPE training complete. {len(model.merges)} merges, vocabulary of {len(vocab)} "
                     f"(hash {vocab.content_hash()})")
        return model, vocab

    def train(self, task, corpus, bpe_path, vocab_path, init_checkpoint=None, from_scratch=False, n_steps=None):
        """Pretrain (task 'tdlm') or fine-tune (task 'finetune'); returns the final checkpoint path."""
        if task == "finetune" and not init_checkpoint and not from_scratch:
            raise ConfigurationError("finetune needs --init-checkpoint, or --from-scratch to train without one")
        self.setup_logging()
        bpe, vocab = self._load_tokenizer(bpe_path, vocab_path)
        schedule = self.run_config.schedule()
        noise = NoiseKind.for_vocabulary(self.run_config['noise_kind'], vocab)
        if init_checkpoint:
            model, init_schedule = self._load_model(init_checkpoint, vocab)
            if init_schedule.T != schedule.T:
                raise ConfigurationError(
                    f"{init_checkpoint} was trained with T={init_schedule.T}, config has T={schedule.T}"
                )
        else:
            model = build_model(self.run_config.model_config(len(vocab), len(vocab.languages)),
                                self.run_config.seed_for('model'))
        config = self.run_config.train_config(task)
        n_steps = self.run_config['train_steps'] if n_steps is None else n_steps

        trainer = Trainer(model, vocab, bpe, schedule, noise, config, task, output_dir=self.output_dir)
        tracker = trainer.train(corpus, n_steps)
        frame = tracker.frame
        final_loss = frame['token_loss'].iloc[-1] if len(frame) else float('nan')
        self._finish(f"{task} training complete. {n_steps} steps, final token loss {final_loss:.4f}, "
                     f"checkpoint {trainer.last_checkpoint}")
        return trainer.last_checkpoint

    def generate(self, checkpoint, bpe_path, vocab_path, sources, output_path=None, trace_path=None,
                 source_lang=None, target_lang=None, n_iterations=None):
        self.setup_logging()
        bpe, vocab = self._load_tokenizer(bpe_path, vocab_path)
        model, schedule = self._load_model(checkpoint, vocab)
        noise = NoiseKind.for_vocabulary(self.run_config['noise_kind'], vocab)
        decode_config = self.run_config.decode_config()
        if n_iterations is not None:
            decode_config.n_iterations = n_iterations
            decode_config.validate()
        translations = translate_corpus(
            model, sources, schedule, noise, decode_config, vocab, bpe, source_lang, target_lang,
            routing=routing_probs(schedule, noise), trace=bool(trace_path),
        )
        hypotheses = [t.hypothesis for t in translations]
        if output_path:
            FileUtils.write_lines(output_path, hypotheses)
        else:
            sys.stdout.writelines(f"{h}\n" for h in hypotheses)
        if trace_path:
            blocks = [f"# {i}\t{t.source}\n{format_trace(t, vocab)}" for i, t in enumerate(translations)]
            FileUtils.write_lines(trace_path, blocks)
        message = f"Generate complete. {len(translations)} sentences, {decode_config.n_iterations} iterations"
        logging.info(message)
        if output_path:
            print(message)
        return translations

    def evaluate(self, hypothesis_file, reference_file, bpe_path=None, mode="both"):
        self.setup_logging()
        FileUtils.require_paths(hypothesis_file, reference_file, bpe_path)
        bpe = BpeModel.load(bpe_path) if bpe_path else None
        report = evaluate(hypothesis_file, reference_file, bpe, mode)
        ReportGenerator.generate_eval_report([report], self.output_dir)
        self._finish(report.summary())
        return report

    def sweep(self, checkpoint, bpe_path, vocab_path, corpus, iteration_list, with_schedule_table=False):
        self.setup_logging()
        bpe, vocab = self._load_tokenizer(bpe_path, vocab_path)
        model, schedule = self._load_model(checkpoint, vocab)
        noise = NoiseKind.for_vocabulary(self.run_config['noise_kind'], vocab)
        routing = routing_probs(schedule, noise)
        reports = sweep_iterations(model, corpus, iteration_list, schedule, noise,
                                   self.run_config.decode_config(), vocab, bpe, routing=routing)
        ReportGenerator.generate_eval_report(reports, self.output_dir, name="sweep")
        ReportGenerator.generate_table(
            pd.DataFrame({'n_iterations': [r.n_iterations for r in reports],
                          'bleu_word': [r.bleu_word for r in reports],
                          'bleu_bpe': [r.bleu_bpe for r in reports]}),
            self.output_dir, "sweep_plot_data",
        )
        if with_schedule_table:
            ReportGenerator.generate_table(schedule_table(schedule, routing), self.output_dir, "schedule_table")
        self._finish("Sweep complete. " + ", ".join(
            f"{r.n_iterations}: {r.bleu_word:.2f}" for r in reports
        ))
        return reports

    def oracle_check(self, max_vocab=5, max_length=3, max_T=4):
        self.setup_logging()
        n_checked, violations, worst = run_oracle_suite(max_vocab, max_length, max_T)
        for violation in violations[:20]:
            logging.error(f"Oracle violation: {violation}")
        self._finish(f"Oracle check complete. {n_checked} checks, {len(violations)} violations, "
                     f"worst total variation {worst:.3e}")
        return violations
