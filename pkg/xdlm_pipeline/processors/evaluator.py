# processors/evaluator.py
"""
Word-level and BPE-level scoring of decode output
"""
import logging
from dataclasses import asdict, dataclass

from xdlm_pipeline.data.corpus import read_lines
from xdlm_pipeline.data.tokenizer import bpe_encode
from xdlm_pipeline.exceptions import AlignmentError, ConfigurationError, EvaluationError
from xdlm_pipeline.utils.bleu import bleu, length_accuracy

EVAL_MODES = {'word': ("word",), 'bpe': ("bpe",), 'both': ("word", "bpe")}


@dataclass
class EvalReport:
    bleu_word: float = None
    bleu_bpe: float = None
    length_accuracy: float = 0.0
    n_sentences: int = 0
    n_iterations: int = None

    def validate(self):
        if self.n_sentences <= 0:
            raise EvaluationError("EvalReport needs at least one sentence")
        for name in ("bleu_word", "bleu_bpe"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 100.0 + 1e-9:
                raise EvaluationError(f"{name} {value} outside [0, 100]")
        return self

    def to_dict(self, digits=None):
        values = asdict(self)
        if digits is not None:
            values = {k: round(v, digits) if isinstance(v, float) else v for k, v in values.items()}
        return values

    def summary(self):
        def fmt(value):
            return "n/a" if value is None else f"{value:.2f}"
        return f"BLEU(word)={fmt(self.bleu_word)}, BLEU(bpe)={fmt(self.bleu_bpe)}"


def _modes(mode):
    if isinstance(mode, str):
        if mode not in EVAL_MODES:
            raise ConfigurationError(f"Unknown evaluation mode {mode!r}, expected one of {sorted(EVAL_MODES)}")
        return EVAL_MODES[mode]
    return tuple(mode)


def evaluate_texts(hypotheses, references, bpe=None, mode="both", n_iterations=None, smoothing="none"):
    """Score detokenized hypothesis lines against reference lines."""
    if len(hypotheses) != len(references):
        raise AlignmentError(f"{len(hypotheses)} hypotheses for {len(references)} references")
    modes = _modes(mode)
    report = EvalReport(length_accuracy=length_accuracy(hypotheses, references),
                        n_sentences=len(references), n_iterations=n_iterations)
    if "word" in modes:
        report.bleu_word = bleu([h.split() for h in hypotheses], [r.split() for r in references],
                                smoothing=smoothing)
    if "bpe" in modes:
        if bpe is None:
            raise ConfigurationError("BPE-level scoring needs a BPE model")
        report.bleu_bpe = bleu([bpe_encode(bpe, h) for h in hypotheses],
                               [bpe_encode(bpe, r) for r in references], smoothing=smoothing)
    return report.validate()


def evaluate(hypothesis_file, reference_file, bpe=None, mode="both", n_iterations=None):
    """Score two line-aligned files; misaligned files raise AlignmentError."""
    hypotheses = read_lines(hypothesis_file)
    references = read_lines(reference_file)
    if len(hypotheses) != len(references):
        logging.error(f"{hypothesis_file} has {len(hypotheses)} lines, {reference_file} has {len(references)}")
        raise AlignmentError(
            f"Line count mismatch: {hypothesis_file} has {len(hypotheses)} lines, "
            f"{reference_file} has {len(references)}"
        )
    report = evaluate_texts(hypotheses, references, bpe, mode, n_iterations)
    logging.info(f"Evaluated {report.n_sentences} sentences: {report.summary()}")
    return report
