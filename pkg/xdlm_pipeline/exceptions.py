"""
Exception hierarchy for the translation pipeline
"""


class XdlmError(Exception):
    """Base class for every error raised by the pipeline."""


class ConfigurationError(XdlmError, ValueError):
    """Invalid configuration value or unknown identifier."""


class AlignmentError(XdlmError):
    """Parallel files or hypothesis/reference files are not line-aligned."""


class CorpusEncodingError(XdlmError):
    """A corpus file contains bytes that are not valid UTF-8."""


class DecodeError(XdlmError):
    """A token id cannot be mapped back to a token."""


class StepError(XdlmError, ValueError):
    """A diffusion step index is outside the schedule range, or its routing probabilities leave [0, 1]."""


class InconsistencyError(XdlmError):
    """A (x_t, x_0) combination has zero probability under the forward process."""


class ShapeError(XdlmError, ValueError):
    """Sequence lengths or tensor shapes disagree."""


class OracleScaleError(XdlmError):
    """The enumeration oracle was asked for an instance it cannot enumerate."""


class EvaluationError(XdlmError):
    """BLEU or report computation received unusable input."""


class VocabularyMismatchError(XdlmError):
    """A checkpoint was trained with a different vocabulary."""


class TrainingDivergedError(XdlmError):
    """The training loss became non-finite."""

    def __init__(self, step, checkpoint_path=None):
        self.step = step
        self.checkpoint_path = checkpoint_path
        message = f"non-finite loss at step {step}"
        if checkpoint_path:
            message += f"; last checkpoint kept at {checkpoint_path}"
        super().__init__(message)
