"""Exception hierarchy shared across the package."""


class CaprnnError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(CaprnnError):
    """An operation was called with arguments that make no sense."""


class ConfigError(UsageError):
    """A model configuration is invalid."""


class DimensionError(CaprnnError):
    """Array shapes are incompatible; the message names both shapes."""


class VocabularyError(CaprnnError):
    """A token index falls outside the vocabulary."""

    def __init__(self, index, vocab_size):
        super().__init__(f"token index {index} out of range for vocabulary of size {vocab_size}")
        self.index = index
        self.vocab_size = vocab_size


class NumericError(CaprnnError):
    """A numeric operation produced or received a non-finite value."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss; carries epoch/batch context."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class FormatError(CaprnnError):
    """A file does not match its declared on-disk format."""


class IntegrityError(CaprnnError):
    """Dataset pieces are mutually inconsistent (e.g. an image with no features)."""
