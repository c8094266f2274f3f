# -*- coding: utf-8 -*-
"""Exceptions raised by the codec. The command line maps them to exit codes."""


class CodecError(Exception):
    """Base class for every error raised by the codec"""

    exit_code = 1


class ConfigurationError(CodecError, ValueError):
    """Invalid configuration, shape or parameter"""

    exit_code = 1


class StreamError(CodecError):
    """Streaming misuse: wrong chunk size, out-of-order input, truncated data"""

    exit_code = 2


class TokenError(CodecError, ValueError):
    """A token or digit lies outside its codebook"""

    exit_code = 3


class CorruptionError(CodecError):
    """A bitstream does not decode to a valid token sequence"""

    exit_code = 3


class NumericError(CodecError, ArithmeticError):
    """Non-finite value met where a finite one is required"""

    exit_code = 4


class TrainingError(NumericError):
    """Training produced a non-finite loss"""

    exit_code = 4


class MetricError(CodecError, ValueError):
    """A metric was asked for on an empty window"""

    exit_code = 4
