# -*- coding: utf-8 -*-
import logging

import numpy as np
import soundfile as sf
import torch

from src.models.errors import ConfigurationError, StreamError

SUBTYPES = {"int16": "PCM_16", "float32": "FLOAT"}


def read_wav(path, sample_rate=None):
    """Mono 16-bit PCM or 32-bit float WAV as float64 samples in [-1, 1]"""
    logger = logging.getLogger(__name__)
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise StreamError(f"Cannot read {path}: {e}")
    if info.channels != 1:
        raise ConfigurationError(
            f"Expected mono audio, {path} has {info.channels} channels"
        )
    if info.subtype not in SUBTYPES.values():
        raise ConfigurationError(
            f"Unsupported sample format {info.subtype}, expected PCM_16 or FLOAT"
        )
    if sample_rate is not None and info.samplerate != sample_rate:
        raise ConfigurationError(
            f"{path} is sampled at {info.samplerate} Hz, "
            f"the codec runs at {sample_rate} Hz"
        )
    samples, rate = sf.read(str(path), dtype="float64", always_2d=True)
    logger.info(f"Read {samples.shape[0]} samples at {rate} Hz from {path}")
    return torch.from_numpy(samples[:, 0].copy()), rate


def write_wav(path, samples, sample_rate, sample_format="float32"):
    if sample_format not in SUBTYPES:
        raise ConfigurationError(f"Unknown sample format {sample_format!r}")
    samples = torch.as_tensor(samples, dtype=torch.float64).flatten().numpy()
    if sample_format == "int16":
        samples = np.clip(samples, -1.0, 1.0 - 1.0 / 32768)
    sf.write(
        str(path),
        samples.astype(np.float32),
        int(sample_rate),
        subtype=SUBTYPES[sample_format],
        format="WAV",
    )
