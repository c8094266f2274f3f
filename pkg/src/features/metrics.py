# -*- coding: utf-8 -*-
"""Log-spectral distance and codebook utilisation reports."""
import json
import logging
from dataclasses import dataclass

import torch

from src.models.codebook import bitrate_efficiency, cur, token_entropy
from src.models.errors import ConfigurationError, MetricError
from src.models.rsvq import stage_names

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LsdConfig:
    frame_length: int = 512
    hop: int = 128
    power_floor: float = 1e-10

    def __post_init__(self):
        if not self.frame_length > self.hop > 0:
            raise ConfigurationError("LSD needs frame_length > hop > 0")
        if self.power_floor <= 0.0:
            raise ConfigurationError("power_floor must be positive")

    @classmethod
    def from_config(cls, cfg, sample_rate):
        return cls(
            frame_length=int(round(cfg.frame_ms * sample_rate / 1000.0)),
            hop=int(round(cfg.hop_ms * sample_rate / 1000.0)),
            power_floor=float(cfg.power_floor),
        )


def log_spectrogram(samples, cfg: LsdConfig):
    """(frames, bins) matrix of log10 magnitudes, power floored"""
    samples = torch.as_tensor(samples, dtype=torch.float64).flatten()
    if samples.numel() < cfg.frame_length:
        raise MetricError(
            f"Need at least {cfg.frame_length} samples, got {samples.numel()}"
        )
    spectrum = torch.stft(
        samples,
        n_fft=cfg.frame_length,
        hop_length=cfg.hop,
        window=torch.hann_window(cfg.frame_length, dtype=torch.float64),
        center=False,
        return_complex=True,
    )
    power = spectrum.abs().pow(2).clamp_min(cfg.power_floor)
    return 0.5 * torch.log10(power).t()


def lsd_per_frame(reference, estimate, cfg: LsdConfig):
    reference = torch.as_tensor(reference, dtype=torch.float64).flatten()
    estimate = torch.as_tensor(estimate, dtype=torch.float64).flatten()
    if reference.numel() != estimate.numel():
        raise MetricError(
            f"LSD inputs differ in length: {reference.numel()} vs {estimate.numel()}"
        )
    diff = log_spectrogram(reference, cfg) - log_spectrogram(estimate, cfg)
    return diff.pow(2).mean(dim=1).sqrt()


def lsd(reference, estimate, cfg: LsdConfig = LsdConfig()):
    """Mean over frames of the RMS log10-magnitude difference"""
    return float(lsd_per_frame(reference, estimate, cfg).mean())


def codebook_report(tokens, quantizer_cfg):
    """Per-stage CUR and entropy (bits) plus overall BE of a token log (..., S)"""
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    tokens = tokens.reshape(-1, quantizer_cfg.num_stages)
    if tokens.shape[0] == 0:
        raise MetricError("Codebook report needs at least one token frame")
    logs = [tokens[:, i] for i in range(quantizer_cfg.num_stages)]
    report = {"stages": {}}
    for name, log, capacity in zip(
        stage_names(quantizer_cfg), logs, quantizer_cfg.capacities
    ):
        report["stages"][name] = {
            "cur": cur(log, capacity),
            "entropy_bits": token_entropy(log),
        }
    report["be"] = bitrate_efficiency(logs, quantizer_cfg.capacities)
    report["frames"] = int(tokens.shape[0])
    return report


def format_report(record, style="text"):
    """One structured-text line for json, aligned key/value lines for text"""
    if style == "json":
        return json.dumps(record, sort_keys=True)
    lines = []

    def walk(prefix, value):
        if isinstance(value, dict):
            for key, item in value.items():
                walk(f"{prefix}{key}.", item)
        elif isinstance(value, float):
            lines.append(f"{prefix[:-1]}: {value:.6g}")
        else:
            lines.append(f"{prefix[:-1]}: {value}")

    walk("", record)
    return "\n".join(lines)
