# -*- coding: utf-8 -*-
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from src.models.errors import ConfigurationError, NumericError, StreamError

DTYPE = torch.float64


def sine_window(frame_shift, dtype=DTYPE):
    """Sine window of length 2*frame_shift (satisfies Princen-Bradley)"""
    n = torch.arange(2 * frame_shift, dtype=dtype)
    return torch.sin(math.pi * (n + 0.5) / (2 * frame_shift))


def mdct_basis(frame_shift, dtype=DTYPE):
    """(2*w_s, w_s) matrix of cos[(pi/w_s)(n + 1/2 + w_s/2)(k + 1/2)]"""
    n = torch.arange(2 * frame_shift, dtype=dtype).unsqueeze(1)
    k = torch.arange(frame_shift, dtype=dtype).unsqueeze(0)
    n0 = 0.5 + frame_shift / 2.0
    return torch.cos(math.pi / frame_shift * (n + n0) * (k + 0.5))


@dataclass
class MdctConfig:
    """Frame shift, window and cosine basis of the lapped transform"""

    frame_shift: int
    window: torch.Tensor = None
    basis: torch.Tensor = field(default=None, repr=False)

    def __post_init__(self):
        if self.frame_shift < 1:
            raise ConfigurationError("frame_shift must be positive")
        if self.window is None:
            self.window = sine_window(self.frame_shift)
        self.window = torch.as_tensor(self.window, dtype=DTYPE)
        if self.window.shape != (self.frame_length,):
            raise ConfigurationError(
                f"Expected a window of {self.frame_length} samples, "
                f"got {tuple(self.window.shape)}"
            )
        if ((self.window < 0) | (self.window > 1)).any():
            raise ConfigurationError("Window values must lie in [0, 1]")
        w_s = self.frame_shift
        pb = self.window[:w_s] ** 2 + self.window[w_s:] ** 2
        if (pb - 1.0).abs().max().item() > 1e-12:
            raise ConfigurationError("Window violates the Princen-Bradley condition")
        if self.basis is None:
            self.basis = mdct_basis(w_s)

    @property
    def frame_length(self):
        return 2 * self.frame_shift


@dataclass
class MdctFrame:
    coefficients: torch.Tensor
    frame_index: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise ConfigurationError("frame_index must be non-negative")
        if not torch.isfinite(self.coefficients).all():
            raise NumericError("MDCT coefficients must be finite")


@dataclass
class AnalysisState:
    """Previous w_s input samples (zero after reset) and the frame counter"""

    history: torch.Tensor
    frames_emitted: int = 0

    @classmethod
    def reset(cls, cfg):
        return cls(history=torch.zeros(cfg.frame_shift, dtype=DTYPE))


@dataclass
class OlaState:
    """Pending overlap tail of the previous synthesis block"""

    carry: torch.Tensor
    frames_emitted: int = 0

    @classmethod
    def reset(cls, cfg):
        return cls(carry=torch.zeros(cfg.frame_shift, dtype=DTYPE))


def mdct_forward(samples, cfg, frame_index=0):
    """MDCT-IV of one windowed block of 2*w_s samples"""
    samples = torch.as_tensor(samples, dtype=DTYPE)
    if samples.shape != (cfg.frame_length,):
        raise ConfigurationError(
            f"Expected a block of {cfg.frame_length} samples, "
            f"got {tuple(samples.shape)}"
        )
    coefficients = torch.matmul(samples * cfg.window, cfg.basis)
    return MdctFrame(coefficients, frame_index)


def imdct_frame(frame, cfg):
    """Windowed inverse transform of one frame, to be overlap-added"""
    coefficients = torch.as_tensor(frame.coefficients, dtype=DTYPE)
    if coefficients.shape != (cfg.frame_shift,):
        raise ConfigurationError(
            f"Expected {cfg.frame_shift} coefficients, got {tuple(coefficients.shape)}"
        )
    block = torch.matmul(cfg.basis, coefficients)
    return (2.0 / cfg.frame_shift) * cfg.window * block


def analysis_push(state, new_samples, cfg):
    """Consumes exactly w_s new samples and emits one frame"""
    new_samples = torch.as_tensor(new_samples, dtype=DTYPE)
    if new_samples.shape != (cfg.frame_shift,):
        raise StreamError(
            f"Analysis expects chunks of {cfg.frame_shift} samples, "
            f"got {tuple(new_samples.shape)}"
        )
    block = torch.cat([state.history, new_samples])
    frame = mdct_forward(block, cfg, frame_index=state.frames_emitted)
    state.history = new_samples.clone()
    state.frames_emitted += 1
    return frame


def synthesis_push(state, frame, cfg):
    """Overlap-adds one frame and emits w_s finished samples"""
    if frame.frame_index != state.frames_emitted:
        raise StreamError(
            f"Expected frame {state.frames_emitted}, got frame {frame.frame_index}"
        )
    block = imdct_frame(frame, cfg)
    w_s = cfg.frame_shift
    out = state.carry + block[:w_s]
    state.carry = block[w_s:].clone()
    state.frames_emitted += 1
    return out


def mdct_analysis(signal, cfg, flush=False):
    """Frames (T, w_s) of a whole signal, computed frame by frame.

    The signal is zero-padded to a multiple of w_s; with flush=True one extra
    zero chunk is appended so the last samples become fully overlapped.
    """
    signal = torch.as_tensor(signal, dtype=DTYPE).flatten()
    w_s = cfg.frame_shift
    pad = (-signal.numel()) % w_s
    if flush:
        pad += w_s
    signal = torch.cat([signal, torch.zeros(pad, dtype=DTYPE)])
    state = AnalysisState.reset(cfg)
    frames = [
        analysis_push(state, chunk, cfg).coefficients
        for chunk in signal.split(w_s)
    ]
    if not frames:
        return torch.zeros(0, w_s, dtype=DTYPE)
    return torch.stack(frames)


def imdct_synthesis(frames, cfg):
    """Samples from frames (T, w_s); output lags the analysis input by w_s"""
    frames = torch.as_tensor(frames, dtype=DTYPE)
    state = OlaState.reset(cfg)
    out = [
        synthesis_push(state, MdctFrame(coefficients, t), cfg)
        for t, coefficients in enumerate(frames)
    ]
    if not out:
        return torch.zeros(0, dtype=DTYPE)
    return torch.cat(out)


def export_frames_csv(frames, path):
    """Writes coefficient frames to CSV, one row per frame"""
    logger = logging.getLogger(__name__)
    frames = torch.as_tensor(frames, dtype=DTYPE)
    np.savetxt(path, frames.numpy(), delimiter=",", fmt="%.10e")
    logger.info(f"Wrote {frames.shape[0]} MDCT frames to {path}")


def mdct_frames(signals, cfg):
    """Batched analysis of signals (..., L) with L a multiple of w_s.

    Zero history is assumed before the first sample, as in mdct_analysis;
    returns (..., w_s, L / w_s), channel-first for the network.
    """
    signals = torch.as_tensor(signals, dtype=DTYPE)
    w_s = cfg.frame_shift
    if signals.shape[-1] % w_s:
        raise ConfigurationError(
            f"Signal length {signals.shape[-1]} is not a multiple of {w_s}"
        )
    padded = torch.cat([signals.new_zeros(signals.shape[:-1] + (w_s,)), signals], -1)
    blocks = padded.unfold(-1, 2 * w_s, w_s)
    return torch.matmul(blocks * cfg.window, cfg.basis).transpose(-1, -2)
