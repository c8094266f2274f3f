# -*- coding: utf-8 -*-
import torch

from src.features.mdct import (
    DTYPE,
    AnalysisState,
    MdctConfig,
    MdctFrame,
    OlaState,
    analysis_push,
    synthesis_push,
)
from src.models.errors import ConfigurationError
from src.models.rsvq import rsvq_dequantize, rsvq_quantize


class CodecSession:
    """
    Streaming encoder and decoder around one codec model

    Audio is consumed in fixed chunks of w_s * R samples, one token frame
    per chunk, so any partition of the input into pushes gives the same
    tokens. Decoded audio lags the input by w_s samples (the overlap-add
    tail) and nothing is trimmed.

    ...

    Methods
    -------
    encode_push(samples)
        Buffers samples and returns the tokens (n, N_s + N_v) of every
        completed chunk
    encode_flush()
        Zero-pads and encodes a pending partial chunk
    decode_push(tokens)
        Returns w_s * R samples per token frame
        (only the first num_stages stages are used when it is set)
    """

    def __init__(self, model, mdct_cfg: MdctConfig, num_stages=None):
        if model.net_cfg.mdct_bins != mdct_cfg.frame_shift:
            raise ConfigurationError("The model and the MDCT disagree on the frame shift")
        self.model = model
        self.num_stages = num_stages
        self.mdct_cfg = mdct_cfg
        self.resample = model.net_cfg.resample
        self.chunk_samples = mdct_cfg.frame_shift * self.resample
        self.dtype = next(model.parameters()).dtype
        self.reset()

    @property
    def delay_samples(self):
        return self.mdct_cfg.frame_shift

    def reset(self):
        self.analysis = AnalysisState.reset(self.mdct_cfg)
        self.ola = OlaState.reset(self.mdct_cfg)
        self.encoder_state = self.model.encoder.init_state(1, self.dtype)
        self.decoder_state = self.model.decoder.init_state(1, self.dtype)
        self.pending = torch.zeros(0, dtype=DTYPE)
        self.samples_in = 0
        self.samples_out = 0
        self.frames_encoded = 0
        self.frames_decoded = 0

    def _encode_chunk(self, chunk):
        frames = [
            analysis_push(self.analysis, block, self.mdct_cfg).coefficients
            for block in chunk.split(self.mdct_cfg.frame_shift)
        ]
        x = torch.stack(frames, dim=1).unsqueeze(0).to(self.dtype)
        with torch.no_grad():
            z = self.model.encoder.stream_push(x, self.encoder_state)
            result = rsvq_quantize(z.transpose(1, 2), self.model.quantizer)
        self.frames_encoded += 1
        return result.tokens.reshape(-1, self.model.quantizer_cfg.num_stages)

    def encode_push(self, samples):
        samples = torch.as_tensor(samples, dtype=DTYPE).flatten()
        self.samples_in += samples.numel()
        self.pending = torch.cat([self.pending, samples])
        tokens = []
        while self.pending.numel() >= self.chunk_samples:
            chunk = self.pending[: self.chunk_samples]
            self.pending = self.pending[self.chunk_samples:]
            tokens.append(self._encode_chunk(chunk))
        return self._stack(tokens)

    def encode_flush(self):
        if self.pending.numel() == 0:
            return self._stack([])
        pad = self.chunk_samples - self.pending.numel()
        chunk = torch.cat([self.pending, torch.zeros(pad, dtype=DTYPE)])
        self.pending = torch.zeros(0, dtype=DTYPE)
        return self._stack([self._encode_chunk(chunk)])

    def decode_push(self, tokens):
        tokens = torch.as_tensor(tokens, dtype=torch.long)
        tokens = tokens.reshape(-1, self.model.quantizer_cfg.num_stages)
        out = []
        for frame_tokens in tokens:
            with torch.no_grad():
                z_hat = rsvq_dequantize(
                    frame_tokens.unsqueeze(0), self.model.quantizer, self.num_stages
                )
                frames = self.model.decoder.stream_push(
                    z_hat.unsqueeze(-1), self.decoder_state
                )
            for t in range(frames.shape[-1]):
                frame = MdctFrame(frames[0, :, t].to(DTYPE), self.ola.frames_emitted)
                out.append(synthesis_push(self.ola, frame, self.mdct_cfg))
            self.frames_decoded += 1
        samples = torch.cat(out) if out else torch.zeros(0, dtype=DTYPE)
        self.samples_out += samples.numel()
        return samples

    def _stack(self, tokens):
        if not tokens:
            return torch.zeros(0, self.model.quantizer_cfg.num_stages, dtype=torch.long)
        return torch.cat(tokens)
