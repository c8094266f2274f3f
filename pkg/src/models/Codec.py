# -*- coding: utf-8 -*-
import logging
from dataclasses import dataclass, field
from typing import List

import torch
import torch.nn as nn

from src.models.errors import ConfigurationError, StreamError
from src.models.layers import (
    CausalConv1d,
    CausalDownsample1d,
    CausalUpsample1d,
    Mcnx2Block,
    Pointwise,
)
from src.models.rsvq import (
    QuantizerConfig,
    ResidualScalarVectorQuantizer,
    rsvq_dequantize,
    rsvq_quantize,
)


@dataclass(frozen=True)
class CodecNetConfig:
    mdct_bins: int = 40
    hidden: int = 64
    latent_dim: int = 32
    resample: int = 8
    num_blocks: int = 8
    kernel_size: int = 7
    io_kernel_size: int = 7
    expansion: int = 3

    def __post_init__(self):
        for name in (
            "mdct_bins",
            "hidden",
            "latent_dim",
            "resample",
            "kernel_size",
            "io_kernel_size",
            "expansion",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.num_blocks < 0:
            raise ConfigurationError("num_blocks must be non-negative")

    @classmethod
    def from_config(cls, network_cfg, mdct_bins, resample):
        return cls(
            mdct_bins=int(mdct_bins),
            hidden=int(network_cfg.hidden),
            latent_dim=int(network_cfg.latent_dim),
            resample=int(resample),
            num_blocks=int(network_cfg.num_blocks),
            kernel_size=int(network_cfg.kernel_size),
            io_kernel_size=int(network_cfg.io_kernel_size),
            expansion=int(network_cfg.expansion),
        )


@dataclass
class StreamState:
    """Left context of every layer plus the number of frames consumed"""

    buffers: List[torch.Tensor] = field(default_factory=list)
    frames_in: int = 0

    def size(self):
        """Number of buffered values; bounded by the receptive field"""
        return sum(b.numel() for b in self.buffers if b is not None)


class _CausalStack(nn.Module):
    step = 1

    def init_state(self, batch_size=1, dtype=None):
        return StreamState([layer.init_state(batch_size, dtype) for layer in self.layers])

    def stream_push(self, x, state: StreamState):
        """
        Pushes the next frames through every layer, updating state in place

        The input is cut into groups of `step` frames and each group runs
        through the whole stack on its own, so every kernel call sees the
        same shapes whatever the push size.
        """
        if x.dim() == 2:
            x = x.unsqueeze(0)
        if x.shape[-1] % self.step:
            raise StreamError(
                f"Push a multiple of {self.step} frames, got {x.shape[-1]}"
            )
        outputs = []
        for group in x.split(self.step, dim=-1):
            for index, layer in enumerate(self.layers):
                group, state.buffers[index] = layer.stream(group, state.buffers[index])
            state.frames_in += group.shape[-1]
            outputs.append(group)
        if not outputs:
            return self._empty(x)
        return torch.cat(outputs, dim=-1)

    def _empty(self, x):
        out_channels = self.layers[-1].conv.out_channels
        return x.new_zeros(x.shape[0], out_channels, 0)

    def forward(self, x):
        if x.dim() != 3:
            raise ConfigurationError("Expected a 3D (batch, channels, time) tensor")
        return self.stream_push(x, self.init_state(x.shape[0], x.dtype))


class CausalEncoder(_CausalStack):
    """conv_in, MCNX2 blocks, linear, down by R, conv_out: (B, w_s, T) -> (B, D, T/R)"""

    def __init__(self, cfg: CodecNetConfig):
        super(CausalEncoder, self).__init__()
        self.cfg = cfg
        self.step = cfg.resample
        self.layers = nn.ModuleList(
            [CausalConv1d(cfg.mdct_bins, cfg.hidden, cfg.io_kernel_size)]
            + [
                Mcnx2Block(cfg.hidden, cfg.kernel_size, cfg.expansion)
                for _ in range(cfg.num_blocks)
            ]
            + [
                Pointwise(cfg.hidden, cfg.hidden),
                CausalDownsample1d(cfg.hidden, cfg.hidden, cfg.resample),
                CausalConv1d(cfg.hidden, cfg.latent_dim, cfg.io_kernel_size),
            ]
        )

    @property
    def receptive_field(self):
        """Input frames that one latent frame depends on"""
        c = self.cfg
        frame_rate_context = (c.io_kernel_size - 1) + c.num_blocks * (c.kernel_size - 1)
        return (
            frame_rate_context
            + 2 * c.resample
            + (c.io_kernel_size - 1) * c.resample
        )


class CausalDecoder(_CausalStack):
    """conv_in, up by R, linear, MCNX2 blocks, conv_out: (B, D, U) -> (B, w_s, U*R)"""

    def __init__(self, cfg: CodecNetConfig):
        super(CausalDecoder, self).__init__()
        self.cfg = cfg
        self.layers = nn.ModuleList(
            [
                CausalConv1d(cfg.latent_dim, cfg.hidden, cfg.io_kernel_size),
                CausalUpsample1d(cfg.hidden, cfg.hidden, cfg.resample),
                Pointwise(cfg.hidden, cfg.hidden),
            ]
            + [
                Mcnx2Block(cfg.hidden, cfg.kernel_size, cfg.expansion)
                for _ in range(cfg.num_blocks)
            ]
            + [CausalConv1d(cfg.hidden, cfg.mdct_bins, cfg.io_kernel_size)]
        )


class CodecModel(nn.Module):
    """Encoder, residual scalar-vector quantizer and decoder"""

    def __init__(self, net_cfg: CodecNetConfig, quantizer_cfg: QuantizerConfig):
        super(CodecModel, self).__init__()
        if net_cfg.latent_dim != quantizer_cfg.latent_dim:
            raise ConfigurationError(
                "The quantizer latent dim must match the network latent dim"
            )
        self.net_cfg = net_cfg
        self.quantizer_cfg = quantizer_cfg
        self.encoder = CausalEncoder(net_cfg)
        self.quantizer = ResidualScalarVectorQuantizer(quantizer_cfg)
        self.decoder = CausalDecoder(net_cfg)

    def forward(self, frames):
        """Training pass: (B, w_s, T) -> (decoded frames, QuantizeResult)"""
        z = self.encoder(frames).transpose(1, 2)
        result = self.quantizer(z)
        return self.decoder(result.z_hat.transpose(1, 2)), result

    def encode(self, frames):
        """Tokens (B, U, N_s + N_v) of MDCT frames (B, w_s, T)"""
        with torch.no_grad():
            z = self.encoder(frames).transpose(1, 2)
            return rsvq_quantize(z, self.quantizer).tokens

    def decode(self, tokens, num_stages=None):
        with torch.no_grad():
            z_hat = rsvq_dequantize(tokens, self.quantizer, num_stages)
            return self.decoder(z_hat.transpose(1, 2))

    def parameter_count(self):
        return sum(p.numel() for p in self.parameters())


def build_model(net_cfg, quantizer_cfg, seed=0, dtype=torch.float64):
    """Seeded, freshly initialised model"""
    logger = logging.getLogger(__name__)
    torch.manual_seed(seed)
    model = CodecModel(net_cfg, quantizer_cfg).to(dtype)
    logger.info(
        f"Built codec with {model.parameter_count()} parameters "
        f"({quantizer_cfg.name} quantizer)"
    )
    return model
