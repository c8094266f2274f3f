# -*- coding: utf-8 -*-
"""Causal building blocks with explicit streaming state.

Every layer takes (batch, channels, time) input. `forward` is `stream`
from a zero state. Kernels called on different lengths may round
differently, so the stacks in Codec.py always stream fixed-size groups.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.models.errors import ConfigurationError, StreamError


def _check_input(x, channels, name):
    if x.dim() != 3:
        raise ConfigurationError(f"{name} expects a 3D (batch, channels, time) tensor")
    if x.shape[1] != channels:
        raise ConfigurationError(
            f"{name} expects {channels} input channels, got {x.shape[1]}"
        )


def causal_conv1d(x, weight, bias=None, dilation=1, groups=1):
    """Cross-correlation with dilation*(k - 1) zeros of left padding"""
    context = dilation * (weight.shape[-1] - 1)
    return F.conv1d(
        F.pad(x, (context, 0)), weight, bias, dilation=dilation, groups=groups
    )


class CausalConv1d(nn.Module):
    def __init__(
        self, in_channels, out_channels, kernel_size, dilation=1, groups=1, bias=True
    ):
        super(CausalConv1d, self).__init__()
        self.in_channels = in_channels
        self.conv = nn.Conv1d(
            in_channels,
            out_channels,
            kernel_size,
            dilation=dilation,
            groups=groups,
            bias=bias,
        )
        self.context = dilation * (kernel_size - 1)

    def init_state(self, batch_size=1, dtype=None):
        dtype = self.conv.weight.dtype if dtype is None else dtype
        return torch.zeros(batch_size, self.in_channels, self.context, dtype=dtype)

    def stream(self, x, state):
        _check_input(x, self.in_channels, "CausalConv1d")
        padded = torch.cat([state, x], dim=-1)
        y = self.conv(padded)
        return y, padded[..., padded.shape[-1] - self.context:]

    def forward(self, x):
        y, _ = self.stream(x, self.init_state(x.shape[0], x.dtype))
        return y


class CausalDownsample1d(nn.Module):
    """Strided conv, kernel 2R and stride R.

    Output u sees inputs u*R - R .. u*R + R - 1, i.e. nothing past the end
    of its own R-frame group.
    """

    def __init__(self, in_channels, out_channels, rate):
        super(CausalDownsample1d, self).__init__()
        self.in_channels = in_channels
        self.rate = rate
        self.conv = nn.Conv1d(in_channels, out_channels, 2 * rate, stride=rate)

    def init_state(self, batch_size=1, dtype=None):
        dtype = self.conv.weight.dtype if dtype is None else dtype
        return torch.zeros(batch_size, self.in_channels, self.rate, dtype=dtype)

    def stream(self, x, state):
        _check_input(x, self.in_channels, "CausalDownsample1d")
        if x.shape[-1] % self.rate:
            raise StreamError(
                f"Downsampling needs a multiple of {self.rate} frames, got {x.shape[-1]}"
            )
        padded = torch.cat([state, x], dim=-1)
        return self.conv(padded), padded[..., padded.shape[-1] - self.rate:]

    def forward(self, x):
        y, _ = self.stream(x, self.init_state(x.shape[0], x.dtype))
        return y


class CausalUpsample1d(nn.Module):
    """Transposed conv, kernel 2R and stride R, keeping the first U*R outputs.

    The overlapping tail of the last input is carried to the next call and
    the bias is added once per output frame.
    """

    def __init__(self, in_channels, out_channels, rate):
        super(CausalUpsample1d, self).__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.rate = rate
        self.conv = nn.ConvTranspose1d(in_channels, out_channels, 2 * rate, stride=rate)

    def init_state(self, batch_size=1, dtype=None):
        dtype = self.conv.weight.dtype if dtype is None else dtype
        return torch.zeros(batch_size, self.out_channels, self.rate, dtype=dtype)

    def stream(self, x, state):
        _check_input(x, self.in_channels, "CausalUpsample1d")
        y = F.conv_transpose1d(x, self.conv.weight, None, stride=self.rate)
        y = torch.cat([y[..., : self.rate] + state, y[..., self.rate:]], dim=-1)
        n = x.shape[-1] * self.rate
        out = y[..., :n] + self.conv.bias.view(1, -1, 1)
        return out, y[..., n:]

    def forward(self, x):
        y, _ = self.stream(x, self.init_state(x.shape[0], x.dtype))
        return y


class GlobalResponseNorm(nn.Module):
    """GRN with statistics over channels of a single time step.

    Input is (batch, time, channels). Pooling over time would leak future
    frames into the present, so |x| stands in for the spatial L2 norm.
    """

    def __init__(self, channels, eps=1e-6):
        super(GlobalResponseNorm, self).__init__()
        self.gamma = nn.Parameter(torch.zeros(channels))
        self.beta = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        gx = x.abs()
        nx = gx / (gx.mean(dim=-1, keepdim=True) + self.eps)
        return self.gamma * (x * nx) + self.beta + x


class Mcnx2Block(nn.Module):
    """Causal ConvNeXt v2 block.

    x + project(GRN(GELU(expand(LayerNorm(dwconv(x)))))), all per time step
    except the depthwise causal conv.
    """

    def __init__(self, channels, kernel_size=7, expansion=3, eps=1e-6):
        super(Mcnx2Block, self).__init__()
        hidden = expansion * channels
        self.channels = channels
        self.dwconv = CausalConv1d(channels, channels, kernel_size, groups=channels)
        self.norm = nn.LayerNorm(channels, eps=eps)
        self.expand = nn.Linear(channels, hidden)
        self.act = nn.GELU()
        self.grn = GlobalResponseNorm(hidden)
        self.project = nn.Linear(hidden, channels)

    @property
    def context(self):
        return self.dwconv.context

    def init_state(self, batch_size=1, dtype=None):
        return self.dwconv.init_state(batch_size, dtype)

    def stream(self, x, state):
        h, state = self.dwconv.stream(x, state)
        h = h.transpose(1, 2)
        h = self.project(self.grn(self.act(self.expand(self.norm(h)))))
        return x + h.transpose(1, 2), state

    def forward(self, x):
        y, _ = self.stream(x, self.init_state(x.shape[0], x.dtype))
        return y


class Pointwise(nn.Module):
    """Per-time-step channel map (the 'linear layer' of the stacks)"""

    def __init__(self, in_channels, out_channels):
        super(Pointwise, self).__init__()
        self.in_channels = in_channels
        self.linear = nn.Linear(in_channels, out_channels)

    def init_state(self, batch_size=1, dtype=None):
        return None

    def stream(self, x, state):
        _check_input(x, self.in_channels, "Pointwise")
        return self.linear(x.transpose(1, 2)).transpose(1, 2), state

    def forward(self, x):
        y, _ = self.stream(x, None)
        return y
