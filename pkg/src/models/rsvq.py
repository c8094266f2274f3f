# -*- coding: utf-8 -*-
"""Residual scalar-vector quantizer.

Scalar stages (bounded rounding onto fixed per-coordinate grids) come first
and code the coarse contour, vector stages (nearest codevector) refine the
residual. Both stage kinds project from the latent dimension D to their own
code space and back.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch
import torch.nn as nn

from src.models.errors import ConfigurationError, NumericError, TokenError

MAX_CAPACITY = 2 ** 62
RECONSTRUCTION_ATOL = 1e-12


@dataclass(frozen=True)
class SqStageConfig:
    levels: Tuple[int, ...]

    @property
    def capacity(self):
        return math.prod(self.levels)


@dataclass(frozen=True)
class IvqStageConfig:
    code_dim: int
    codebook_size: int
    improved: bool = True

    @property
    def capacity(self):
        return self.codebook_size


@dataclass(frozen=True)
class QuantizerConfig:
    """Full stage schedule: N_s scalar stages followed by N_v vector stages"""

    latent_dim: int
    sq_stages: Tuple[SqStageConfig, ...] = ()
    ivq_stages: Tuple[IvqStageConfig, ...] = ()
    offset_rule: str = "parity"
    name: str = "custom"

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be positive")
        if len(self.sq_stages) + len(self.ivq_stages) < 1:
            raise ConfigurationError("The quantizer needs at least one stage")
        if self.offset_rule not in ("parity", "printed"):
            raise ConfigurationError(f"Unknown offset rule {self.offset_rule!r}")
        for stage in self.sq_stages:
            if len(stage.levels) < 1 or any(level < 2 for level in stage.levels):
                raise ConfigurationError("Every SQ level count must be >= 2")
            if stage.capacity >= MAX_CAPACITY:
                raise ConfigurationError("SQ codebook too large for 64-bit tokens")
        for stage in self.ivq_stages:
            if stage.codebook_size < 2 or stage.code_dim < 1:
                raise ConfigurationError("IVQ stages need K >= 2 and M >= 1")

    @property
    def num_sq(self):
        return len(self.sq_stages)

    @property
    def num_ivq(self):
        return len(self.ivq_stages)

    @property
    def num_stages(self):
        return self.num_sq + self.num_ivq

    @property
    def capacities(self):
        """Codebook size of every stage in token order"""
        return [s.capacity for s in self.sq_stages] + [
            s.capacity for s in self.ivq_stages
        ]

    @classmethod
    def from_config(cls, cfg, latent_dim=None):
        """Builds the schedule from the `quantizer` config group"""
        sq = tuple(SqStageConfig(tuple(int(x) for x in s.levels)) for s in cfg.sq_stages)
        ivq = tuple(
            IvqStageConfig(
                int(s.code_dim), int(s.codebook_size), bool(s.get("improved", True))
            )
            for s in cfg.ivq_stages
        )
        return cls(
            latent_dim=int(latent_dim if latent_dim is not None else cfg.latent_dim),
            sq_stages=sq,
            ivq_stages=ivq,
            offset_rule=str(cfg.get("offset_rule", "parity")),
            name=str(cfg.get("name", "custom")),
        )


@dataclass
class TokenFrame:
    """One frame's code: SQ tokens then IVQ tokens"""

    sq_tokens: List[int] = field(default_factory=list)
    ivq_tokens: List[int] = field(default_factory=list)

    def as_list(self):
        return list(self.sq_tokens) + list(self.ivq_tokens)

    @classmethod
    def from_list(cls, tokens, cfg):
        tokens = [int(t) for t in tokens]
        return cls(tokens[: cfg.num_sq], tokens[cfg.num_sq:])

    def validate(self, cfg):
        if len(self.sq_tokens) != cfg.num_sq or len(self.ivq_tokens) != cfg.num_ivq:
            raise TokenError("Token frame does not match the stage schedule")
        for token, capacity in zip(self.as_list(), cfg.capacities):
            if not 0 <= token < capacity:
                raise TokenError(f"Token {token} outside [0, {capacity})")


@dataclass
class QuantizeResult:
    """Output of a full residual pass; tensors keep any leading batch dims"""

    z_hat: torch.Tensor
    tokens: torch.Tensor
    stage_outputs: List[torch.Tensor]
    residuals: List[torch.Tensor]
    ivq_inputs: List[torch.Tensor] = field(default_factory=list)
    ivq_selected: List[torch.Tensor] = field(default_factory=list)
    ivq_distances: List[torch.Tensor] = field(default_factory=list)

    @property
    def token_frame(self):
        if self.tokens.dim() != 1:
            raise ValueError("token_frame is only defined for a single latent vector")
        num_sq = len(self.stage_outputs) - len(self.ivq_inputs)
        tokens = [int(t) for t in self.tokens]
        return TokenFrame(tokens[:num_sq], tokens[num_sq:])


class RoundStraightThrough(torch.autograd.Function):
    """round() forward, identity backward"""

    @staticmethod
    def forward(ctx, x):
        return torch.round(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output


class SelectStraightThrough(torch.autograd.Function):
    """Returns the selected codevector exactly; gradient goes to the query"""

    @staticmethod
    def forward(ctx, query, selected):
        return selected.clone()

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output, None


def half_width(level):
    return 1.001 * (level - 1) / 2.0


def level_offset(level, rule="parity"):
    """Rounding offset for a level count.

    "printed" is |l mod 2 - 1/2|, which is 1/2 for both parities and shifts
    odd grids off centre; "parity" uses 1/2 for even and 0 for odd counts.
    """
    if rule == "printed":
        return abs(level % 2 - 0.5)
    return 0.5 if level % 2 == 0 else 0.0


def _check_finite(x, what):
    if not torch.isfinite(torch.as_tensor(x)).all():
        raise NumericError(f"Non-finite value in {what}")


def _grid_value(q, levels):
    return 2.0 * q / levels


def _integer_level(bounded, levels_int, straight_through=False):
    if straight_through:
        q = RoundStraightThrough.apply(bounded)
    else:
        q = torch.round(bounded)
    low = -(levels_int // 2)
    return torch.clamp(q, low.to(q.dtype), (levels_int - 1 + low).to(q.dtype))


def sq_bound_round(x, level, h=None, o=None):
    """2*round(tanh(x + atanh(o/h))*h - o)/l for a single coordinate"""
    h = half_width(level) if h is None else h
    o = level_offset(level) if o is None else o
    x = torch.as_tensor(x, dtype=torch.float64)
    _check_finite(x, "scalar quantizer input")
    bounded = torch.tanh(x + math.atanh(o / h)) * h - o
    levels_int = torch.as_tensor(level)
    q = _integer_level(bounded, levels_int)
    return _grid_value(q, torch.as_tensor(float(level), dtype=x.dtype))


def sq_tokenize(digits, levels):
    """Mixed-radix value of per-coordinate digits (first digit least significant)"""
    digits = torch.as_tensor(digits, dtype=torch.long)
    levels_t = torch.as_tensor(list(levels), dtype=torch.long)
    if digits.shape[-1] != levels_t.numel():
        raise TokenError("Digit count does not match the level count")
    if ((digits < 0) | (digits >= levels_t)).any():
        raise TokenError("Digit outside its level range")
    radix = torch.cumprod(torch.cat([torch.ones(1, dtype=torch.long), levels_t[:-1]]), 0)
    token = (digits * radix).sum(-1)
    return int(token) if token.dim() == 0 else token


def sq_detokenize(token, levels):
    """Inverse of sq_tokenize"""
    token = torch.as_tensor(token, dtype=torch.long)
    levels_t = torch.as_tensor(list(levels), dtype=torch.long)
    capacity = math.prod(int(level) for level in levels)
    if ((token < 0) | (token >= capacity)).any():
        raise TokenError(f"SQ token outside [0, {capacity})")
    radix = torch.cumprod(torch.cat([torch.ones(1, dtype=torch.long), levels_t[:-1]]), 0)
    return (token.unsqueeze(-1) // radix) % levels_t


class ScalarQuantizer(nn.Module):
    """Projection to B coordinates, bounded rounding, projection back to D"""

    def __init__(self, latent_dim, levels, offset_rule="parity"):
        super(ScalarQuantizer, self).__init__()
        self.levels = tuple(int(level) for level in levels)
        self.offset_rule = offset_rule
        num_dims = len(self.levels)
        self.down_proj = nn.Linear(latent_dim, num_dims, bias=False)
        self.up_proj = nn.Linear(num_dims, latent_dim, bias=False)

        levels_int = torch.tensor(self.levels, dtype=torch.long)
        h = torch.tensor(
            [half_width(level) for level in self.levels], dtype=torch.float64
        )
        o = torch.tensor(
            [level_offset(level, offset_rule) for level in self.levels],
            dtype=torch.float64,
        )
        self.register_buffer("levels_int", levels_int, persistent=False)
        self.register_buffer("levels_float", levels_int.double(), persistent=False)
        self.register_buffer("half_widths", h, persistent=False)
        self.register_buffer("offsets", o, persistent=False)
        self.register_buffer("shifts", torch.atanh(o / h), persistent=False)

        # The finite grid of every coordinate, indexed by digit
        max_level = max(self.levels)
        d = torch.arange(max_level, dtype=torch.long).unsqueeze(0)
        q = (d - (levels_int // 2).unsqueeze(1)).double()
        self.register_buffer(
            "grid", _grid_value(q, self.levels_float.unsqueeze(1)), persistent=False
        )

    @property
    def capacity(self):
        return math.prod(self.levels)

    def bound(self, s_prime):
        h = self.half_widths.to(s_prime.dtype)
        return torch.tanh(s_prime + self.shifts.to(s_prime.dtype)) * h - self.offsets.to(
            s_prime.dtype
        )

    def forward(self, s, straight_through=False):
        """Returns (s_hat, s_hat_prime, digits, token)"""
        _check_finite(s, "scalar quantizer input")
        s_prime = self.down_proj(s)
        _check_finite(s_prime, "scalar quantizer projection")
        q = _integer_level(self.bound(s_prime), self.levels_int, straight_through)
        s_hat_prime = _grid_value(q, self.levels_float.to(q.dtype))
        digits = q.detach().long() + self.levels_int // 2
        token = sq_tokenize(digits, self.levels)
        return self.up_proj(s_hat_prime), s_hat_prime, digits, token

    def decode(self, token):
        digits = sq_detokenize(token, self.levels)
        s_hat_prime = self.grid.gather(
            1, digits.reshape(-1, len(self.levels)).t()
        ).t().reshape(digits.shape).contiguous()
        return self.up_proj(s_hat_prime.to(self.up_proj.weight.dtype))


class VectorQuantizer(nn.Module):
    """Projection to M dims, nearest of K codevectors, projection back to D"""

    def __init__(self, latent_dim, code_dim, codebook_size, improved=True):
        super(VectorQuantizer, self).__init__()
        self.code_dim = code_dim
        self.codebook_size = codebook_size
        self.improved = improved
        self.down_proj = nn.Linear(latent_dim, code_dim, bias=False)
        self.up_proj = nn.Linear(code_dim, latent_dim, bias=False)
        bound = 1.0 / math.sqrt(code_dim)
        self.codebook = nn.Parameter(
            torch.empty(codebook_size, code_dim).uniform_(-bound, bound)
        )

    @property
    def capacity(self):
        return self.codebook_size

    def distances(self, v_prime):
        """Squared Euclidean distance to every codevector, shape (..., K)"""
        codebook = self.codebook
        return (
            v_prime.pow(2).sum(-1, keepdim=True)
            - 2.0 * torch.matmul(v_prime, codebook.t())
            + codebook.pow(2).sum(-1)
        )

    def forward(self, v, straight_through=False):
        """Returns (v_hat, v_prime, v_hat_prime, token, distances)"""
        _check_finite(v, "vector quantizer input")
        v_prime = self.down_proj(v)
        distances = self.distances(v_prime)
        # argmin returns the first minimum, so ties go to the lowest index
        token = torch.argmin(distances.detach(), dim=-1)
        selected = self.codebook[token]
        if straight_through:
            v_hat_prime = SelectStraightThrough.apply(v_prime, selected)
        else:
            v_hat_prime = selected
        return self.up_proj(v_hat_prime), v_prime, selected, token, distances

    def decode(self, token):
        token = torch.as_tensor(token, dtype=torch.long)
        if ((token < 0) | (token >= self.codebook_size)).any():
            raise TokenError(f"IVQ token outside [0, {self.codebook_size})")
        return self.up_proj(self.codebook[token])


class ResidualScalarVectorQuantizer(nn.Module):
    def __init__(self, cfg: QuantizerConfig):
        super(ResidualScalarVectorQuantizer, self).__init__()
        self.cfg = cfg
        self.sq_stages = nn.ModuleList(
            [
                ScalarQuantizer(cfg.latent_dim, s.levels, cfg.offset_rule)
                for s in cfg.sq_stages
            ]
        )
        self.ivq_stages = nn.ModuleList(
            [
                VectorQuantizer(cfg.latent_dim, s.code_dim, s.codebook_size, s.improved)
                for s in cfg.ivq_stages
            ]
        )

    def forward(self, z):
        """Straight-through training pass used by CodecModel"""
        return rsvq_forward_training(z, self)


def sq_quantize(s, p: ScalarQuantizer):
    """(s_hat, digits, token) for one SQ stage"""
    with torch.no_grad():
        s_hat, _, digits, token = p(torch.as_tensor(s, dtype=p.up_proj.weight.dtype))
    return s_hat, digits, token


def ivq_quantize(v, p: VectorQuantizer):
    """(v_hat, token) for one IVQ stage"""
    with torch.no_grad():
        v_hat, _, _, token, _ = p(torch.as_tensor(v, dtype=p.up_proj.weight.dtype))
    return v_hat, int(token) if token.dim() == 0 else token


def _residual_pass(z, quantizer, straight_through):
    # z_hat and the running residual are accumulated separately, so
    # z_hat + residuals[-1] matches z only up to float rounding
    # (RECONSTRUCTION_ATOL for unit-scale float64 latents).
    _check_finite(z, "latent")
    z_hat = torch.zeros_like(z)
    residual = z
    tokens, stage_outputs, residuals = [], [], []
    ivq_inputs, ivq_selected, ivq_distances = [], [], []
    for stage in quantizer.sq_stages:
        s_hat, _, _, token = stage(residual, straight_through)
        z_hat = z_hat + s_hat
        residual = residual - s_hat
        tokens.append(token)
        stage_outputs.append(s_hat)
        residuals.append(residual)
    for stage in quantizer.ivq_stages:
        v_hat, v_prime, selected, token, distances = stage(residual, straight_through)
        z_hat = z_hat + v_hat
        residual = residual - v_hat
        tokens.append(token)
        stage_outputs.append(v_hat)
        residuals.append(residual)
        ivq_inputs.append(v_prime)
        ivq_selected.append(selected)
        ivq_distances.append(distances)
    return QuantizeResult(
        z_hat=z_hat,
        tokens=torch.stack([torch.as_tensor(t) for t in tokens], dim=-1),
        stage_outputs=stage_outputs,
        residuals=residuals,
        ivq_inputs=ivq_inputs,
        ivq_selected=ivq_selected,
        ivq_distances=ivq_distances,
    )


def rsvq_quantize(z, quantizer: ResidualScalarVectorQuantizer) -> QuantizeResult:
    """SQ stages in order, then IVQ stages, each on the running residual"""
    with torch.no_grad():
        return _residual_pass(z, quantizer, straight_through=False)


def rsvq_forward_training(z, quantizer: ResidualScalarVectorQuantizer) -> QuantizeResult:
    """Same forward values as rsvq_quantize; rounding and codevector selection
    pass gradients straight through, everything else is differentiated exactly"""
    return _residual_pass(z, quantizer, straight_through=True)


def rsvq_dequantize(tokens, quantizer: ResidualScalarVectorQuantizer, num_stages=None):
    """Latent from tokens (..., N_s + N_v); num_stages keeps only the first stages"""
    cfg = quantizer.cfg
    if isinstance(tokens, TokenFrame):
        tokens.validate(cfg)
        tokens = tokens.as_list()
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    if tokens.shape[-1] != cfg.num_stages:
        raise TokenError(
            f"Expected {cfg.num_stages} tokens per frame, got {tokens.shape[-1]}"
        )
    num_stages = cfg.num_stages if num_stages is None else num_stages
    stages = list(quantizer.sq_stages) + list(quantizer.ivq_stages)
    dtype = stages[0].up_proj.weight.dtype
    z_hat = torch.zeros(tokens.shape[:-1] + (cfg.latent_dim,), dtype=dtype)
    with torch.no_grad():
        for index, stage in enumerate(stages[:num_stages]):
            z_hat = z_hat + stage.decode(tokens[..., index])
    return z_hat


def stage_names(cfg: QuantizerConfig):
    names = [f"sq{i + 1}" for i in range(cfg.num_sq)]
    names += [
        f"{'ivq' if s.improved else 'vq'}{j + 1}" for j, s in enumerate(cfg.ivq_stages)
    ]
    return names
