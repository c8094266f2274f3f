# -*- coding: utf-8 -*-
"""Codebook health for the vector stages of the quantizer.

Usage is tracked as an exponential moving average of selection counts.
Codes that stay below the dead threshold for a whole window are replaced
by k-means centroids of the current batch of projected features.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.cluster import KMeans

from src.models.errors import ConfigurationError, MetricError, TokenError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CodebookHealthConfig:
    ema_decay: float = 0.99
    dead_fraction: float = 0.01
    window: int = 100
    kmeans_iterations: int = 10
    temperature: float = 1.0
    epsilon: float = 1e-10
    jitter: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigurationError("ema_decay must lie in (0, 1)")
        if self.window < 1 or self.kmeans_iterations < 1:
            raise ConfigurationError("window and kmeans_iterations must be positive")
        if self.temperature <= 0.0 or self.epsilon <= 0.0:
            raise ConfigurationError("temperature and epsilon must be positive")

    @classmethod
    def from_config(cls, cfg):
        return cls(
            ema_decay=float(cfg.ema_decay),
            dead_fraction=float(cfg.dead_fraction),
            window=int(cfg.window),
            kmeans_iterations=int(cfg.kmeans_iterations),
            temperature=float(cfg.temperature),
            epsilon=float(cfg.epsilon),
            jitter=float(cfg.get("jitter", 1e-3)),
        )


@dataclass
class UsageStats:
    """EMA of per-code selection counts; counts.sum() tracks total"""

    counts: torch.Tensor
    total: float = 0.0
    ema_decay: float = 0.99

    @classmethod
    def empty(cls, codebook_size, ema_decay=0.99):
        return cls(torch.zeros(codebook_size, dtype=torch.float64), 0.0, ema_decay)

    @property
    def codebook_size(self):
        return self.counts.numel()

    def posterior(self):
        """Normalised usage, uniform before the first update"""
        if self.total <= 0.0:
            return torch.full_like(self.counts, 1.0 / self.codebook_size)
        return self.counts / self.total

    def dead_threshold(self, dead_fraction):
        return dead_fraction * self.total / self.codebook_size


def batch_histogram(tokens, codebook_size):
    tokens = torch.as_tensor(tokens, dtype=torch.long).flatten()
    if tokens.numel() and (tokens.min() < 0 or tokens.max() >= codebook_size):
        raise TokenError(f"Token outside [0, {codebook_size})")
    return torch.bincount(tokens, minlength=codebook_size).double()


def fold_histogram(stats: UsageStats, histogram):
    """One EMA fold of an (already merged) histogram into the running stats"""
    histogram = torch.as_tensor(histogram, dtype=torch.float64)
    n = float(histogram.sum())
    if n == 0.0:
        return stats
    d = stats.ema_decay
    return dataclasses.replace(
        stats,
        counts=d * stats.counts + (1.0 - d) * histogram,
        total=d * stats.total + (1.0 - d) * n,
    )


def update_usage(stats: UsageStats, tokens):
    return fold_histogram(stats, batch_histogram(tokens, stats.codebook_size))


def _cluster_centres(features, k, seed, iterations, jitter):
    n = features.shape[0]
    if k <= n:
        kmeans = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=1,
            max_iter=iterations,
            random_state=seed,
        )
        kmeans.fit(features)
        return kmeans.cluster_centers_
    rng = np.random.default_rng(seed)
    picks = features[rng.integers(0, n, size=k)]
    return picks + jitter * rng.standard_normal(picks.shape)


def reinit_dead_codes(
    codebook,
    stats: UsageStats,
    batch_features,
    threshold,
    dead=None,
    seed=0,
    iterations=10,
    jitter=1e-3,
):
    """Replaces dead codevectors with cluster centres of the batch features.

    `dead` overrides the usage test (used by CodebookHealth to require a
    whole window below threshold). The codebook is modified in place and
    returned together with the number of replaced codes.
    """
    if dead is None:
        dead = stats.counts < threshold
    dead = torch.as_tensor(dead, dtype=torch.bool)
    count = int(dead.sum())
    if count == 0:
        return codebook, 0
    features = torch.as_tensor(batch_features).detach()
    features = features.reshape(-1, codebook.shape[-1])
    if features.shape[0] == 0:
        raise ConfigurationError("Cannot reinitialise codes from an empty batch")
    centres = _cluster_centres(
        features.double().cpu().numpy(), count, seed, iterations, jitter
    )
    with torch.no_grad():
        codebook.data[dead] = torch.as_tensor(centres, dtype=codebook.dtype)
    return codebook, count


def balancing_loss(stats: UsageStats, epsilon=1e-10):
    """Cross-entropy between the uniform prior and the usage posterior"""
    return -torch.log(stats.posterior() + epsilon).mean()


def soft_posterior(distances, temperature=1.0):
    """Batch mean of softmax(-d / T), a differentiable stand-in for usage"""
    probs = F.softmax(-distances / temperature, dim=-1)
    return probs.reshape(-1, probs.shape[-1]).mean(0)


def soft_balancing_loss(distances, temperature=1.0, epsilon=1e-10):
    return -torch.log(soft_posterior(distances, temperature) + epsilon).mean()


def commitment_loss(v_pre, v_selected, weight=0.25):
    """weight*|v - sg(q)|^2 + |sg(v) - q|^2, summed over the code dim"""
    encoder_term = (v_pre - v_selected.detach()).pow(2).sum(-1)
    codebook_term = (v_pre.detach() - v_selected).pow(2).sum(-1)
    return (weight * encoder_term + codebook_term).mean()


def cur(window_tokens, codebook_size):
    """Fraction of codes selected at least once over the window"""
    tokens = torch.as_tensor(window_tokens, dtype=torch.long).flatten()
    if tokens.numel() == 0:
        raise MetricError("CUR needs a non-empty token log")
    return torch.unique(tokens).numel() / float(codebook_size)


def token_entropy(window_tokens):
    """Empirical entropy of a token log in bits"""
    tokens = torch.as_tensor(window_tokens, dtype=torch.long).flatten()
    if tokens.numel() == 0:
        raise MetricError("Entropy needs a non-empty token log")
    _, counts = torch.unique(tokens, return_counts=True)
    p = counts.double() / tokens.numel()
    return float(-(p * torch.log2(p)).sum())


def bitrate_efficiency(token_logs, capacities):
    """Summed stage entropies over summed stage capacities, both in bits"""
    if len(token_logs) == 0 or len(token_logs) != len(capacities):
        raise MetricError("Need one non-empty token log per stage")
    entropy = sum(token_entropy(log) for log in token_logs)
    capacity_bits = sum(math.log2(c) for c in capacities)
    return entropy / capacity_bits


class CodebookHealth:
    """Usage tracking and dead-code reinitialisation for one vector stage"""

    def __init__(self, codebook_size, cfg=CodebookHealthConfig(), name="ivq"):
        self.cfg = cfg
        self.name = name
        self.stats = UsageStats.empty(codebook_size, cfg.ema_decay)
        self.dead_steps = torch.zeros(codebook_size, dtype=torch.long)

    def step(self, codebook, tokens, features, seed=0):
        """Folds one batch of tokens into the stats and revives stale codes"""
        self.stats = update_usage(self.stats, tokens)
        threshold = self.stats.dead_threshold(self.cfg.dead_fraction)
        below = self.stats.counts < threshold
        self.dead_steps = torch.where(
            below, self.dead_steps + 1, torch.zeros_like(self.dead_steps)
        )
        dead = self.dead_steps >= self.cfg.window
        _, count = reinit_dead_codes(
            codebook,
            self.stats,
            features,
            threshold,
            dead=dead,
            seed=seed,
            iterations=self.cfg.kmeans_iterations,
            jitter=self.cfg.jitter,
        )
        if count:
            # Revived codes restart at the uniform expectation
            revived = self.stats.counts.clone()
            revived[dead] = self.stats.total / self.stats.codebook_size
            self.stats = dataclasses.replace(
                self.stats, counts=revived, total=float(revived.sum())
            )
            self.dead_steps[dead] = 0
            logger.info(f"Reinitialised {count} dead codes in {self.name}")
        return count
