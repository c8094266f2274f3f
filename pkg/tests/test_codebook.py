# -*- coding: utf-8 -*-
import math

import pytest
import torch

from src.models.codebook import (
    CodebookHealth,
    CodebookHealthConfig,
    UsageStats,
    balancing_loss,
    batch_histogram,
    bitrate_efficiency,
    commitment_loss,
    cur,
    fold_histogram,
    reinit_dead_codes,
    soft_balancing_loss,
    soft_posterior,
    token_entropy,
    update_usage,
)
from src.models.errors import ConfigurationError, MetricError, TokenError


class TestUsage:
    def test_uniform_batch(self):
        stats = update_usage(UsageStats.empty(8), torch.arange(8).repeat(4))
        assert torch.allclose(stats.counts, torch.full((8,), 0.04, dtype=torch.float64))
        assert stats.total == pytest.approx(0.32)
        uniform = torch.full((8,), 1.0 / 8, dtype=torch.float64)
        assert torch.allclose(stats.posterior(), uniform)

    @pytest.mark.parametrize("steps", [1, 10, 200])
    def test_single_code_converges(self, steps):
        """EMA approaches one-hot geometrically with rate 1 - decay"""
        stats = UsageStats.empty(4, ema_decay=0.99)
        for _ in range(steps):
            stats = update_usage(stats, torch.tensor([3]))
        assert stats.counts[3].item() == pytest.approx(1.0 - 0.99 ** steps)
        assert stats.counts[:3].sum().item() == 0.0
        assert stats.posterior()[3].item() == pytest.approx(1.0)

    def test_empty_batch(self):
        stats = update_usage(UsageStats.empty(4), torch.tensor([1, 2]))
        assert fold_histogram(stats, torch.zeros(4)) is stats
        assert update_usage(stats, torch.zeros(0, dtype=torch.long)) is stats

    def test_counts_track_total(self):
        generator = torch.Generator().manual_seed(0)
        stats = UsageStats.empty(16)
        for _ in range(50):
            n = int(torch.randint(1, 40, (1,), generator=generator))
            stats = update_usage(stats, torch.randint(0, 16, (n,), generator=generator))
        assert stats.counts.sum().item() == pytest.approx(stats.total, rel=1e-12)

    def test_posterior_before_update(self):
        stats = UsageStats.empty(4)
        assert torch.equal(stats.posterior(), torch.full((4,), 0.25, dtype=torch.float64))
        assert stats.dead_threshold(0.01) == 0.0

    def test_histogram_range(self):
        assert batch_histogram(torch.tensor([0, 0, 3]), 4).tolist() == [2, 0, 0, 1]
        with pytest.raises(TokenError):
            batch_histogram(torch.tensor([4]), 4)


class TestReinit:
    def test_no_dead_codes(self):
        codebook = torch.randn(4, 2, dtype=torch.float64)
        before = codebook.clone()
        stats = UsageStats(torch.ones(4, dtype=torch.float64), 4.0)
        _, count = reinit_dead_codes(codebook, stats, torch.randn(10, 2), threshold=0.5)
        assert count == 0
        assert torch.equal(codebook, before)

    def test_all_dead_on_exactly_k_points(self):
        """k-means with k = n lands every centre on a feature"""
        features = torch.tensor(
            [[float(i), float(i * i % 5)] for i in range(8)], dtype=torch.float64
        )
        codebook = torch.zeros(8, 2, dtype=torch.float64)
        stats = UsageStats.empty(8)
        _, count = reinit_dead_codes(codebook, stats, features, threshold=1.0, seed=3)
        assert count == 8
        ordered = codebook[codebook[:, 0].argsort()]
        assert torch.allclose(ordered, features, rtol=0, atol=1e-9)

    def test_centroid_inside_cluster(self):
        generator = torch.Generator().manual_seed(1)
        centre = torch.tensor([3.0, -2.0, 0.5], dtype=torch.float64)
        spread = torch.randn(64, 3, generator=generator, dtype=torch.float64)
        features = centre + 0.01 * spread
        codebook = torch.zeros(4, 3, dtype=torch.float64)
        counts = torch.tensor([5.0, 0.0, 5.0, 5.0], dtype=torch.float64)
        stats = UsageStats(counts, 15.0)
        _, count = reinit_dead_codes(codebook, stats, features, threshold=1.0)

        assert count == 1
        low, high = features.min(0).values, features.max(0).values
        assert ((codebook[1] >= low) & (codebook[1] <= high)).all()
        # Live codes are left alone
        assert torch.equal(codebook[[0, 2, 3]], torch.zeros(3, 3, dtype=torch.float64))

    def test_more_dead_codes_than_features(self):
        features = torch.tensor([[1.0, 1.0], [-1.0, 2.0]], dtype=torch.float64)
        codebook = torch.full((6, 2), 100.0, dtype=torch.float64)
        _, count = reinit_dead_codes(
            codebook, UsageStats.empty(6), features, threshold=1.0, jitter=1e-3
        )
        assert count == 6
        nearest = torch.cdist(codebook, features).min(1).values
        assert (nearest < 0.01).all()

    def test_empty_features(self):
        with pytest.raises(ConfigurationError):
            reinit_dead_codes(
                torch.zeros(2, 2), UsageStats.empty(2), torch.zeros(0, 2), threshold=1.0
            )


class TestLosses:
    def test_uniform_balancing(self):
        stats = UsageStats(torch.ones(1024, dtype=torch.float64), 1024.0)
        assert balancing_loss(stats).item() == pytest.approx(math.log(1024), abs=1e-6)

    def test_one_hot_balancing(self):
        k, eps = 16, 1e-10
        counts = torch.zeros(k, dtype=torch.float64)
        counts[0] = 2.0
        loss = balancing_loss(UsageStats(counts, 2.0), eps).item()
        expected = -((k - 1) * math.log(eps) + math.log(1.0 + eps)) / k
        assert math.isfinite(loss)
        assert loss == pytest.approx(expected)

    def test_uniform_is_minimal(self):
        generator = torch.Generator().manual_seed(2)
        uniform = balancing_loss(UsageStats(torch.ones(32, dtype=torch.float64), 32.0))
        for _ in range(100):
            counts = torch.rand(32, generator=generator, dtype=torch.float64)
            stats = UsageStats(counts, float(counts.sum()))
            assert balancing_loss(stats) > uniform

    def test_soft_posterior(self):
        distances = torch.zeros(5, 7, dtype=torch.float64)
        posterior = soft_posterior(distances)
        assert torch.allclose(posterior, torch.full((7,), 1.0 / 7, dtype=torch.float64))
        loss = soft_balancing_loss(distances)
        assert loss.item() == pytest.approx(math.log(7), abs=1e-8)

    def test_soft_balancing_is_differentiable(self):
        distances = torch.rand(10, 8, dtype=torch.float64, requires_grad=True)
        soft_balancing_loss(distances, temperature=0.5).backward()
        assert distances.grad is not None
        assert torch.isfinite(distances.grad).all()

    def test_commitment_values(self):
        v = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64)
        assert commitment_loss(v, v.clone()).item() == 0.0
        shifted = v + torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
        assert commitment_loss(v, shifted, weight=0.25).item() == pytest.approx(1.25)

    def test_commitment_gradient(self):
        """d/dv of the loss is 2 weight (v - q)"""
        generator = torch.Generator().manual_seed(3)
        v = torch.randn(6, generator=generator, dtype=torch.float64, requires_grad=True)
        q = torch.randn(6, generator=generator, dtype=torch.float64, requires_grad=True)
        commitment_loss(v, q, weight=0.25).backward()
        assert torch.allclose(v.grad, 0.5 * (v - q).detach(), rtol=1e-12)
        assert torch.allclose(q.grad, 2.0 * (q - v).detach(), rtol=1e-12)


class TestUtilisation:
    def test_cur(self):
        assert cur(torch.arange(16), 16) == 1.0
        assert cur(torch.arange(8).repeat(3), 16) == 0.5
        with pytest.raises(MetricError):
            cur(torch.zeros(0, dtype=torch.long), 16)

    def test_entropy(self):
        assert token_entropy(torch.arange(1024)) == pytest.approx(10.0)
        assert token_entropy(torch.zeros(50, dtype=torch.long)) == 0.0

    def test_bitrate_efficiency(self):
        uniform = [torch.arange(1024)] * 3
        assert bitrate_efficiency(uniform, [1024] * 3) == pytest.approx(1.0)
        one_hot = [torch.zeros(100, dtype=torch.long)] * 3
        assert bitrate_efficiency(one_hot, [1024] * 3) == 0.0
        with pytest.raises(MetricError):
            bitrate_efficiency([], [])


class TestCodebookHealth:
    def test_revives_codes_after_window(self):
        """Codes below threshold for `window` steps are replaced and restart at total/K"""
        cfg = CodebookHealthConfig(window=3)
        health = CodebookHealth(4, cfg, name="ivq1")
        codebook = torch.nn.Parameter(torch.zeros(4, 2, dtype=torch.float64))
        generator = torch.Generator().manual_seed(4)
        features = torch.randn(10, 2, generator=generator, dtype=torch.float64)
        tokens = torch.zeros(10, dtype=torch.long)

        assert health.step(codebook, tokens, features) == 0
        assert health.step(codebook, tokens, features) == 0
        assert health.step(codebook, tokens, features) == 3
        assert torch.equal(codebook.data[0], torch.zeros(2, dtype=torch.float64))
        assert not torch.equal(codebook.data[1:], torch.zeros(3, 2, dtype=torch.float64))
        revived = health.stats.counts[1:]
        assert torch.allclose(revived, revived[0].expand(3))
        assert health.dead_steps.tolist() == [0, 0, 0, 0]

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            CodebookHealthConfig(ema_decay=1.0)
        with pytest.raises(ConfigurationError):
            CodebookHealthConfig(window=0)
        with pytest.raises(ConfigurationError):
            CodebookHealthConfig(temperature=0.0)
